"""Utilities for configuring Blaze MapReduce options.

This module registers the global options of Blaze MapReduce in the Pandas option
registry, under the `blaze.` prefix. Options cover the transport backend, the engine's
cache and table sizes, the dense-path threshold, and how progress is displayed.
"""

import os
from typing import Any, Callable, Dict, List, Union

import pandas as pd
import pandas._config.config as cf

from .errors import ConfigError

BACKENDS = ["threads", "sockets"]


# -----------------------
# Helpers
# -----------------------
def _set_option(option: str, value: Any) -> None:
    """Updates the value of a Blaze option in the global Pandas option registry.

    Args:
        option: The name of the option to set, with or without the `blaze.` prefix.
        value: The value to set for the option.

    Returns:
        None

    Raises:
        AttributeError: If the `option` is not a valid Blaze option.
    """
    blaze_option = (
        option if option.startswith("blaze.") else "blaze." + option
    )  # Fully qualified
    if blaze_option in pd._config.config._select_options("blaze"):
        pd.set_option(blaze_option, value)
    else:
        raise AttributeError(
            f"No Blaze option for {blaze_option}. Available options: {pd._config.config._select_options('blaze')}"
        )


def _register_option(
    name: str, default_value: Any, description: str, validator: Callable
) -> None:
    """Registers a Blaze option in the global Pandas option registry.

    If the option has already been registered, reset its value.

    Args:
        name: The name of the option to register.
        default_value: The default value for the option.
        description: A description of the option.
        validator: A function to validate the option value.

    Returns:
        None

    Note:
        For more details on the arguments, see the documentation for
        pandas._config.config.register_option()
    """
    key_name = name if "blaze." not in name else name.replace("blaze.", "")

    # Option already registered?
    try:
        pd.get_option(f"blaze.{key_name}")
        pd.set_option(f"blaze.{key_name}", default_value)  # Reset its value
    # Option not registered yet?
    except pd.errors.OptionError:
        with cf.config_prefix("blaze"):
            cf.register_option(key_name, default_value, description, validator)


def _is_power_of_two(value: Any) -> None:
    """Validator for table capacities, which are masked instead of taken modulo."""
    if not isinstance(value, int) or value < 1 or value & (value - 1):
        raise ValueError(f"Expected a positive power of two, got {value!r}")


def _is_positive_int(value: Any) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ValueError(f"Expected a positive integer, got {value!r}")


def _default_backend() -> str:
    """Reads BLAZE_BACKEND, which lets the test suite rerun over sockets."""
    backend = os.environ.get("BLAZE_BACKEND", "threads").strip().lower()
    if backend not in BACKENDS:
        raise ConfigError(
            f"BLAZE_BACKEND must be one of {BACKENDS}, got {backend!r}"
        )
    return backend


def get_option(option: str) -> Any:
    """Returns the current value of a Blaze option.

    Args:
        option: The name of the option, with or without the `blaze.` prefix.

    Returns:
        The option's value.
    """
    return pd.get_option(option if option.startswith("blaze.") else "blaze." + option)


# -----------------------
# Engine and transport
# -----------------------
def set_options(**kwargs: Any) -> None:
    """Configures selected Blaze options. Run blaze_mr.describe_options() to see a list of available options.

    For example, set_options(threads_per_worker=4, dense_max_keys=1024)
    runs 4 compute threads per worker and sends only targets of up to 1024 keys down the dense path.

    Args:
        **kwargs: Pairs of option name and its new value.

    Returns:
        None
    """
    for arg, value in kwargs.items():
        _set_option(arg, value)


def reset_options() -> None:
    """Globally restores all Blaze options to their default "factory" settings.

    Returns:
        None
    """
    _initialize_options()


def _initialize_engine_options(options: Union[List[str], None] = None) -> None:
    """Initializes or resets the options that shape clusters and MapReduce jobs.

    Args:
        options: A list of option names to initialize or reset. If None, all engine
            options will be initialized or reset.

    Returns:
        None
    """
    option_keys = (
        [option.replace("blaze.", "") for option in options] if options else []
    )
    if "backend" in option_keys or options == None:
        _register_option(
            name="backend",
            default_value=_default_backend(),
            description="""
    : str
    Transport backend for new clusters: "threads" runs every rank as a thread of this process,
    "sockets" runs every rank as its own process connected over TCP. Defaults to $BLAZE_BACKEND.
    """,
            validator=cf.is_one_of_factory(BACKENDS),
        )
    if "threads_per_worker" in option_keys or options == None:
        _register_option(
            name="threads_per_worker",
            default_value=os.cpu_count() or 1,
            description="""
    : int
    Number of compute threads each worker uses for foreach, topk and the map phase.
    """,
            validator=_is_positive_int,
        )
    if "connect_timeout" in option_keys or options == None:
        _register_option(
            name="connect_timeout",
            default_value=30.0,
            description="""
    : float
    Seconds a sockets worker waits for all of its peers at startup.
    """,
            validator=cf.is_instance_factory((int, float)),
        )
    if "thread_cache_slots" in option_keys or options == None:
        _register_option(
            name="thread_cache_slots",
            default_value=2**16,
            description="""
    : int
    Capacity of each thread-local cache of locally reduced pairs. Must be a power of two.
    """,
            validator=_is_power_of_two,
        )
    if "cache_probes" in option_keys or options == None:
        _register_option(
            name="cache_probes",
            default_value=4,
            description="""
    : int
    Slots probed in a thread cache before the resident pair is evicted to the node-local table.
    """,
            validator=_is_positive_int,
        )
    if "node_table_shards" in option_keys or options == None:
        _register_option(
            name="node_table_shards",
            default_value=256,
            description="""
    : int
    Number of independently locked shards of the node-local table. Must be a power of two.
    """,
            validator=_is_power_of_two,
        )
    if "dense_max_keys" in option_keys or options == None:
        _register_option(
            name="dense_max_keys",
            default_value=2**14,
            description="""
    : int
    Local-sequence targets up to this length use per-thread dense arrays and tree reduction.
    """,
            validator=_is_positive_int,
        )
    if "range_chunk" in option_keys or options == None:
        _register_option(
            name="range_chunk",
            default_value=1024,
            description="""
    : int
    Length of the chunks dealt round-robin to threads by DistRange and DistVector.
    """,
            validator=_is_positive_int,
        )
    if "debug" in option_keys or options == None:
        _register_option(
            name="debug",
            default_value=False,
            description="""
    : bool
    Raise ContractError when an emit handler is used after its map phase has closed.
    """,
            validator=cf.is_instance_factory(bool),
        )


# -----------------------
# Display
# -----------------------
def _initialize_display_options(options: Union[List[str], None] = None) -> None:
    """Initializes or resets the options that control how Blaze prints progress and results.

    Args:
        options: A list of option names to initialize or reset. If None, all display
            options will be initialized or reset.

    Returns:
        None
    """
    option_keys = (
        [option.replace("blaze.", "") for option in options] if options else []
    )
    if "verbose" in option_keys or options == None:
        _register_option(
            name="verbose",
            default_value=False,
            description="""
    : bool
    Print progress lines from the transport, the MapReduce engine and the benchmark harness.
    """,
            validator=cf.is_instance_factory(bool),
        )
    if "use_emojis" in option_keys or options == None:
        _register_option(
            name="use_emojis",
            default_value=True,
            description="""
    : bool
    Whether displayed lead-ins and messages keep their emojis.
    """,
            validator=cf.is_instance_factory(bool),
        )
    if "precision" in option_keys or options == None:
        _register_option(
            name="precision",
            default_value=3,
            description="""
    : int
    Places after the decimal for floats in result tables shown in IPython/Jupyter.
    """,
            validator=cf.is_nonnegative_int,
        )
    if "indent_table_terminal" in option_keys or options == None:
        _register_option(
            name="indent_table_terminal",
            default_value=4,
            description="""
    : int
    Number of spaces to indent result tables in terminal display.
    """,
            validator=cf.is_instance_factory(int),
        )
    if "warning_fg_color" in option_keys or options == None:
        _register_option(
            name="warning_fg_color",
            default_value="black",
            description="""
    : str
    Foreground color of the lead-in of warnings.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "warning_bg_color" in option_keys or options == None:
        _register_option(
            name="warning_bg_color",
            default_value="yellow",
            description="""
    : str
    Background color of the lead-in of warnings.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "fail_message_bg_color" in option_keys or options == None:
        _register_option(
            name="fail_message_bg_color",
            default_value="red",
            description="""
    : str
    Background color of the lead-in when a benchmark check fails.
    """,
            validator=cf.is_instance_factory(str),
        )
    if "pass_message_bg_color" in option_keys or options == None:
        _register_option(
            name="pass_message_bg_color",
            default_value="green",
            description="""
    : str
    Background color of the lead-in when a benchmark check passes.
    """,
            validator=cf.is_instance_factory(str),
        )


# -----------------------
# General options
# -----------------------
def describe_options() -> None:
    """Prints all global options for Blaze MapReduce, their default values, and current values.

    Returns:
        None
    """
    for option in pd._config.config._select_options("blaze"):
        print()
        pd.describe_option(option)


def set_verbose(verbose: bool) -> None:
    """Turns progress lines on or off globally.

    Args:
        verbose: Whether the transport, the engine and the bench harness print progress.

    Returns:
        None
    """
    _set_option("verbose", verbose)


def get_mode() -> Dict[str, Any]:
    """Returns the current backend and the verbose and debug switches.

    Returns:
        A dictionary containing the current settings.
    """
    return {
        "backend": pd.get_option("blaze.backend"),
        "verbose": pd.get_option("blaze.verbose"),
        "debug": pd.get_option("blaze.debug"),
    }


def _initialize_options() -> None:
    """Initializes (or resets) all Blaze options to their default values.

    Returns:
        None
    """
    _initialize_engine_options()
    _initialize_display_options()
