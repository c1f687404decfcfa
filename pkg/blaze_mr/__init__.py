"""
This module imports and initializes Blaze MapReduce.
"""

# Select what is included in `from blaze_mr import *`
__all__ = [
    "ClusterConfig",
    "ClusterCtx",
    "DistHashMap",
    "DistRange",
    "DistVector",
    "Envelope",
    "JobCounters",
    "Reducer",
    "_initialize_options",
    "collect",
    "describe_options",
    "distribute",
    "foreach",
    "get_mode",
    "get_option",
    "init",
    "launch",
    "load_edges",
    "load_file",
    "load_points",
    "mapreduce",
    "mapreduce_dense",
    "mapreduce_serial",
    "print_time_elapsed",
    "reset_options",
    "set_options",
    "set_verbose",
    "start_timer",
    "topk",
]

from .containers import (
    collect,
    distribute,
    foreach,
    load_edges,
    load_file,
    load_points,
    topk,
)
from .DistHashMap import DistHashMap
from .DistRange import DistRange
from .DistVector import DistVector
from .mapreduce import JobCounters, Reducer, mapreduce, mapreduce_dense, mapreduce_serial
from .options import (
    _initialize_options,
    describe_options,
    get_mode,
    get_option,
    reset_options,
    set_options,
    set_verbose,
)
from .timer import print_time_elapsed, start_timer
from .transport import ClusterConfig, ClusterCtx, Envelope, init, launch

_initialize_options()
