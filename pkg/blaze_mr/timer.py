"""
Provides timer utilities for measuring MapReduce jobs and benchmark phases.

`start_timer()` and `print_time_elapsed()` are quick stopwatches. `PhaseTimer` records named
phase markers so the benchmark harness can bracket only the measured region and leave data
generation and loading outside it.
"""
from time import perf_counter
from typing import Callable, Dict, List, Tuple, Union

from .display import _display_line


# Public functions
def start_timer(verbose: bool = False) -> float:
    """Starts a stopwatch to measure run time between operations, such as successive MapReduce jobs. Use print_time_elapsed() to get timings.

    Args:
        verbose: Whether to print a message that the timer has started.

    Returns:
        Timestamp as a float
    """
    t = perf_counter()
    if verbose:
        _display_line(f"⏱️ Started timer at: {t}")
    return t


def _convert_units(elapsed: float, units: str) -> Tuple[float, str]:
    """Converts seconds to the requested units, resolving "auto".

    Raises:
        ValueError: If `units` is not one of allowed values.
    """
    if units == "auto":
        if elapsed > 60 * 60:
            units = "hours"
        elif elapsed > 60:
            units = "minutes"
        elif elapsed >= 1:
            units = "seconds"
        else:
            units = "milliseconds"
    if units in ["hours", "h"]:
        elapsed /= 60 * 60
    elif units in ["minutes", "m"]:
        elapsed /= 60
    elif units in ["milliseconds", "ms"]:
        elapsed *= 1000
    elif units not in ["seconds", "s"]:
        raise ValueError(f"Unexpected value for argument `units`: {units}")
    return elapsed, units


def print_time_elapsed(
    start_time: float,
    lead_in: Union[str, None] = "⏱️ Time elapsed",
    units: str = "auto",
) -> None:
    """Displays the time elapsed since start_time.

    Args:
        start_time: The time when the stopwatch started, which comes from start_timer()
        lead_in: Optional text to print before the elapsed time.
        units: The units in which to display the elapsed time. Allowed values: "auto", "milliseconds", "seconds", "minutes", "hours" or shorthands "ms", "s", "m", "h"

    Returns:
        None

    Raises:
        ValueError: If `units` is not one of allowed values.
    """
    elapsed, units = _convert_units(perf_counter() - start_time, units)
    _display_line(
        f"{lead_in + ':' if lead_in else '⏱️ Time elapsed:'} {elapsed} {units}"
    )


class PhaseTimer:
    """Records named phase markers against a monotonic clock.

    Example:
        ```python
        phases = PhaseTimer(on_phase=print)
        phases.mark("load")
        ...
        phases.mark("measure_start")
        run_job()
        phases.mark("measure_end")
        phases.between("measure_start", "measure_end")
        ```

    Args:
        on_phase: Optional hook called with each phase name as it is marked.
    """

    def __init__(self, on_phase: Union[Callable[[str], None], None] = None) -> None:
        self.on_phase = on_phase
        self.marks: List[Tuple[str, float]] = []

    def mark(self, name: str) -> float:
        t = perf_counter()
        self.marks.append((name, t))
        if self.on_phase is not None:
            self.on_phase(name)
        return t

    def last(self, name: str) -> float:
        """Time of the most recent marker called `name`."""
        for marker, t in reversed(self.marks):
            if marker == name:
                return t
        raise KeyError(f"No phase marker named {name!r}")

    def between(self, start: str, end: str) -> float:
        """Seconds between the latest `start` marker and the latest `end` marker."""
        return self.last(end) - self.last(start)

    def names(self) -> List[str]:
        return [name for name, _ in self.marks]

    def as_dict(self) -> Dict[str, float]:
        return {name: t for name, t in self.marks}
