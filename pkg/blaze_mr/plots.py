"""Throughput plots from `blaze-bench` CSV files, as the `blaze-plot` command."""

import argparse
import os
from typing import List, Sequence, Union

import matplotlib.pyplot as plt
import pandas as pd

from .bench import read_csv, records_to_frame
from .display import _display_plot, _display_verdict


def _summaries(paths: Sequence[Union[str, os.PathLike]]) -> pd.DataFrame:
    records = [record for path in paths for record in read_csv(path)]
    frame = records_to_frame(records)
    return frame[frame["rep"] == "summary"]


def plot_throughput(
    csv: Union[str, os.PathLike, Sequence[Union[str, os.PathLike]]],
    out: Union[str, os.PathLike, None] = None,
) -> plt.Figure:
    """Plots items per second against worker count, one line per task and thread count.

    Error bars come from the standard deviation of the repetition times.

    Args:
        csv: One or more CSV files written by `blaze-bench`.
        out: Image file to save, if any.

    Returns:
        The matplotlib Figure.
    """
    paths = [csv] if isinstance(csv, (str, os.PathLike)) else list(csv)
    summary = _summaries(paths)
    fig, ax = plt.subplots(figsize=(6, 4))
    for (task, threads), group in summary.groupby(["task", "threads"]):
        group = group.sort_values("workers")
        relative_std = group["seconds_std"].fillna(0.0) / group["seconds"]
        ax.errorbar(
            group["workers"],
            group["items_per_sec"],
            yerr=group["items_per_sec"] * relative_std,
            marker="o",
            capsize=3,
            label=f"{task}, {threads} threads",
        )
    ax.set_xlabel("workers")
    ax.set_ylabel("items per second")
    ax.grid(True, alpha=0.3)
    if len(summary):
        ax.legend()
    fig.tight_layout()
    if out is not None:
        fig.savefig(out)
    _display_plot(fig)
    return fig


def main(argv: Union[List[str], None] = None) -> None:
    """Entry point of `blaze-plot`."""
    parser = argparse.ArgumentParser(
        prog="blaze-plot", description="Plot throughput from blaze-bench CSV files."
    )
    parser.add_argument("csv", nargs="+", help="CSV files written by blaze-bench")
    parser.add_argument("--out", required=True, help="image file to write")
    args = parser.parse_args(argv)
    try:
        plot_throughput(args.csv, args.out)
    except (OSError, KeyError, ValueError) as e:
        _display_verdict(False, str(e))
        raise SystemExit(1)
    _display_verdict(True, f"wrote {args.out}")
