"""
Deterministic synthetic inputs for the workloads: replicated text, uniform random edge
lists and Gaussian point clouds. The same seed always gives the same data.

Run as `blaze-gen`:

    ```
    blaze-gen text --size 200 --out corpus.txt
    blaze-gen graph --size 100000 --pages 10000 --seed 1 --out edges.txt
    blaze-gen points --size 100000 --clusters 5 --dim 2 --seed 1 --out points.csv
    ```
"""

import argparse
import os
from importlib.resources import files
from typing import Any, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..display import _display_verdict
from ..errors import InputError

KINDS = ["text", "graph", "points"]
BASE_TEXTS = ["genesis", "sonnets"]


# -----------------------
# Builders
# -----------------------
def base_text(names: Union[str, Sequence[str]] = tuple(BASE_TEXTS)) -> List[str]:
    """Lines of the public-domain texts bundled with the package, in the given order."""
    if isinstance(names, str):
        names = [names]
    lines: List[str] = []
    for name in names:
        if name not in BASE_TEXTS:
            raise ValueError(f"unknown base text {name!r}, choose from {BASE_TEXTS}")
        text = (files("blaze_mr") / "data" / f"{name}.txt").read_text(encoding="utf-8")
        lines.extend(text.splitlines())
    return lines


def make_text(copies: int, base: Union[Sequence[str], None] = None) -> List[str]:
    """`copies` back-to-back repetitions of the base lines.

    Args:
        copies: Number of repetitions, at least 1.
        base: Lines to repeat. Defaults to all bundled texts.
    """
    if copies < 1:
        raise ValueError(f"copies must be at least 1, got {copies}")
    lines = list(base) if base is not None else base_text()
    return lines * copies


def make_edges(n_edges: int, n_pages: int, seed: int = 0) -> np.ndarray:
    """(n_edges, 2) int64 array of uniformly random (source, destination) page pairs."""
    if n_pages < 1:
        raise ValueError(f"need at least one page, got n_pages={n_pages}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, n_pages, size=(n_edges, 2), dtype=np.int64)


def make_points(
    n_points: int,
    n_clusters: int = 5,
    dim: int = 2,
    seed: int = 0,
    spread: float = 1.0,
    box: float = 10.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Points drawn around random centers.

    Centers are uniform in [-box, box]^dim. Each point picks a center uniformly and adds
    Gaussian noise of standard deviation `spread`.

    Returns:
        The (n_points, dim) points and the (n_clusters, dim) centers.
    """
    if n_clusters < 1 or dim < 1:
        raise ValueError(f"need n_clusters >= 1 and dim >= 1, got {n_clusters} and {dim}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-box, box, size=(n_clusters, dim))
    labels = rng.integers(0, n_clusters, size=n_points)
    points = centers[labels] + rng.normal(0.0, spread, size=(n_points, dim))
    return points, centers


# -----------------------
# Writers
# -----------------------
def write_lines(lines: Sequence[str], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def write_edges(edges: np.ndarray, path: Union[str, os.PathLike]) -> None:
    pd.DataFrame(np.asarray(edges, dtype=np.int64)).to_csv(
        path, sep=" ", header=False, index=False
    )


def write_points(points: np.ndarray, path: Union[str, os.PathLike]) -> None:
    pd.DataFrame(np.asarray(points, dtype=np.float64)).to_csv(
        path, header=False, index=False, float_format="%.17g"
    )


def gen_data(
    kind: str,
    size: int,
    seed: int = 0,
    out: Union[str, os.PathLike, None] = None,
    **opts: Any,
) -> Any:
    """Builds one kind of synthetic data and optionally writes it to a file.

    Args:
        kind: "text" (size = copies of the base text), "graph" (size = edges, option
            `pages`, default size // 10) or "points" (size = points, options `clusters`
            default 5 and `dim` default 2).
        size: Amount of data, as above.
        seed: Random seed. Text does not use it.
        out: File to write. Nothing is written when omitted.
        **opts: Per-kind options named above, plus `base` for text.

    Returns:
        The lines, the edge array, or the (points, centers) pair.

    Raises:
        ValueError: If the kind is unknown.
        InputError: If the output file cannot be written.
    """
    if kind == "text":
        data = make_text(size, opts.get("base"))
        writer, payload = write_lines, data
    elif kind == "graph":
        n_pages = opts.get("pages") or max(1, size // 10)
        data = make_edges(size, n_pages, seed)
        writer, payload = write_edges, data
    elif kind == "points":
        data = make_points(size, opts.get("clusters", 5), opts.get("dim", 2), seed)
        writer, payload = write_points, data[0]
    else:
        raise ValueError(f"unknown data kind {kind!r}, choose from {KINDS}")

    if out is not None:
        try:
            writer(payload, out)
        except OSError as e:
            raise InputError(f"cannot write {kind} data to {out}: {e}") from e
    return data


def main(argv: Union[List[str], None] = None) -> None:
    """Entry point of `blaze-gen`."""
    parser = argparse.ArgumentParser(
        prog="blaze-gen", description="Generate deterministic inputs for the blaze workloads."
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--size", type=int, required=True, help="copies, edges or points")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output file")
    parser.add_argument("--pages", type=int, default=None, help="graph: number of pages")
    parser.add_argument("--clusters", type=int, default=5, help="points: number of centers")
    parser.add_argument("--dim", type=int, default=2, help="points: dimension")
    args = parser.parse_args(argv)

    try:
        gen_data(
            args.kind,
            args.size,
            args.seed,
            args.out,
            pages=args.pages,
            clusters=args.clusters,
            dim=args.dim,
        )
    except (InputError, ValueError) as e:
        _display_verdict(False, str(e))
        raise SystemExit(1)
    _display_verdict(True, f"wrote {args.kind} data to {args.out}")
