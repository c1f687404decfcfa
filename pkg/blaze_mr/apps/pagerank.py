"""PageRank by power iteration, three MapReduce jobs per iteration.

Each iteration computes

    PR(p) = (1 - d) / N + d * (sink_mass / N + sum over pages q linking to p of PR(q) / L(q))

where L(q) is the out-degree of q and sink_mass is the total score of pages with no outgoing
links, which are treated as linking to every page. The damping parameter defaults to
d = 0.15; note that the conventional formulation weights the link term by 0.85.

The jobs are: the sink mass (a sum into one slot), the score update (contributions summed
into a DistVector of new scores, pre-filled with the teleport and sink terms), and the
largest per-page change (a max into one slot). Iteration stops once that change drops below
the tolerance.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, List, Tuple, Union

import numpy as np

from ..DistRange import DistRange
from ..DistVector import DistVector
from ..display import _log
from ..errors import InputError
from ..mapreduce import JobCounters, mapreduce
from ..transport import ClusterCtx
from ..utils import _block_bounds, _raise_collectively

DEFAULT_DAMPING = 0.15


@dataclass
class Graph:
    """A directed graph as a distributed edge list.

    Attributes:
        edges: DistVector whose shards are int64 arrays of (source page, destination page) rows.
        n_pages: Number of pages N. Page ids are 0 .. N - 1.
        out_degree: Out-degree L(p) of every page, the same on every worker.
        damping: The parameter d.
    """

    edges: DistVector
    n_pages: int
    out_degree: np.ndarray
    damping: float = DEFAULT_DAMPING

    @property
    def ctx(self) -> ClusterCtx:
        return self.edges.ctx

    @classmethod
    def from_edges(
        cls, edges: DistVector, n_pages: int, damping: float = DEFAULT_DAMPING
    ) -> "Graph":
        """Validates page ids and counts out-degrees with a MapReduce job. Collective.

        Args:
            edges: Edge rows, as arrays of shape (edges, 2) or sequences of pairs.
            n_pages: Number of pages.
            damping: The parameter d.

        Raises:
            InputError: If n_pages < 1 or an edge names a page outside [0, n_pages).
        """
        ctx = edges.ctx
        if n_pages < 1:
            raise InputError(f"a graph needs at least one page, got n_pages={n_pages}")
        local = np.asarray(edges.local, dtype=np.int64).reshape(-1, 2)
        problem = None
        bad = ((local < 0) | (local >= n_pages)).any(axis=1)
        if bad.any():
            row = int(np.argmax(bad))
            problem = (
                f"edge {edges.local_start + row} ({local[row, 0]} -> {local[row, 1]}) "
                f"names a page outside [0, {n_pages})"
            )
        _raise_collectively(ctx, problem, InputError)
        edges = DistVector(ctx, local, edges.offsets)

        degree: List[int] = [0] * n_pages
        mapreduce(edges, _emit_out_degree, "sum", degree, batched=True)
        return cls(edges, n_pages, np.asarray(degree, dtype=np.int64), damping)


def _emit_out_degree(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
    pages, counts = np.unique(block[:, 0], return_counts=True)
    for page, count in zip(pages.tolist(), counts.tolist()):
        emit(page, count)


@dataclass
class PageRankState:
    """Scores after the last iteration, identical on every worker.

    Attributes:
        scores: PR value of every page.
        prev_scores: Scores before the last iteration.
        sink_mass: Total score of pages without outgoing links, before the last iteration.
        delta_max: Largest per-page change in the last iteration.
        iterations: Iterations run.
        converged: Whether delta_max fell below the tolerance.
        history: (sum of scores, delta_max) after every iteration.
        counters: This worker's MapReduce counters, summed over all jobs.
    """

    scores: np.ndarray
    prev_scores: np.ndarray
    sink_mass: float = 0.0
    delta_max: float = float("inf")
    iterations: int = 0
    converged: bool = False
    history: List[Tuple[float, float]] = field(default_factory=list)
    counters: JobCounters = field(default_factory=JobCounters)

    def as_dict(self) -> dict:
        return {
            "scores": self.scores.tolist(),
            "sink_mass": self.sink_mass,
            "delta_max": self.delta_max,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _page_offsets(ctx: ClusterCtx, n_pages: int) -> List[int]:
    offsets = [0]
    for rank in range(ctx.size):
        offsets.append(_block_bounds(n_pages, ctx.size, rank)[1])
    return offsets


def _replicate(vector: DistVector) -> np.ndarray:
    """All of a float vector on every worker."""
    shard = np.asarray(vector.local, dtype="<f8")
    if vector.ctx.size == 1:
        return shard.astype(np.float64)
    parts = vector.ctx.allgather(shard.tobytes())
    return np.concatenate([np.frombuffer(part, dtype="<f8") for part in parts]).astype(np.float64)


def pagerank(
    graph: Graph,
    tol: float = 1e-5,
    max_iterations: int = 100,
    init_scores: Union[np.ndarray, None] = None,
) -> PageRankState:
    """Iterates PageRank until the largest per-page change is below `tol`. Collective.

    Args:
        graph: The graph, from `Graph.from_edges`.
        tol: Convergence threshold on the largest per-page change.
        max_iterations: Upper bound on iterations.
        init_scores: Starting scores. Uniform 1 / N when omitted.

    Returns:
        A PageRankState.

    Raises:
        ValueError: If tol is not positive.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    ctx = graph.ctx
    n = graph.n_pages
    d = graph.damping
    is_sink = graph.out_degree == 0
    safe_degree = np.where(is_sink, 1, graph.out_degree).astype(np.float64)
    pages = DistRange(ctx, 0, n)
    offsets = _page_offsets(ctx, n)
    lo, hi = offsets[ctx.rank], offsets[ctx.rank + 1]

    scores = (
        np.full(n, 1.0 / n) if init_scores is None else np.asarray(init_scores, dtype=np.float64)
    )
    state = PageRankState(scores=scores, prev_scores=scores.copy())

    for _ in range(max_iterations):
        current = scores

        def emit_sink_mass(chunk: range, emit: Callable[[Any, Any], None]) -> None:
            ids = slice(chunk.start, chunk.stop)
            emit(0, float(current[ids][is_sink[ids]].sum()))

        sink = [0.0]
        state.counters += mapreduce(pages, emit_sink_mass, "sum", sink, batched=True)

        def emit_contributions(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if not len(block):
                return
            share = current[block[:, 0]] / safe_degree[block[:, 0]]
            targets, inverse = np.unique(block[:, 1], return_inverse=True)
            sums = np.bincount(inverse, weights=share)
            for page, total in zip(targets.tolist(), sums.tolist()):
                emit(page, d * total)

        base = (1.0 - d) / n + d * sink[0] / n
        new_scores = DistVector(ctx, [base] * (hi - lo), offsets)
        state.counters += mapreduce(
            graph.edges, emit_contributions, "sum", new_scores, batched=True
        )

        def emit_change(start: int, block: List[float], emit: Callable[[Any, Any], None]) -> None:
            if len(block):
                old = current[start : start + len(block)]
                emit(0, float(np.max(np.abs(np.asarray(block) - old))))

        delta = [0.0]
        state.counters += mapreduce(new_scores, emit_change, "max", delta, batched=True)

        scores = _replicate(new_scores)
        state.prev_scores = current
        state.scores = scores
        state.sink_mass = sink[0]
        state.delta_max = delta[0]
        state.iterations += 1
        state.history.append((float(scores.sum()), delta[0]))
        _log(f"pagerank iteration {state.iterations}: delta {delta[0]:.3e}", ctx.rank)
        if delta[0] < tol:
            state.converged = True
            break
    return state


def pagerank_serial(
    edges: np.ndarray,
    n_pages: int,
    damping: float = DEFAULT_DAMPING,
    tol: float = 1e-5,
    max_iterations: int = 100,
) -> Tuple[np.ndarray, int]:
    """Reference power iteration with a dense N x N link matrix.

    Returns:
        The scores and the number of iterations run.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    degree = np.bincount(edges[:, 0], minlength=n_pages).astype(np.float64)
    links = np.zeros((n_pages, n_pages))
    for src, dst in edges:
        links[dst, src] += 1.0 / degree[src]
    is_sink = degree == 0
    scores = np.full(n_pages, 1.0 / n_pages)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        sink = scores[is_sink].sum()
        new = (1.0 - damping) / n_pages + damping * (sink / n_pages + links @ scores)
        delta = np.max(np.abs(new - scores))
        scores = new
        if delta < tol:
            break
    return scores, iterations
