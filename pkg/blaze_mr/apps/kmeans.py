"""K-means clustering with Lloyd's algorithm.

The assignment step is one MapReduce job: every point goes to its nearest center (lowest
center index on ties), and for each center the job sums the assigned points, their count and
their squared distances. The update step runs serially, and identically, on every worker: each
center moves to the mean of its points, and a center without points stays where it was.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, List

import numpy as np

from ..DistVector import DistVector
from ..display import _log
from ..errors import InputError
from ..mapreduce import JobCounters, mapreduce
from ..wire import F64_ARRAY


@dataclass
class KMeansModel:
    """Cluster centers and how they got there.

    Attributes:
        centers: (K, dim) array of centers.
        counts: Points assigned to each center in the last assignment step.
        movement: Largest distance a center moved in the last update.
        iterations: Assignment/update rounds run.
        converged: Whether movement fell below the tolerance.
        wcss_history: Within-cluster sum of squares of every assignment step.
        counters: This worker's MapReduce counters, summed over all jobs.
    """

    centers: np.ndarray
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    movement: float = float("inf")
    iterations: int = 0
    converged: bool = False
    wcss_history: List[float] = field(default_factory=list)
    counters: JobCounters = field(default_factory=JobCounters)

    def as_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "counts": self.counts.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "wcss": self.wcss_history[-1] if self.wcss_history else None,
        }


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, np.newaxis, :] - centers[np.newaxis, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _check_distinct(centers: np.ndarray) -> None:
    # a repeated center never wins a point, since ties go to the lower index
    unique = np.unique(centers, axis=0)
    if len(unique) < len(centers):
        raise InputError(f"initial centers must be distinct, got {len(unique)} of {len(centers)}")


def _update(centers: np.ndarray, sums: np.ndarray):
    """Serial update step from per-center [coordinate sums..., count, squared distances] rows."""
    dim = centers.shape[1]
    counts = sums[:, dim]
    new_centers = centers.copy()
    filled = counts > 0
    new_centers[filled] = sums[filled, :dim] / counts[filled, np.newaxis]
    movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
    return new_centers, counts, movement, float(sums[:, dim + 1].sum())


def kmeans(
    points: DistVector,
    init_centers: np.ndarray,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> KMeansModel:
    """Runs Lloyd iterations until no center moves by `tol` or more. Collective.

    Example:
        ```python
        points = load_points(ctx, "points.csv")
        model = kmeans(points, initial_centers(points, 5))
        ```

    Args:
        points: DistVector with (n, dim) float array shards.
        init_centers: (K, dim) starting centers, the same on every worker.
        tol: Convergence threshold on center movement.
        max_iterations: Upper bound on iterations.

    Returns:
        A KMeansModel.

    Raises:
        ValueError: If there are no centers or their dimension does not match the points.
        InputError: If two initial centers are equal.
    """
    centers = np.array(init_centers, dtype=np.float64, ndmin=2)
    k, dim = centers.shape
    if k < 1:
        raise ValueError("kmeans needs at least one center")
    local = np.asarray(points.local, dtype=np.float64)
    if len(local) and local.shape[1] != dim:
        raise ValueError(f"centers have dimension {dim}, points {local.shape[1]}")
    _check_distinct(centers)
    model = KMeansModel(centers=centers)

    for _ in range(max_iterations):
        current = model.centers

        def emit_assignments(start: int, block: np.ndarray, emit: Callable[[Any, Any], None]) -> None:
            if not len(block):
                return
            d2 = _squared_distances(block, current)
            nearest = np.argmin(d2, axis=1)
            for cluster in np.unique(nearest).tolist():
                mine = nearest == cluster
                row = np.empty(dim + 2)
                row[:dim] = block[mine].sum(axis=0)
                row[dim] = mine.sum()
                row[dim + 1] = d2[mine, cluster].sum()
                emit(cluster, row)

        sums: List[Any] = [np.zeros(dim + 2) for _ in range(k)]
        model.counters += mapreduce(
            points, emit_assignments, "sum", sums, value_codec=F64_ARRAY, batched=True
        )
        model.centers, model.counts, model.movement, wcss = _update(current, np.stack(sums))
        model.wcss_history.append(wcss)
        model.iterations += 1
        _log(f"kmeans iteration {model.iterations}: movement {model.movement:.3e}", points.ctx.rank)
        if model.movement < tol:
            model.converged = True
            break
    return model


def initial_centers(points: DistVector, k: int) -> np.ndarray:
    """The first k points of the vector, on every worker. Collective.

    Raises:
        InputError: If rank 0 holds fewer than k points.
    """
    ctx = points.ctx
    head = np.asarray(points.local[:k], dtype=np.float64) if ctx.rank == 0 else None
    payload = F64_ARRAY.dumps(head) if head is not None else None
    centers = F64_ARRAY.loads(ctx.broadcast(payload))
    if len(centers) < k:
        raise InputError(f"need {k} points for initial centers, rank 0 holds {len(centers)}")
    return centers


def kmeans_serial(
    points: np.ndarray,
    init_centers: np.ndarray,
    tol: float = 1e-6,
    max_iterations: int = 100,
) -> KMeansModel:
    """Reference Lloyd iterations over a local array."""
    points = np.asarray(points, dtype=np.float64)
    model = KMeansModel(centers=np.array(init_centers, dtype=np.float64, ndmin=2))
    k, dim = model.centers.shape
    _check_distinct(model.centers)
    for _ in range(max_iterations):
        d2 = _squared_distances(points, model.centers)
        nearest = np.argmin(d2, axis=1)
        sums = np.zeros((k, dim + 2))
        for cluster in range(k):
            mine = nearest == cluster
            sums[cluster, :dim] = points[mine].sum(axis=0)
            sums[cluster, dim] = mine.sum()
            sums[cluster, dim + 1] = d2[mine, cluster].sum()
        model.centers, model.counts, model.movement, wcss = _update(model.centers, sums)
        model.wcss_history.append(wcss)
        model.iterations += 1
        if model.movement < tol:
            model.converged = True
            break
    return model
