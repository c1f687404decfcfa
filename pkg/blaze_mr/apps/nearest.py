"""The k nearest neighbors of a query point, by Euclidean distance, through `DistVector.topk`."""

from dataclasses import dataclass
from typing import List

import numpy as np

from ..DistVector import DistVector

DEFAULT_K = 100


@dataclass(frozen=True)
class Neighbor:
    """One neighbor of the query.

    Attributes:
        index: Global index of the point in its DistVector.
        distance: Euclidean distance to the query.
        point: The point itself.
    """

    index: int
    distance: float
    point: np.ndarray

    def as_dict(self) -> dict:
        return {"index": self.index, "distance": self.distance, "point": self.point.tolist()}


def _distance(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=np.float64) - q))


def nearest100(points: DistVector, query: np.ndarray, k: int = DEFAULT_K) -> List[Neighbor]:
    """The k points closest to `query`, nearest first, on every worker. Collective.

    Ties in distance go to the lower global index.

    Example:
        ```python
        neighbors = nearest100(points, np.zeros(3))
        neighbors[0].distance
        ```

    Args:
        points: DistVector with (n, dim) float array shards.
        query: A point of the same dimension.
        k: How many neighbors to return. Fewer come back when there are fewer points.

    Returns:
        A list of Neighbor, sorted by ascending distance.
    """
    q = np.asarray(query, dtype=np.float64)
    found = points.topk(k, key=lambda p: _distance(p, q), reverse=False, with_index=True)
    return [
        Neighbor(index, _distance(point, q), np.asarray(point, dtype=np.float64))
        for index, point in found
    ]


def nearest_serial(points: np.ndarray, query: np.ndarray, k: int = DEFAULT_K) -> List[Neighbor]:
    """Reference neighbors from a full sort by (distance, index)."""
    points = np.asarray(points, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    ranked = sorted((_distance(p, q), i) for i, p in enumerate(points))
    return [Neighbor(i, distance, points[i]) for distance, i in ranked[:k]]
