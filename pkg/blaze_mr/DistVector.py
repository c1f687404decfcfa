"""
A partitioned array: every worker holds one contiguous shard of a logical vector.

Shards are plain Python lists, or numpy arrays whose first axis indexes the elements (a
point cloud is an (n, dim) array). Concatenating the shards in rank order gives the logical
vector, and `offsets[r]` is the global index of rank r's first element.
"""

import functools
import heapq
from bisect import bisect_right
from typing import Any, Callable, List, Sequence, Tuple, Union

import numpy as np

from .options import get_option
from .transport import ClusterCtx
from .utils import _thread_chunks
from .wire import PICKLE, Codec, WireBuffer


class _Candidate:
    """A topk candidate; `a < b` means a ranks below b.

    Among equal sort keys the lower global index ranks higher.
    """

    __slots__ = ("sort_key", "index", "value", "reverse")

    def __init__(self, sort_key: Any, index: int, value: Any, reverse: bool) -> None:
        self.sort_key = sort_key
        self.index = index
        self.value = value
        self.reverse = reverse

    def __lt__(self, other: "_Candidate") -> bool:
        if self.sort_key == other.sort_key:
            return self.index > other.index
        if self.reverse:
            return self.sort_key < other.sort_key
        return other.sort_key < self.sort_key


class DistVector:
    """A vector partitioned across the workers of a cluster.

    Constructing a DistVector without `offsets` is collective: every worker must call it, and
    the shard lengths are exchanged to compute the offsets.

    Args:
        ctx: The worker's cluster context.
        local: This worker's shard.
        offsets: Global start index of every rank's shard, plus the global size at the end.
        codec: Codec of the elements, used when shards travel between workers. Inferred from
            the data when omitted.
    """

    def __init__(
        self,
        ctx: ClusterCtx,
        local: Union[Sequence, np.ndarray, None] = None,
        offsets: Union[List[int], None] = None,
        codec: Union[Codec, None] = None,
    ) -> None:
        self.ctx = ctx
        self.local = (
            local if isinstance(local, (list, np.ndarray)) else list(local or [])
        )
        self.codec = codec
        if offsets is None:
            lengths = ctx.allgather(_encode_length(len(self.local))) if ctx.size > 1 else None
            sizes = (
                [len(self.local)]
                if lengths is None
                else [WireBuffer(n).get_varint() for n in lengths]
            )
            offsets = [0]
            for n in sizes:
                offsets.append(offsets[-1] + n)
        if len(offsets) != ctx.size + 1:
            raise ValueError(f"need {ctx.size + 1} offsets, got {len(offsets)}")
        if offsets[ctx.rank + 1] - offsets[ctx.rank] != len(self.local):
            raise ValueError(
                f"shard of length {len(self.local)} disagrees with offsets {offsets}"
            )
        self.offsets = list(offsets)
        # Largest per-thread heap of the last topk, for checking its space bound
        self.last_topk_peak = 0

    def __repr__(self) -> str:
        return (
            f"DistVector(global_size={self.global_size()}, local={len(self.local)}, "
            f"rank={self.ctx.rank}/{self.ctx.size})"
        )

    @classmethod
    def like(cls, other: "DistVector", fill: Any = 0, codec: Union[Codec, None] = None) -> "DistVector":
        """A new vector partitioned exactly as `other`.

        Args:
            other: The vector whose partitioning to copy.
            fill: Initial value of every element. A numpy array `fill` makes the shard an array
                with one copy per row. A callable is called once per element.
            codec: Codec of the new vector's elements.

        Returns:
            The new DistVector. Not collective.
        """
        n = len(other.local)
        if isinstance(fill, np.ndarray):
            local: Union[list, np.ndarray] = np.repeat(fill[np.newaxis, ...], n, axis=0)
        elif callable(fill):
            local = [fill() for _ in range(n)]
        else:
            local = [fill] * n
        return cls(other.ctx, local, other.offsets, codec)

    def __len__(self) -> int:
        """Number of elements on this worker."""
        return len(self.local)

    def __iter__(self):
        return iter(self.local)

    def global_size(self) -> int:
        return self.offsets[-1]

    @property
    def local_start(self) -> int:
        return self.offsets[self.ctx.rank]

    def owner_of(self, index: int) -> int:
        """Rank holding global index `index`.

        Raises:
            IndexError: If the index is outside the vector.
        """
        if not 0 <= index < self.global_size():
            raise IndexError(f"index {index} outside vector of size {self.global_size()}")
        return bisect_right(self.offsets, index) - 1

    def _local_index(self, index: int) -> int:
        i = index - self.local_start
        if not 0 <= i < len(self.local):
            raise IndexError(
                f"index {index} is not on rank {self.ctx.rank}, which holds "
                f"[{self.local_start}, {self.local_start + len(self.local)})"
            )
        return i

    def local_get(self, index: int) -> Any:
        """Element at global `index`, which must live on this worker."""
        return self.local[self._local_index(index)]

    def local_set(self, index: int, value: Any) -> None:
        self.local[self._local_index(index)] = value

    def thread_chunks(self, thread: int) -> List[Tuple[int, int]]:
        """Local (start, stop) chunks of the shard worked through by compute thread `thread`."""
        return list(
            _thread_chunks(
                len(self.local),
                self.ctx.threads_per_worker,
                thread,
                get_option("range_chunk"),
            )
        )

    def foreach(self, fn: Callable[[int, Any], Any]) -> None:
        """Calls `fn(global_index, value)` once per local element, on all compute threads.

        A return value other than None replaces the element. Every worker calls it to cover
        the whole vector. If `fn` raises on several threads, the exception of the lowest
        thread index propagates.

        Example:
            ```python
            v.foreach(lambda i, x: 2 * x)  # doubles every element
            ```
        """
        start = self.local_start
        local = self.local

        def run(thread: int) -> None:
            for lo, hi in self.thread_chunks(thread):
                for i in range(lo, hi):
                    result = fn(start + i, local[i])
                    if result is not None:
                        local[i] = result

        self.ctx.parallel(run)

    # -----------------------
    # Top k
    # -----------------------
    def topk(
        self,
        k: int,
        key: Union[Callable[[Any], Any], None] = None,
        reverse: bool = True,
        compare: Union[Callable[[Any, Any], int], None] = None,
        with_index: bool = False,
    ) -> List[Any]:
        """The k highest-priority elements of the whole vector, on every worker.

        The order matches `sorted(vector, key=key, reverse=reverse)[:k]` with ties broken by
        global index, lower first. Each compute thread keeps a bounded heap of at most k
        candidates, heaps are merged within the worker, then across workers by tree reduction.
        Collective.

        Example:
            ```python
            v.topk(2)                                          # two largest
            v.topk(3, key=lambda p: np.linalg.norm(p - q), reverse=False)  # three nearest to q
            ```

        Args:
            k: Number of elements wanted. k larger than the vector returns all of it, sorted.
            key: Priority of an element. Defaults to the element itself; rows of an
                array shard compare as tuples.
            reverse: True for highest priority first (descending), False for ascending.
            compare: A comparison function returning a negative, zero or positive number,
                accepted instead of `key`.
            with_index: Return (global index, element) pairs.

        Returns:
            Up to k elements, best first.

        Raises:
            ValueError: If k is negative, or both `key` and `compare` are given.
        """
        if k < 0:
            raise ValueError(f"k must be non-negative, got {k}")
        if key is not None and compare is not None:
            raise ValueError("pass either key or compare, not both")
        if compare is not None:
            key = functools.cmp_to_key(compare)
        sort_key = key if key is not None else _natural_key
        self.last_topk_peak = 0
        if k == 0:
            return []

        start = self.local_start
        local = self.local

        def select(thread: int) -> Tuple[List[_Candidate], int]:
            heap: List[_Candidate] = []
            for lo, hi in self.thread_chunks(thread):
                for i in range(lo, hi):
                    candidate = _Candidate(sort_key(local[i]), start + i, local[i], reverse)
                    if len(heap) < k:
                        heapq.heappush(heap, candidate)
                    elif heap[0] < candidate:
                        heapq.heapreplace(heap, candidate)
            return heap, len(heap)

        selected = self.ctx.parallel(select)
        self.last_topk_peak = max(peak for _, peak in selected)
        best = sorted(
            (c for heap, _ in selected for c in heap), reverse=True
        )[:k]

        if self.ctx.size > 1:

            def merge(a: bytes, b: bytes) -> bytes:
                both = _decode_candidates(a, sort_key, reverse) + _decode_candidates(
                    b, sort_key, reverse
                )
                return _encode_candidates(sorted(both, reverse=True)[:k])

            merged = self.ctx.allreduce(_encode_candidates(best), merge)
            best = _decode_candidates(merged, sort_key, reverse)

        if with_index:
            return [(c.index, c.value) for c in best]
        return [c.value for c in best]


def _natural_key(value: Any) -> Any:
    # rows of an array shard rank lexicographically
    if isinstance(value, np.ndarray):
        return tuple(value.tolist())
    return value


def _encode_length(n: int) -> bytes:
    buf = WireBuffer()
    buf.put_varint(n)
    return buf.getvalue()


def _encode_candidates(candidates: List[_Candidate]) -> bytes:
    buf = WireBuffer()
    buf.put_varint(len(candidates))
    for c in candidates:
        buf.put_varint(c.index)
        PICKLE.encode(buf, c.value)
    return buf.getvalue()


def _decode_candidates(
    payload: bytes, sort_key: Callable[[Any], Any], reverse: bool
) -> List[_Candidate]:
    buf = WireBuffer(payload)
    candidates = []
    for _ in range(buf.get_varint()):
        index = buf.get_varint()
        value = PICKLE.decode(buf)
        candidates.append(_Candidate(sort_key(value), index, value, reverse))
    return candidates
