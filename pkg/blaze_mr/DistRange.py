"""
A virtual numeric range spread over the workers of a cluster.

A DistRange stores only its start, end and step. Each worker owns one contiguous block of the
range, and within a worker, chunks of the block are dealt round-robin to the compute threads:

    ```python
    from blaze_mr import DistRange, mapreduce

    r = DistRange(ctx, 0, 1_000_000)
    hits = [0]
    mapreduce(r, lambda i, emit: emit(0, 1) if i % 3 == 0 else None, "sum", hits)
    ```
"""

from typing import Any, Callable, List, Union

from .options import get_option
from .transport import ClusterCtx
from .utils import _block_bounds, _thread_chunks


class DistRange:
    """The integers start, start + step, ... strictly before end, without storing them.

    Args:
        ctx: The worker's cluster context.
        start: First value.
        end: Exclusive bound.
        step: Non-zero stride, negative to count down.
        chunk: Length of the chunks dealt to threads. Defaults to option `blaze.range_chunk`.

    Raises:
        ValueError: If `step` is 0 or `chunk` is not positive.
    """

    def __init__(
        self,
        ctx: ClusterCtx,
        start: int,
        end: int,
        step: int = 1,
        chunk: Union[int, None] = None,
    ) -> None:
        if step == 0:
            raise ValueError("DistRange step must not be zero")
        self.ctx = ctx
        self.start = start
        self.end = end
        self.step = step
        self.chunk = chunk if chunk is not None else get_option("range_chunk")
        if self.chunk < 1:
            raise ValueError(f"chunk must be positive, got {self.chunk}")

    def __repr__(self) -> str:
        return f"DistRange({self.start}, {self.end}, {self.step}, rank={self.ctx.rank}/{self.ctx.size})"

    def __len__(self) -> int:
        """Number of values in the whole range, across all workers."""
        return len(range(self.start, self.end, self.step))

    def global_size(self) -> int:
        return len(self)

    def local_range(self) -> range:
        """The block of the range owned by this worker."""
        lo, hi = _block_bounds(len(self), self.ctx.size, self.ctx.rank)
        return range(self.start, self.end, self.step)[lo:hi]

    def thread_chunks(self, thread: int) -> List[range]:
        """The chunks of this worker's block that compute thread `thread` works through."""
        local = self.local_range()
        return [
            local[lo:hi]
            for lo, hi in _thread_chunks(
                len(local), self.ctx.threads_per_worker, thread, self.chunk
            )
        ]

    def foreach(self, fn: Callable[[int], Any]) -> None:
        """Calls `fn(value)` once for every value of this worker's block, on all compute threads.

        Every worker calls it to cover the whole range. If `fn` raises on several threads, the
        exception of the lowest thread index propagates.
        """

        def run(thread: int) -> None:
            for chunk in self.thread_chunks(thread):
                for value in chunk:
                    fn(value)

        self.ctx.parallel(run)
