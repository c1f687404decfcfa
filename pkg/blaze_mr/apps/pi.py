"""Monte Carlo estimate of pi on the dense MapReduce path.

Sample i draws x and y uniformly from [0, 1) and hits when x^2 + y^2 < 1, so that
4 * hits / n estimates pi. Every compute thread draws from its own Philox stream, seeded by
(seed, rank, thread), and walks its chunks of the range in a fixed order. Hit counts therefore
depend only on the seed, the number of workers and the threads per worker.
"""

from typing import Any, Callable, List, Tuple

import numpy as np

from ..DistRange import DistRange
from ..display import _log
from ..mapreduce import JobCounters, mapreduce
from ..transport import ClusterCtx, current_thread_index
from ..utils import _allsum_ints
from ..wire import UVARINT

PI_CHUNK = 1 << 16

RngFactory = Callable[[int, int, int], Any]


def thread_rng(seed: int, rank: int, thread: int) -> np.random.Generator:
    """Counter-based random stream of one compute thread of one worker."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rank, thread])))


def _hits(rng: Any, n: int) -> int:
    xy = np.asarray(rng.random((n, 2)))
    return int(np.count_nonzero(np.einsum("ij,ij->i", xy, xy) < 1.0))


def _check_samples(n: int) -> None:
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")


def count_hits(
    ctx: ClusterCtx,
    n: int,
    seed: int = 0,
    rng_factory: RngFactory = thread_rng,
    chunk: int = PI_CHUNK,
    batched: bool = True,
) -> Tuple[int, JobCounters]:
    """Number of the n samples inside the quarter circle, on every worker. Collective.

    Args:
        ctx: The worker's cluster context.
        n: Number of samples, across all workers.
        seed: Seed of the random streams.
        rng_factory: `rng_factory(seed, rank, thread)` returns an object with a
            numpy-style `random(shape)` method.
        chunk: Samples per chunk of work.
        batched: Draw a whole chunk at once. Without it, every sample is its own map call.

    Returns:
        The hit count and this worker's JobCounters.

    Raises:
        ValueError: If n < 1.
    """
    _check_samples(n)
    rngs = [rng_factory(seed, ctx.rank, t) for t in range(ctx.threads_per_worker)]
    samples = DistRange(ctx, 0, n, chunk=chunk)

    if batched:

        def mapper(block: range, emit: Callable[[Any, Any], None]) -> None:
            emit(0, _hits(rngs[current_thread_index()], len(block)))

    else:

        def mapper(i: int, emit: Callable[[Any, Any], None]) -> None:
            x, y = rngs[current_thread_index()].random(2)
            if x * x + y * y < 1.0:
                emit(0, 1)

    hits: List[int] = [0]
    counters = mapreduce(samples, mapper, "sum", hits, value_codec=UVARINT, batched=batched)
    return hits[0], counters


def monte_carlo_pi(
    ctx: ClusterCtx,
    n: int,
    seed: int = 0,
    rng_factory: RngFactory = thread_rng,
    chunk: int = PI_CHUNK,
) -> float:
    """Estimates pi from n samples. Collective.

    Example:
        ```python
        launch(2, lambda ctx: monte_carlo_pi(ctx, 10**6, seed=1))
        ```
    """
    hits, _ = count_hits(ctx, n, seed, rng_factory, chunk)
    estimate = 4.0 * hits / n
    _log(f"pi ~ {estimate:.6f} from {hits}/{n} hits", ctx.rank)
    return estimate


def pi_parallel_loop(
    ctx: ClusterCtx,
    n: int,
    seed: int = 0,
    rng_factory: RngFactory = thread_rng,
    chunk: int = PI_CHUNK,
) -> int:
    """Hit count from a plain thread loop over the same chunks and streams as `count_hits`.

    Each thread counts into its own integer, then the counts are summed within and across
    workers. Collective.
    """
    _check_samples(n)
    samples = DistRange(ctx, 0, n, chunk=chunk)

    def run(thread: int) -> int:
        rng = rng_factory(seed, ctx.rank, thread)
        return sum(_hits(rng, len(block)) for block in samples.thread_chunks(thread))

    return _allsum_ints(ctx, [sum(ctx.parallel(run))])[0]
