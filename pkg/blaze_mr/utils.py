"""
Utility functions shared by the containers and the MapReduce engine.
"""
from inspect import getsourcelines
from typing import Any, Callable, Iterator, List, Tuple, Type, Union

from .errors import JobError
from .transport import ClusterCtx
from .wire import PICKLE, Codec, WireBuffer, codec_from_name, infer_codec


def _describe_callable(fn: Callable) -> str:
    """Create a short string representation of a mapper or reducer for progress lines.

    Args:
        fn: An arbitrary function, possibly in lambda form

    Returns:
        The function's qualified name, or the source line of a lambda
    """
    name = getattr(fn, "__qualname__", None) or repr(fn)
    if name.endswith("<lambda>"):
        try:
            return "".join(getsourcelines(fn)[0]).strip(" .\n")
        except (OSError, TypeError):
            pass
    return name


def _block_bounds(n: int, size: int, rank: int) -> Tuple[int, int]:
    """Half-open range of the `rank`-th of `size` contiguous blocks of ceil(n / size) items.

    Trailing blocks are short or empty.
    """
    block = -(-n // size) if n else 0
    start = min(rank * block, n)
    return start, min(start + block, n)


def _thread_chunks(
    length: int, threads: int, thread: int, chunk: int
) -> Iterator[Tuple[int, int]]:
    """Chunks of `range(length)` dealt round-robin, yielding those of `thread` as (start, stop)."""
    for start in range(thread * chunk, length, threads * chunk):
        yield start, min(start + chunk, length)


# -----------------------
# Collective helpers
# -----------------------
def _allsum_ints(ctx: ClusterCtx, values: List[int]) -> List[int]:
    """Element-wise sum of non-negative integer vectors over every worker."""
    if ctx.size == 1:
        return list(values)

    def encode(ints: List[int]) -> bytes:
        buf = WireBuffer()
        for v in ints:
            buf.put_varint(v)
        return buf.getvalue()

    def decode(data: bytes) -> List[int]:
        buf = WireBuffer(data)
        return [buf.get_varint() for _ in range(len(values))]

    def merge(a: bytes, b: bytes) -> bytes:
        return encode([x + y for x, y in zip(decode(a), decode(b))])

    return decode(ctx.allreduce(encode(values), merge))


def _raise_collectively(
    ctx: ClusterCtx,
    message: Union[str, None],
    exception_to_raise: Type[BaseException],
) -> None:
    """Raises the same exception on every worker if any worker has a failure message.

    Args:
        ctx: The worker's context.
        message: This worker's failure message, or None if it is fine.
        exception_to_raise: Raised with the message of the lowest failing rank.

    Returns:
        None
    """
    if ctx.size == 1:
        if message:
            raise exception_to_raise(message)
        return
    messages = [m.decode("utf-8") for m in ctx.allgather((message or "").encode("utf-8"))]
    failed = [(rank, m) for rank, m in enumerate(messages) if m]
    if failed:
        rank, first = failed[0]
        raise exception_to_raise(f"rank {rank}: {first}")


def _agree_codec(
    ctx: ClusterCtx, codec: Union[Codec, None], sample: Any, what: str
) -> Codec:
    """Settles on one codec on every worker. Collective.

    Each worker proposes its explicit codec, or one inferred from its own sample if it has
    one, and every worker adopts the single proposal.

    Raises:
        JobError: If two workers propose different codecs.
    """
    if codec is not None:
        mine = codec.name
    else:
        mine = infer_codec(sample).name if sample is not None else ""
    if ctx.size == 1:
        names = [mine]
    else:
        names = [n.decode("utf-8") for n in ctx.allgather(mine.encode("utf-8"))]
    proposed = sorted({n for n in names if n})
    if len(proposed) > 1:
        raise JobError(
            f"workers disagree on the {what} codec: {proposed}; pass one explicitly"
        )
    if codec is not None:
        return codec
    return codec_from_name(proposed[0]) if proposed else PICKLE


def _propagate_failure(ctx: ClusterCtx, error: Union[BaseException, None]) -> None:
    """Makes a local failure abort the job on every worker. Collective.

    The failing worker re-raises its own exception unchanged; the others raise JobError
    naming the lowest failing rank.
    """
    if ctx.size > 1:
        message = "" if error is None else f"{type(error).__name__}: {error}"
        reports = [m.decode("utf-8") for m in ctx.allgather(message.encode("utf-8"))]
        if error is None:
            for rank, report in enumerate(reports):
                if report:
                    raise JobError(f"rank {rank} aborted the job: {report}")
    if error is not None:
        raise error
