"""Utility functions that move data in and out of the distributed containers.

`distribute` turns a local list, numpy array or dict on rank 0 into a DistVector or
DistHashMap, and `collect` does the reverse. `load_file` reads text files in parallel into a
DistVector of lines; `load_edges` and `load_points` parse edge lists and point clouds on top
of it. `foreach` and `topk` are functional spellings of the container methods.
"""

import io
import os
from collections.abc import Mapping
from typing import Any, Callable, Dict, Iterable, List, Tuple, Union

import numpy as np
import pandas as pd

from .DistHashMap import DistHashMap
from .DistRange import DistRange
from .DistVector import DistVector
from .display import _log
from .errors import InputError
from .transport import ClusterCtx
from .utils import _block_bounds, _raise_collectively
from .wire import (
    PICKLE,
    STR,
    Codec,
    WireBuffer,
    codec_from_name,
    decode_pairs,
    encode_pairs,
    infer_codec,
)

_READ_BLOCK = 1 << 16


# -----------------------
# Codecs and blocks
# -----------------------
def _common_codec(values: Iterable[Any]) -> Union[Codec, None]:
    """The codec inferred for every value, pickle if they disagree, None if there are none."""
    names = {infer_codec(v).name for v in values}
    if not names:
        return None
    return codec_from_name(names.pop()) if len(names) == 1 else PICKLE


def _shared_codec(ctx: ClusterCtx, codec: Union[Codec, None], values: Iterable[Any]) -> Codec:
    """Agrees on one codec for values spread over all workers. Collective."""
    if codec is not None:
        return codec
    mine = _common_codec(values)
    name = mine.name if mine else ""
    names = [name] if ctx.size == 1 else [n.decode("utf-8") for n in ctx.allgather(name.encode("utf-8"))]
    found = {n for n in names if n}
    if len(found) == 1:
        return codec_from_name(found.pop())
    return PICKLE


def _encode_array(buf: WireBuffer, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    buf.put_str(array.dtype.str)
    buf.put_varint(array.ndim)
    for dim in array.shape:
        buf.put_varint(dim)
    buf.put_bytes(array.tobytes())


def _decode_array(buf: WireBuffer) -> np.ndarray:
    dtype = np.dtype(buf.get_str())
    shape = tuple(buf.get_varint() for _ in range(buf.get_varint()))
    return np.frombuffer(buf.get_bytes(), dtype=dtype).reshape(shape).copy()


def _encode_values(values: List[Any], codec: Codec) -> bytes:
    buf = WireBuffer()
    buf.put_varint(len(values))
    for value in values:
        codec.encode(buf, value)
    return buf.getvalue()


def _decode_values(buf: WireBuffer, codec: Codec) -> List[Any]:
    return [codec.decode(buf) for _ in range(buf.get_varint())]


# -----------------------
# distribute / collect
# -----------------------
def distribute(
    ctx: ClusterCtx,
    data: Union[List, np.ndarray, Dict, None] = None,
    key_codec: Union[Codec, None] = None,
    value_codec: Union[Codec, None] = None,
) -> Union[DistVector, DistHashMap]:
    """Spreads rank 0's local data over the cluster. Collective.

    A sequence becomes a DistVector cut into contiguous blocks of ceil(n / size) elements, the
    last block short. A numpy array is cut the same way along its first axis and its shards
    stay numpy arrays. A dict becomes a DistHashMap with every key on its owner rank.

    Example:
        ```python
        v = distribute(ctx, [5, 6, 7, 8] if ctx.rank == 0 else None)
        v.local  # [5, 6] on rank 0 and [7, 8] on rank 1 of a 2-worker cluster
        ```

    Args:
        ctx: The worker's cluster context.
        data: The data, read on rank 0 only. Other ranks pass None.
        key_codec: Codec of dict keys. Inferred when omitted.
        value_codec: Codec of elements or dict values. Inferred when omitted.

    Returns:
        A DistVector or a DistHashMap.
    """
    size = ctx.size
    header = WireBuffer()
    outgoing = [b""] * size
    if ctx.rank == 0:
        data = [] if data is None else data
        if isinstance(data, Mapping):
            kind = "map"
            kc = key_codec or _common_codec(data.keys()) or PICKLE
            vc = value_codec or _common_codec(data.values()) or PICKLE
            parts: List[List[Tuple[Any, Any]]] = [[] for _ in range(size)]
            for key, value in data.items():
                parts[kc.hash(key) % size if size > 1 else 0].append((key, value))
            outgoing = [encode_pairs(part, kc, vc)[0] for part in parts]
        elif isinstance(data, np.ndarray):
            kind, kc, vc = "ndarray", None, None
            for r in range(size):
                lo, hi = _block_bounds(len(data), size, r)
                buf = WireBuffer()
                _encode_array(buf, data[lo:hi])
                outgoing[r] = buf.getvalue()
        else:
            kind, kc = "vector", None
            data = list(data)
            vc = value_codec or _common_codec(data) or PICKLE
            for r in range(size):
                lo, hi = _block_bounds(len(data), size, r)
                outgoing[r] = _encode_values(data[lo:hi], vc)
        header.put_str(kind)
        header.put_str(kc.name if kc else "")
        header.put_str(vc.name if vc else "")

    header = WireBuffer(ctx.broadcast(header.getvalue()))
    kind, kc_name, vc_name = header.get_str(), header.get_str(), header.get_str()
    kc = codec_from_name(kc_name) if kc_name else None
    vc = codec_from_name(vc_name) if vc_name else None
    mine = ctx.all_to_all(outgoing)[0]

    if kind == "map":
        target = DistHashMap(ctx, kc, vc)
        decode_pairs(mine, kc, vc, target.local.__setitem__)
        return target
    if kind == "ndarray":
        return DistVector(ctx, _decode_array(WireBuffer(mine)))
    return DistVector(ctx, _decode_values(WireBuffer(mine), vc), codec=vc)


def collect(container: Union[DistVector, DistHashMap]) -> Union[List, np.ndarray, Dict, None]:
    """Gathers a whole container on rank 0, in order for vectors. Collective.

    Returns:
        A list (a numpy array for array shards) or a dict on rank 0, None elsewhere.
    """
    ctx = container.ctx
    if isinstance(container, DistHashMap):
        kc = _shared_codec(ctx, container.key_codec, container.local.keys())
        vc = _shared_codec(ctx, container.value_codec, container.local.values())
        parts = ctx.gather(encode_pairs(container.local.items(), kc, vc)[0])
        if parts is None:
            return None
        merged: Dict[Any, Any] = {}
        for part in parts:
            decode_pairs(part, kc, vc, merged.__setitem__)
        return merged

    is_array = isinstance(container.local, np.ndarray)
    codec = _shared_codec(ctx, container.codec, [] if is_array else container.local)
    buf = WireBuffer()
    buf.put_varint(int(is_array))
    if is_array:
        _encode_array(buf, container.local)
    else:
        buf.data += _encode_values(container.local, codec)
    parts = ctx.gather(buf.getvalue())
    if parts is None:
        return None
    blocks = []
    for part in parts:
        reader = WireBuffer(part)
        if reader.get_varint():
            blocks.append(_decode_array(reader))
        else:
            blocks.append(_decode_values(reader, codec))
    if blocks and all(isinstance(b, np.ndarray) for b in blocks):
        return np.concatenate(blocks, axis=0)
    return [value for block in blocks for value in block]


# -----------------------
# Files
# -----------------------
class _ByteStream:
    """Several files read as one byte stream, with a newline added after any file lacking one."""

    def __init__(self, paths: List[str], sizes: List[int], virtual_newline: List[bool]) -> None:
        self.segments = []
        offset = 0
        for path, size, extra in zip(paths, sizes, virtual_newline):
            self.segments.append((offset, path, size, extra))
            offset += size + int(extra)
        self.total = offset

    def read(self, start: int, stop: int) -> bytes:
        out = bytearray()
        for offset, path, size, extra in self.segments:
            seg_end = offset + size + int(extra)
            if seg_end <= start or offset >= stop:
                continue
            lo = max(start, offset) - offset
            hi = min(stop, seg_end) - offset
            if lo < size:
                with open(path, "rb") as f:
                    f.seek(lo)
                    out += f.read(min(hi, size) - lo)
            if extra and hi == size + 1:
                out += b"\n"
        return bytes(out)

    def find_newline(self, pos: int) -> int:
        """Position of the first newline at or after `pos`, or the stream length if none."""
        while pos < self.total:
            block = self.read(pos, min(pos + _READ_BLOCK, self.total))
            found = block.find(b"\n")
            if found >= 0:
                return pos + found
            pos += len(block)
        return self.total


def _owned_lines(stream: _ByteStream, lo: int, hi: int) -> List[str]:
    """Lines whose first byte lies in [lo, hi)."""
    if lo >= hi:
        return []
    start = lo
    if lo > 0 and stream.read(lo - 1, lo) != b"\n":
        start = stream.find_newline(lo) + 1
    if start >= hi:
        return []
    end = min(stream.find_newline(hi - 1) + 1, stream.total)
    data = stream.read(start, end)
    lines = data.split(b"\n")
    if data.endswith(b"\n"):
        lines.pop()
    return [line.decode("utf-8", "surrogateescape") for line in lines]


def load_file(ctx: ClusterCtx, paths: Union[str, os.PathLike, List]) -> DistVector:
    """Reads text files in parallel into a DistVector of lines, in file order. Collective.

    The files are treated as one byte stream, split into equal byte ranges, one per worker. A
    line belongs to the worker whose range holds its first byte. Line terminators are
    dropped, a final newline is optional, and each file starts a new line.

    Args:
        ctx: The worker's cluster context.
        paths: A path or a list of paths, readable by every worker.

    Returns:
        A DistVector of str.

    Raises:
        InputError: If a file is missing on some worker, or workers see different sizes.
    """
    paths = [os.fspath(paths)] if isinstance(paths, (str, os.PathLike)) else [os.fspath(p) for p in paths]
    sizes, problem = [], None
    for path in paths:
        try:
            sizes.append(os.path.getsize(path))
        except OSError as e:
            problem = problem or f"cannot read {path}: {e.strerror or e}"
            sizes.append(-1)
    _raise_collectively(ctx, problem, InputError)

    if ctx.size > 1:
        buf = WireBuffer()
        for size in sizes:
            buf.put_varint(size)
        seen = [WireBuffer(part) for part in ctx.allgather(buf.getvalue())]
        views = [[reader.get_varint() for _ in paths] for reader in seen]
        mismatch = None
        for i, path in enumerate(paths):
            if len({view[i] for view in views}) > 1:
                mismatch = f"workers see different sizes for {path}: {[view[i] for view in views]}"
                break
        if mismatch:
            raise InputError(mismatch)

    virtual_newline = []
    for path, size in zip(paths, sizes):
        if size == 0:
            virtual_newline.append(False)
            continue
        with open(path, "rb") as f:
            f.seek(size - 1)
            virtual_newline.append(f.read(1) != b"\n")

    stream = _ByteStream(paths, sizes, virtual_newline)
    lo, hi = _block_bounds(stream.total, ctx.size, ctx.rank)
    lines = _owned_lines(stream, lo, hi)
    _log(f"loaded {len(lines)} lines from bytes [{lo}, {hi})", ctx.rank)
    return DistVector(ctx, lines, codec=STR)


def load_edges(ctx: ClusterCtx, paths: Union[str, os.PathLike, List]) -> DistVector:
    """Reads an edge list, two integer page ids per line separated by spaces. Collective.

    Blank lines and lines starting with "#" are skipped.

    Returns:
        A DistVector whose shards are int64 arrays of shape (edges, 2).

    Raises:
        InputError: On a line that is not two integers.
    """
    lines = load_file(ctx, paths)
    edges, problem = [], None
    for i, line in enumerate(lines.local):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        try:
            if len(fields) != 2:
                raise ValueError(f"{len(fields)} fields")
            edges.append((int(fields[0]), int(fields[1])))
        except ValueError as e:
            problem = f"line {lines.local_start + i + 1}: expected two page ids, got {line!r} ({e})"
            break
    _raise_collectively(ctx, problem, InputError)
    return DistVector(ctx, np.array(edges, dtype=np.int64).reshape(-1, 2))


def load_points(ctx: ClusterCtx, paths: Union[str, os.PathLike, List]) -> DistVector:
    """Reads points from CSV without header, one point per row. Collective.

    Returns:
        A DistVector whose shards are float64 arrays of shape (points, dim).

    Raises:
        InputError: On rows that do not parse as floats, or rows of different lengths.
    """
    lines = load_file(ctx, paths)
    rows = [line for line in lines.local if line.strip()]
    problem = None
    points = np.empty((0, 0))
    if rows:
        try:
            points = pd.read_csv(
                io.StringIO("\n".join(rows)), header=None, dtype=float
            ).to_numpy()
            if np.isnan(points).any():
                raise ValueError("missing or non-numeric coordinates")
        except (ValueError, pd.errors.ParserError) as e:
            problem = f"malformed point rows from line {lines.local_start + 1}: {e}"
    _raise_collectively(ctx, problem, InputError)

    dims = {points.shape[1]} if rows else set()
    if ctx.size > 1:
        encoded = ctx.allgather(str(points.shape[1] if rows else "").encode("utf-8"))
        dims = {int(d) for d in encoded if d}
    if len(dims) > 1:
        raise InputError(f"points have differing dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    return DistVector(ctx, points if rows else np.empty((0, dim)))


# -----------------------
# Functional spellings
# -----------------------
def foreach(container: Union[DistRange, DistVector, DistHashMap], fn: Callable) -> None:
    """Applies `fn` to every local element of `container`. See the container's `foreach`."""
    container.foreach(fn)


def topk(vector: DistVector, k: int, **kwargs: Any) -> List[Any]:
    """The k highest-priority elements of `vector` on every worker. See `DistVector.topk`."""
    return vector.topk(k, **kwargs)
