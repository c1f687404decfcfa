"""Compact binary codec for MapReduce payloads.

Values are written back to back in a fixed order with no field tags and no wire types:
unsigned integers as base-128 varints, signed integers zigzag-mapped then varint-encoded,
floats as fixed-width little-endian IEEE-754, strings and byte strings as a varint length
followed by the raw bytes. Both ends know the order, so a (small int, small int) pair takes
exactly two bytes. The bit-exact format is documented in docs/wire-format.md.
"""

import pickle
import struct
from typing import Any, Callable, List, Tuple, Union

import numpy as np
from fnvhash import fnv1a_64

from .errors import DecodeError

MAX_UVARINT = (1 << 64) - 1
MIN_INT64 = -(1 << 63)
MAX_INT64 = (1 << 63) - 1
MAX_VARINT_BYTES = 10

_F64 = struct.Struct("<d")
_F32 = struct.Struct("<f")


class WireBuffer:
    """Growable byte sequence with a read cursor.

    Writes append to the end; reads advance `pos`. A buffer is used by a single thread.

    Args:
        data: Optional initial contents, e.g. a received payload to decode.
    """

    __slots__ = ("data", "pos")

    def __init__(self, data: Union[bytes, bytearray, memoryview] = b"") -> None:
        self.data = bytearray(data)
        self.pos = 0

    def __len__(self) -> int:
        return len(self.data)

    def getvalue(self) -> bytes:
        return bytes(self.data)

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def at_end(self) -> bool:
        return self.pos >= len(self.data)

    def _take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(
                f"truncated {what}: need {n} bytes, {self.remaining()} left",
                offset=self.pos,
            )
        chunk = bytes(self.data[self.pos : self.pos + n])
        self.pos += n
        return chunk

    # -----------------------
    # Integers
    # -----------------------
    def put_varint(self, value: int) -> None:
        """Appends an unsigned 64-bit integer, 7 bits per byte, low group first."""
        if value < 0 or value > MAX_UVARINT:
            raise ValueError(f"varint out of unsigned 64-bit range: {value}")
        data = self.data
        while value > 0x7F:
            data.append((value & 0x7F) | 0x80)
            value >>= 7
        data.append(value)

    def get_varint(self) -> int:
        data = self.data
        start = pos = self.pos
        end = len(data)
        result = 0
        shift = 0
        for i in range(MAX_VARINT_BYTES):
            if pos >= end:
                raise DecodeError("truncated varint", offset=start)
            byte = data[pos]
            pos += 1
            if i == MAX_VARINT_BYTES - 1 and byte > 1:
                raise DecodeError("varint overflows 64 bits", offset=start)
            result |= (byte & 0x7F) << shift
            if byte < 0x80:
                self.pos = pos
                return result
            shift += 7
        raise DecodeError("varint longer than 10 bytes", offset=start)  # pragma: no cover

    def put_zigzag(self, value: int) -> None:
        """Appends a signed 64-bit integer so that small magnitudes stay short."""
        if value < MIN_INT64 or value > MAX_INT64:
            raise ValueError(f"zigzag out of signed 64-bit range: {value}")
        self.put_varint((value << 1) ^ (value >> 63))

    def get_zigzag(self) -> int:
        u = self.get_varint()
        return (u >> 1) ^ -(u & 1)

    # -----------------------
    # Floats
    # -----------------------
    def put_f64(self, value: float) -> None:
        self.data += _F64.pack(value)

    def get_f64(self) -> float:
        return _F64.unpack(self._take(8, "f64"))[0]

    def put_f32(self, value: float) -> None:
        self.data += _F32.pack(value)

    def get_f32(self) -> float:
        return _F32.unpack(self._take(4, "f32"))[0]

    # -----------------------
    # Strings
    # -----------------------
    def put_bytes(self, value: Union[bytes, bytearray]) -> None:
        self.put_varint(len(value))
        self.data += value

    def get_bytes(self) -> bytes:
        start = self.pos
        n = self.get_varint()
        if n > self.remaining():
            raise DecodeError(
                f"declared length {n} exceeds the {self.remaining()} bytes left",
                offset=start,
            )
        return self._take(n, "bytes")

    def put_str(self, value: Union[str, bytes]) -> None:
        """Appends a string as its raw bytes. Bytes that are not UTF-8 survive a round trip."""
        self.put_bytes(
            value.encode("utf-8", "surrogateescape") if isinstance(value, str) else value
        )

    def get_str(self) -> str:
        return self.get_bytes().decode("utf-8", "surrogateescape")


# -----------------------
# Codecs
# -----------------------
class Codec:
    """Encodes and decodes one value type. Key codecs also provide a stable hash.

    Subclasses set `name` and implement `encode` and `decode`. Codecs are stateless and can be
    shared across threads.
    """

    name = "codec"

    def encode(self, buf: WireBuffer, value: Any) -> None:
        raise NotImplementedError

    def decode(self, buf: WireBuffer) -> Any:
        raise NotImplementedError

    def dumps(self, value: Any) -> bytes:
        buf = WireBuffer()
        self.encode(buf, value)
        return buf.getvalue()

    def loads(self, data: bytes) -> Any:
        return self.decode(WireBuffer(data))

    def canonical(self, key: Any) -> Any:
        """The representative of all keys equal to `key`, the one that gets hashed."""
        return key

    def hash(self, key: Any) -> int:
        """64-bit FNV-1a of the encoded key. Identical on every worker and every run.

        Keys that compare equal hash equally, so 0.0 and -0.0 share an owner.
        """
        return fnv1a_64(self.dumps(self.canonical(key)))

    def __repr__(self) -> str:
        return f"<Codec {self.name}>"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Codec) and other.name == self.name

    def __hash__(self) -> int:
        return hash(self.name)


class UVarintCodec(Codec):
    name = "uvarint"

    def encode(self, buf: WireBuffer, value: int) -> None:
        buf.put_varint(int(value))

    def decode(self, buf: WireBuffer) -> int:
        return buf.get_varint()


class ZigZagCodec(Codec):
    name = "zigzag"

    def encode(self, buf: WireBuffer, value: int) -> None:
        buf.put_zigzag(int(value))

    def decode(self, buf: WireBuffer) -> int:
        return buf.get_zigzag()


class F64Codec(Codec):
    name = "f64"

    def canonical(self, key: float) -> float:
        return 0.0 if key == 0 else key

    def encode(self, buf: WireBuffer, value: float) -> None:
        buf.put_f64(value)

    def decode(self, buf: WireBuffer) -> float:
        return buf.get_f64()


class F32Codec(Codec):
    name = "f32"

    def canonical(self, key: float) -> float:
        return 0.0 if key == 0 else key

    def encode(self, buf: WireBuffer, value: float) -> None:
        buf.put_f32(value)

    def decode(self, buf: WireBuffer) -> float:
        return buf.get_f32()


class StrCodec(Codec):
    name = "str"

    def encode(self, buf: WireBuffer, value: str) -> None:
        buf.put_str(value)

    def decode(self, buf: WireBuffer) -> str:
        return buf.get_str()


class BytesCodec(Codec):
    name = "bytes"

    def encode(self, buf: WireBuffer, value: bytes) -> None:
        buf.put_bytes(value)

    def decode(self, buf: WireBuffer) -> bytes:
        return buf.get_bytes()


class F64ArrayCodec(Codec):
    """N-dimensional float64 arrays: varint ndim, varint dims, then little-endian doubles."""

    name = "f64array"

    def encode(self, buf: WireBuffer, value: Any) -> None:
        array = np.asarray(value, dtype="<f8")
        buf.put_varint(array.ndim)
        for dim in array.shape:
            buf.put_varint(dim)
        buf.data += np.ascontiguousarray(array).tobytes()

    def decode(self, buf: WireBuffer) -> np.ndarray:
        start = buf.pos
        ndim = buf.get_varint()
        if ndim > 32:
            raise DecodeError(f"f64array with {ndim} dimensions", offset=start)
        shape = tuple(buf.get_varint() for _ in range(ndim))
        if any(dim > MAX_INT64 for dim in shape):
            raise DecodeError(f"f64array dimension out of range in {shape}", offset=start)
        count = int(np.prod(shape, dtype=object)) if shape else 1
        if count * 8 > buf.remaining():
            raise DecodeError(
                f"f64array of shape {shape} exceeds the {buf.remaining()} bytes left",
                offset=start,
            )
        raw = buf._take(count * 8, "f64array")
        try:
            return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        except ValueError as e:
            raise DecodeError(f"f64array of shape {shape}: {e}", offset=start) from e


class TupleCodec(Codec):
    """Fixed-arity tuples: each field with its own codec, in order, nothing in between."""

    def __init__(self, *codecs: Codec) -> None:
        self.codecs = codecs
        self.name = f"tuple({','.join(codec.name for codec in codecs)})"

    def encode(self, buf: WireBuffer, value: Tuple) -> None:
        if len(value) != len(self.codecs):
            raise ValueError(
                f"{self.name} expects {len(self.codecs)} fields, got {len(value)}"
            )
        for codec, field in zip(self.codecs, value):
            codec.encode(buf, field)

    def decode(self, buf: WireBuffer) -> Tuple:
        return tuple(codec.decode(buf) for codec in self.codecs)

    def canonical(self, key: Tuple) -> Tuple:
        return tuple(codec.canonical(field) for codec, field in zip(self.codecs, key))


class PickleCodec(Codec):
    """Fallback for user types that bring no codec of their own.

    Only use for keys whose pickled form is deterministic, since the hash is taken over it.
    """

    name = "pickle"

    def encode(self, buf: WireBuffer, value: Any) -> None:
        buf.put_bytes(pickle.dumps(value, protocol=4))

    def decode(self, buf: WireBuffer) -> Any:
        start = buf.pos
        raw = buf.get_bytes()
        try:
            return pickle.loads(raw)
        except Exception as e:
            raise DecodeError(f"unpicklable value: {e}", offset=start) from e


UVARINT = UVarintCodec()
ZIGZAG = ZigZagCodec()
F64 = F64Codec()
F32 = F32Codec()
STR = StrCodec()
BYTES = BytesCodec()
F64_ARRAY = F64ArrayCodec()
PICKLE = PickleCodec()

_SCALAR_CODECS = {
    codec.name: codec for codec in [UVARINT, ZIGZAG, F64, F32, STR, BYTES, F64_ARRAY, PICKLE]
}


def _split_fields(inner: str) -> List[str]:
    fields, depth, start = [], 0, 0
    for i, ch in enumerate(inner):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            fields.append(inner[start:i])
            start = i + 1
    fields.append(inner[start:])
    return [field.strip() for field in fields if field.strip()]


def codec_from_name(name: str) -> Codec:
    """Rebuilds a codec from its `name`, e.g. "tuple(zigzag,f64array)".

    Raises:
        ValueError: If the name is not a known codec.
    """
    name = name.strip()
    if name in _SCALAR_CODECS:
        return _SCALAR_CODECS[name]
    if name.startswith("tuple(") and name.endswith(")"):
        return TupleCodec(*[codec_from_name(field) for field in _split_fields(name[6:-1])])
    raise ValueError(f"Unknown codec name: {name!r}")


def infer_codec(value: Any) -> Codec:
    """Picks a codec for a sample value.

    ints map to zigzag (they may be negative), floats to f64, str to str, bytes to bytes,
    numpy arrays to f64array, tuples field by field, anything else to pickle.
    """
    if isinstance(value, (bool, np.bool_)):
        return PICKLE
    if isinstance(value, (int, np.integer)):
        return ZIGZAG
    if isinstance(value, (float, np.floating)):
        return F64
    if isinstance(value, str):
        return STR
    if isinstance(value, (bytes, bytearray)):
        return BYTES
    if isinstance(value, np.ndarray):
        return F64_ARRAY
    if isinstance(value, tuple) and value:
        return TupleCodec(*[infer_codec(field) for field in value])
    return PICKLE


def resolve_codec(codec: Union[Codec, str, None], sample: Any = None) -> Union[Codec, None]:
    """Accepts a codec, a codec name, or None (infer from `sample` when one is given)."""
    if isinstance(codec, Codec):
        return codec
    if isinstance(codec, str):
        return codec_from_name(codec)
    return infer_codec(sample) if sample is not None else None


# -----------------------
# Pairs
# -----------------------
def encode_pair(
    buf: WireBuffer, key: Any, value: Any, key_codec: Codec, value_codec: Codec
) -> None:
    """Appends key bytes immediately followed by value bytes, with no separator."""
    key_codec.encode(buf, key)
    value_codec.encode(buf, value)


def decode_pair(buf: WireBuffer, key_codec: Codec, value_codec: Codec) -> Tuple[Any, Any]:
    key = key_codec.decode(buf)
    return key, value_codec.decode(buf)


def encode_pairs(
    pairs: Any, key_codec: Codec, value_codec: Codec
) -> Tuple[bytes, int]:
    """Encodes an iterable of pairs as a varint count followed by the pairs.

    Returns:
        The payload and the number of pairs in it.
    """
    body = WireBuffer()
    count = 0
    for key, value in pairs:
        key_codec.encode(body, key)
        value_codec.encode(body, value)
        count += 1
    head = WireBuffer()
    head.put_varint(count)
    return bytes(head.data + body.data), count


def decode_pairs(
    payload: bytes,
    key_codec: Codec,
    value_codec: Codec,
    sink: Callable[[Any, Any], None],
) -> int:
    """Decodes a payload written by `encode_pairs`, handing each pair to `sink`.

    Returns:
        The number of pairs decoded.

    Raises:
        DecodeError: If the payload is truncated or has bytes left over.
    """
    buf = WireBuffer(payload)
    count = buf.get_varint()
    if count > buf.remaining():
        # Every pair takes at least one byte
        raise DecodeError(
            f"declared {count} pairs in {buf.remaining()} bytes", offset=0
        )
    for _ in range(count):
        key = key_codec.decode(buf)
        sink(key, value_codec.decode(buf))
    if not buf.at_end():
        raise DecodeError(f"{buf.remaining()} trailing bytes after {count} pairs", offset=buf.pos)
    return count
