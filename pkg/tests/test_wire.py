import math
import struct

import numpy as np
import pytest
from fnvhash import fnv1a_64
from hypothesis import given, settings
from hypothesis import strategies as st
from pytest_cases import parametrize_with_cases

from blaze_mr.errors import DecodeError
from blaze_mr.wire import (
    F32,
    F64,
    F64_ARRAY,
    MAX_INT64,
    MAX_UVARINT,
    MIN_INT64,
    PICKLE,
    STR,
    UVARINT,
    ZIGZAG,
    TupleCodec,
    WireBuffer,
    codec_from_name,
    decode_pair,
    decode_pairs,
    encode_pair,
    encode_pairs,
    infer_codec,
)


# Helper function
def assert_same_value(a, b):
    if isinstance(a, np.ndarray):
        assert isinstance(b, np.ndarray)
        assert a.shape == b.shape
        assert np.array_equal(a, b)
    else:
        assert a == b


def encoded(put, value):
    buf = WireBuffer()
    getattr(buf, put)(value)
    return buf.getvalue()


# -----------------------
# Byte-exact encodings
# -----------------------
@pytest.mark.parametrize(
    "put, value, expected",
    [
        ("put_varint", 0, b"\x00"),
        ("put_varint", 1, b"\x01"),
        ("put_varint", 127, b"\x7f"),
        ("put_varint", 128, b"\x80\x01"),
        ("put_varint", 300, b"\xac\x02"),
        ("put_zigzag", 0, b"\x00"),
        ("put_zigzag", -1, b"\x01"),
        ("put_zigzag", 1, b"\x02"),
        ("put_zigzag", -2, b"\x03"),
        ("put_str", "", b"\x00"),
        ("put_str", "hi", b"\x02hi"),
        ("put_f64", 0.0, b"\x00" * 8),
        ("put_f64", 1.5, struct.pack("<Q", 0x3FF8000000000000)),
        ("put_f32", 1.5, struct.pack("<I", 0x3FC00000)),
    ],
)
def test_encoding_bytes(put, value, expected):
    assert encoded(put, value) == expected


def test_varint_max_takes_ten_bytes():
    data = encoded("put_varint", MAX_UVARINT)
    assert len(data) == 10
    assert WireBuffer(data).get_varint() == MAX_UVARINT


@pytest.mark.parametrize("value", [MIN_INT64, MAX_INT64, -1, 0])
def test_zigzag_boundaries(value):
    assert WireBuffer(encoded("put_zigzag", value)).get_zigzag() == value


def test_nan_payload_survives():
    bits = 0x7FF8000000000123
    nan = struct.unpack("<d", struct.pack("<Q", bits))[0]
    out = WireBuffer(encoded("put_f64", nan)).get_f64()
    assert math.isnan(out)
    assert struct.unpack("<Q", struct.pack("<d", out))[0] == bits


@pytest.mark.parametrize(
    "key, value, key_codec, value_codec, n_bytes",
    [
        (1, 1, UVARINT, UVARINT, 2),
        (0, 0, UVARINT, UVARINT, 2),
        (127, 127, UVARINT, UVARINT, 2),
        ("the", 42, STR, UVARINT, 5),
    ],
)
def test_pair_sizes(key, value, key_codec, value_codec, n_bytes):
    buf = WireBuffer()
    encode_pair(buf, key, value, key_codec, value_codec)
    assert len(buf) == n_bytes
    assert decode_pair(WireBuffer(buf.getvalue()), key_codec, value_codec) == (key, value)


def test_zero_pair_is_two_zero_bytes():
    buf = WireBuffer()
    encode_pair(buf, 0, 0, UVARINT, UVARINT)
    assert buf.getvalue() == b"\x00\x00"


# -----------------------
# Properties
# -----------------------
@settings(max_examples=2000)
@given(st.integers(min_value=0, max_value=MAX_UVARINT))
def test_varint_round_trip_and_minimal_length(value):
    data = encoded("put_varint", value)
    assert len(data) == max(1, -(-value.bit_length() // 7))
    assert WireBuffer(data).get_varint() == value


@settings(max_examples=2000)
@given(st.integers(min_value=MIN_INT64, max_value=MAX_INT64))
def test_zigzag_round_trip(value):
    assert WireBuffer(encoded("put_zigzag", value)).get_zigzag() == value


@settings(max_examples=1000)
@given(st.floats(allow_nan=False))
def test_f64_round_trip(value):
    assert WireBuffer(encoded("put_f64", value)).get_f64() == value


@settings(max_examples=500)
@given(st.text(max_size=2000))
def test_str_round_trip(value):
    assert WireBuffer(encoded("put_str", value)).get_str() == value


@given(st.lists(st.tuples(st.text(max_size=20), st.integers(min_value=-(2**40), max_value=2**40))))
def test_pairs_round_trip(pairs):
    payload, count = encode_pairs(pairs, STR, ZIGZAG)
    decoded = []
    assert decode_pairs(payload, STR, ZIGZAG, lambda k, v: decoded.append((k, v))) == count
    assert decoded == pairs


@settings(max_examples=3000)
@given(
    st.binary(max_size=64),
    st.sampled_from(
        [(UVARINT, STR), (ZIGZAG, F64), (STR, F64_ARRAY), (TupleCodec(UVARINT, STR), ZIGZAG)]
    ),
)
def test_decoding_random_bytes_never_crashes(data, codecs):
    key_codec, value_codec = codecs
    try:
        decode_pairs(data, key_codec, value_codec, lambda k, v: None)
    except DecodeError:
        pass


@parametrize_with_cases("codec, values", cases=".cases_wire", prefix="codec_")
def test_codec_round_trip(codec, values):
    for value in values:
        assert_same_value(codec.loads(codec.dumps(value)), value)


@parametrize_with_cases("codec, values", cases=".cases_wire", prefix="codec_")
def test_codec_is_deterministic(codec, values):
    for value in values:
        assert codec.dumps(value) == codec.dumps(value)


@parametrize_with_cases("codec, values", cases=".cases_wire", prefix="codec_")
def test_codec_from_name(codec, values):
    assert codec_from_name(codec.name) == codec


# -----------------------
# Errors
# -----------------------
@pytest.mark.parametrize(
    "data, get",
    [
        (b"", "get_varint"),
        (b"\x80", "get_varint"),
        (b"\xff" * 9 + b"\x02", "get_varint"),
        (b"\xff" * 11, "get_varint"),
        (b"\x00" * 7, "get_f64"),
        (b"\x00" * 3, "get_f32"),
        (b"\x05ab", "get_str"),
        (b"\x03", "get_bytes"),
    ],
)
def test_truncated_input_raises_decode_error(data, get):
    with pytest.raises(DecodeError):
        getattr(WireBuffer(data), get)()


def test_trailing_bytes_are_rejected():
    payload, _ = encode_pairs([(1, 2)], UVARINT, UVARINT)
    with pytest.raises(DecodeError):
        decode_pairs(payload + b"\x00", UVARINT, UVARINT, lambda k, v: None)


def test_decode_error_reports_offset():
    buf = WireBuffer(b"\x01\x80")
    buf.get_varint()
    with pytest.raises(DecodeError) as info:
        buf.get_varint()
    assert info.value.offset == 1


@pytest.mark.parametrize(
    "put, value", [("put_varint", -1), ("put_varint", 2**64), ("put_zigzag", 2**63)]
)
def test_out_of_range_integers(put, value):
    with pytest.raises(ValueError):
        encoded(put, value)


# -----------------------
# Codec selection and hashing
# -----------------------
@pytest.mark.parametrize(
    "value, name",
    [
        (3, "zigzag"),
        (np.int64(-3), "zigzag"),
        (2.5, "f64"),
        ("w", "str"),
        (b"w", "bytes"),
        (np.zeros(3), "f64array"),
        (("w", 1), "tuple(str,zigzag)"),
        (True, "pickle"),
        ([1], "pickle"),
    ],
)
def test_infer_codec(value, name):
    assert infer_codec(value).name == name


def test_key_hash_is_fnv1a_of_encoded_key():
    assert STR.hash("the") == fnv1a_64(b"\x03the")
    assert UVARINT.hash(300) == fnv1a_64(b"\xac\x02")


def test_equal_float_keys_hash_equally():
    assert F64.hash(-0.0) == F64.hash(0.0)
    assert F32.hash(-0.0) == F32.hash(0.0)
    assert TupleCodec(STR, F64).hash(("w", -0.0)) == TupleCodec(STR, F64).hash(("w", 0.0))
    assert F64.hash(1.5) != F64.hash(-1.5)


def test_unknown_codec_name():
    with pytest.raises(ValueError):
        codec_from_name("varint128")


def test_pickle_codec_wraps_errors():
    with pytest.raises(DecodeError):
        PICKLE.loads(b"\x02\xff\xff")
