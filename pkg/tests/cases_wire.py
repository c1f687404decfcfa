"""Codecs with representative values, for round-trip and determinism tests."""

import numpy as np

from blaze_mr.wire import (
    BYTES,
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
)


def codec_uvarint():
    return UVARINT, [0, 1, 127, 128, 300, 2**32, MAX_UVARINT]


def codec_zigzag():
    return ZIGZAG, [0, -1, 1, -64, 63, MIN_INT64, MAX_INT64]


def codec_f64():
    return F64, [0.0, -0.0, 1.5, -2.25, 1e300, float("inf")]


def codec_f32():
    return F32, [0.0, 1.5, -0.25, 65504.0]


def codec_str():
    return STR, ["", "hi", "the", "héllo ☃", "x" * 10_000]


def codec_bytes():
    return BYTES, [b"", b"\x00\xff", bytes(range(256))]


def codec_tuple():
    return TupleCodec(STR, ZIGZAG), [("a", -1), ("", 0), ("word", 2**40)]


def codec_nested_tuple():
    return TupleCodec(UVARINT, TupleCodec(F64, STR)), [(1, (0.5, "a")), (0, (-1.0, ""))]


def codec_pickle():
    return PICKLE, [None, [1, 2], {"k": (1, 2)}, frozenset({3})]


def codec_f64_array():
    return F64_ARRAY, [np.zeros(0), np.arange(5.0), np.eye(3), np.ones((2, 0))]
