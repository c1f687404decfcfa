import functools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blaze_mr import (
    ClusterConfig,
    DistHashMap,
    DistRange,
    DistVector,
    collect,
    distribute,
    foreach,
    init,
    load_file,
    set_options,
    topk,
)
from blaze_mr.containers import load_edges, load_points
from blaze_mr.errors import InputError
from blaze_mr.wire import STR


# Helper function
def ranked_oracle(values, k, key=None, reverse=True):
    """sorted()[:k] with ties going to the lower index."""
    key = key or (lambda v: v)
    order = sorted(
        range(len(values)),
        key=lambda i: ((-key(values[i]) if reverse else key(values[i])), i),
    )
    return [values[i] for i in order[:k]]


# -----------------------
# DistRange
# -----------------------
def test_range_stores_only_bounds(ctx):
    r = DistRange(ctx, 0, 10**12, 3)
    assert len(r) == len(range(0, 10**12, 3))
    assert vars(r).keys() == {"ctx", "start", "end", "step", "chunk"}


@pytest.mark.parametrize("start, end, step", [(0, 10, 1), (10, 0, -3), (5, 5, 1), (-7, 20, 4)])
def test_range_foreach_covers_each_value_once(cluster, start, end, step):
    def run(ctx):
        seen = []
        DistRange(ctx, start, end, step, chunk=2).foreach(seen.append)
        return sorted(seen)

    per_rank = cluster(3, run)
    assert sorted(v for seen in per_rank for v in seen) == sorted(range(start, end, step))


def test_range_split_is_contiguous_per_worker(cluster):
    blocks = cluster(2, lambda ctx: list(DistRange(ctx, 0, 10).local_range()))
    assert blocks == [[0, 1, 2, 3, 4], [5, 6, 7, 8, 9]]


def test_range_chunks_are_dealt_round_robin(ctx):
    r = DistRange(ctx, 0, 10, chunk=3)
    assert [list(c) for c in r.thread_chunks(0)] == [[0, 1, 2], [6, 7, 8]]
    assert [list(c) for c in r.thread_chunks(1)] == [[3, 4, 5], [9]]


@pytest.mark.parametrize("step, chunk", [(0, None), (1, 0)])
def test_range_rejects(ctx, step, chunk):
    with pytest.raises(ValueError):
        DistRange(ctx, 0, 10, step, chunk=chunk)


# -----------------------
# foreach
# -----------------------
def test_vector_foreach_doubles(ctx):
    v = DistVector(ctx, [1, 2, 3])
    foreach(v, lambda i, x: 2 * x)
    assert v.local == [2, 4, 6]


def test_vector_foreach_sees_global_indices(cluster):
    def run(ctx):
        v = DistVector(ctx, [None] * (ctx.rank + 2))
        v.foreach(lambda i, x: i)
        return v.local

    assert [i for shard in cluster(3, run) for i in shard] == list(range(2 + 3 + 4))


def test_map_foreach_increments(ctx):
    m = DistHashMap(ctx, local={"a": 1, "b": 2})
    foreach(m, lambda k, v: v + 1)
    assert m.to_dict() == {"a": 2, "b": 3}


def test_foreach_error_propagates(ctx):
    def fail(i, x):
        raise ZeroDivisionError(i)

    with pytest.raises(ZeroDivisionError):
        DistVector(ctx, [1, 2, 3]).foreach(fail)


# -----------------------
# DistVector and DistHashMap
# -----------------------
def test_vector_offsets_and_ownership(cluster):
    def run(ctx):
        v = DistVector(ctx, list(range(10 * ctx.rank, 10 * ctx.rank + ctx.rank + 1)))
        return v.offsets, v.global_size(), [v.owner_of(i) for i in range(v.global_size())]

    offsets, size, owners = cluster(3, run)[0]
    assert offsets == [0, 1, 3, 6]
    assert size == 6
    assert owners == [0, 1, 1, 2, 2, 2]


def test_vector_like_copies_partitioning(ctx):
    v = DistVector(ctx, [1, 2, 3])
    assert DistVector.like(v, 0).local == [0, 0, 0]
    rows = DistVector.like(v, np.zeros(2))
    assert rows.local.shape == (3, 2)
    assert rows.offsets == v.offsets


def test_vector_local_access(ctx):
    v = DistVector(ctx, ["x", "y"])
    v.local_set(1, "z")
    assert v.local_get(1) == "z"
    with pytest.raises(IndexError):
        v.local_get(2)
    with pytest.raises(IndexError):
        v.owner_of(-1)


def test_vector_rejects_bad_offsets(ctx):
    with pytest.raises(ValueError):
        DistVector(ctx, [1, 2], offsets=[0, 3])


KEYS = [f"k{i}" for i in range(30)]


def test_map_keys_live_on_their_owner(cluster):
    def run(ctx):
        m = DistHashMap(ctx, key_codec=STR)
        owned = [w for w in KEYS if m.owner(w) == ctx.rank]
        for w in owned:
            m[w] = 1
        foreign = next((w for w in KEYS if m.owner(w) != ctx.rank), None)
        refused = False
        if foreign is not None:
            try:
                m[foreign] = 1
            except KeyError:
                refused = True
        return sorted(m.keys()), m.global_size(), refused

    results = cluster(3, run)
    assert sorted(k for keys, _, _ in results for k in keys) == sorted(KEYS)
    assert all(size == len(KEYS) for _, size, _ in results)
    assert all(refused for _, _, refused in results)


# -----------------------
# distribute / collect
# -----------------------
def test_distribute_blocks(cluster):
    def run(ctx):
        return distribute(ctx, [5, 6, 7, 8] if ctx.rank == 0 else None).local

    assert cluster(2, run) == [[5, 6], [7, 8]]


def test_distribute_short_last_block(cluster):
    def run(ctx):
        return distribute(ctx, list(range(5)) if ctx.rank == 0 else None).local

    assert cluster(3, run) == [[0, 1], [2, 3], [4]]


def test_distribute_empty(cluster):
    def run(ctx):
        v = distribute(ctx, [] if ctx.rank == 0 else None)
        return v.local, v.global_size()

    assert cluster(3, run) == [([], 0)] * 3


def test_distribute_map_places_keys_by_hash(cluster):
    data = {"a": 1, "b": 2, "c": 3}

    def run(ctx):
        m = distribute(ctx, data if ctx.rank == 0 else None)
        return m.to_dict()

    shards = cluster(3, run)
    for rank, shard in enumerate(shards):
        assert all(STR.hash(k) % 3 == rank for k in shard)
    assert functools.reduce(lambda a, b: {**a, **b}, shards) == data


@pytest.mark.parametrize(
    "data",
    [
        [1, 2, 3],
        list(np.random.default_rng(3).integers(-(10**9), 10**9, 10_000).tolist()),
        ["x", "yy", ""],
        [("a", 1), ("b", -2)],
        {"k": 1.5, "j": -2.0},
        {},
    ],
)
def test_collect_distribute_round_trip(cluster, data):
    def run(ctx):
        return collect(distribute(ctx, data if ctx.rank == 0 else None))

    results = cluster(4, run)
    assert results[0] == data
    assert results[1:] == [None] * 3


def test_collect_distribute_array(cluster):
    points = np.arange(21.0).reshape(7, 3)

    def run(ctx):
        v = distribute(ctx, points if ctx.rank == 0 else None)
        return v.local.shape, collect(v)

    results = cluster(3, run)
    assert [shape for shape, _ in results] == [(3, 3), (3, 3), (1, 3)]
    assert np.array_equal(results[0][1], points)


def test_collect_empty_map(ctx):
    assert collect(DistHashMap(ctx)) == {}


# -----------------------
# Files
# -----------------------
@pytest.mark.parametrize(
    "body, expected",
    [
        (b"a\nb\n", ["a", "b"]),
        (b"a\nb", ["a", "b"]),
        (b"a\n\nb\n", ["a", "", "b"]),
        (b"", []),
        (b"\n", [""]),
        ("héllo\nwörld".encode("utf-8"), ["héllo", "wörld"]),
    ],
)
def test_load_file_lines(ctx, tmp_path, body, expected):
    path = tmp_path / "f.txt"
    path.write_bytes(body)
    assert load_file(ctx, path).local == expected


@pytest.mark.parametrize("trailing_newline", [True, False])
def test_load_file_splits_across_workers(cluster, text_file, trailing_newline):
    lines = [f"line {i} " + "x" * (i % 13) for i in range(100_000)]
    path = text_file(lines, trailing_newline=trailing_newline)
    shards = cluster(4, lambda ctx: load_file(ctx, path).local)
    assert [line for shard in shards for line in shard] == lines
    assert max(map(len, shards)) - min(map(len, shards)) < len(lines) // 4


def test_load_file_treats_files_as_one_stream(cluster, text_file):
    first = text_file(["a", "b"], name="one.txt", trailing_newline=False)
    second = text_file(["c"], name="two.txt")
    shards = cluster(2, lambda ctx: load_file(ctx, [first, second]).local)
    assert [line for shard in shards for line in shard] == ["a", "b", "c"]


def test_load_file_missing(cluster, tmp_path):
    missing = str(tmp_path / "nope.txt")

    def run(ctx):
        try:
            load_file(ctx, missing)
        except InputError as e:
            return str(e)

    assert all(missing in message for message in cluster(2, run))


def test_load_edges_and_points(ctx, tmp_path):
    edges = tmp_path / "edges.txt"
    edges.write_text("# comment\n0 1\n\n1 2\n")
    assert load_edges(ctx, edges).local.tolist() == [[0, 1], [1, 2]]
    points = tmp_path / "points.csv"
    points.write_text("0.5,1\n-2,3.25\n")
    assert load_points(ctx, points).local.tolist() == [[0.5, 1.0], [-2.0, 3.25]]


@pytest.mark.parametrize(
    "loader, body", [(load_edges, "0 1\n2\n"), (load_edges, "a b\n"), (load_points, "1,x\n")]
)
def test_malformed_inputs(ctx, tmp_path, loader, body):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(InputError):
        loader(ctx, path)


# -----------------------
# topk
# -----------------------
@pytest.mark.parametrize(
    "values, k, kwargs, expected",
    [
        ([5, 1, 4, 2, 3], 2, {}, [5, 4]),
        ([5, 1, 4, 2, 3], 0, {}, []),
        ([5, 1, 4, 2, 3], 9, {}, [5, 4, 3, 2, 1]),
        ([5, 1, 4, 2, 3], 2, {"reverse": False}, [1, 2]),
        (["bb", "a", "ccc"], 1, {"key": len}, ["ccc"]),
        ([5, 1, 4], 2, {"compare": lambda a, b: b - a}, [1, 4]),
        ([7, 7, 3, 7], 3, {"with_index": True}, [(0, 7), (1, 7), (3, 7)]),
    ],
)
def test_topk_examples(ctx, values, k, kwargs, expected):
    assert topk(DistVector(ctx, values), k, **kwargs) == expected


def test_topk_ranks_array_rows(cluster):
    def run(ctx):
        rows = np.array([[1.0, 5.0], [3.0, 0.0], [1.0, 9.0], [3.0, 0.0]])
        v = distribute(ctx, rows if ctx.rank == 0 else None)
        return [(i, row.tolist()) for i, row in v.topk(3, with_index=True)]

    for best in cluster(2, run):
        assert best == [(1, [3.0, 0.0]), (3, [3.0, 0.0]), (2, [1.0, 9.0])]


@pytest.mark.parametrize("k, kwargs", [(-1, {}), (1, {"key": abs, "compare": lambda a, b: 0})])
def test_topk_rejects(ctx, k, kwargs):
    with pytest.raises(ValueError):
        DistVector(ctx, [1]).topk(k, **kwargs)


def shard_of_reals(rank, n):
    return np.random.default_rng(1000 + rank).random(n).tolist()


def test_topk_matches_sort_over_workers(cluster):
    n, k = 250_000, 100

    def run(ctx):
        v = DistVector(ctx, shard_of_reals(ctx.rank, n))
        return v.topk(k), v.last_topk_peak

    results = cluster(4, run)
    everything = [x for rank in range(4) for x in shard_of_reals(rank, n)]
    expected = sorted(everything, reverse=True)[:k]
    assert all(best == expected for best, _ in results)
    assert all(peak <= k for _, peak in results)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(min_value=-20, max_value=20), max_size=60),
    st.integers(min_value=0, max_value=70),
    st.booleans(),
)
def test_topk_matches_oracle(values, k, reverse):
    set_options(range_chunk=4)
    with init(ClusterConfig(backend="threads", threads_per_worker=3)) as ctx:
        got = DistVector(ctx, values).topk(k, key=abs, reverse=reverse, with_index=True)
    expected_values = ranked_oracle(values, k, key=abs, reverse=reverse)
    assert [v for _, v in got] == expected_values
    assert [i for i, _ in got] == sorted(
        range(len(values)), key=lambda i: ((-abs(values[i]) if reverse else abs(values[i])), i)
    )[:k]
