import math

import numpy as np
import pytest
from pytest_cases import parametrize_with_cases

from blaze_mr import (
    ClusterConfig,
    DistHashMap,
    DistRange,
    DistVector,
    JobCounters,
    Reducer,
    collect,
    distribute,
    init,
    mapreduce,
    mapreduce_dense,
    mapreduce_serial,
    set_options,
)
from blaze_mr.errors import ContractError, JobError
from blaze_mr.mapreduce import NodeTable, ThreadCache, resolve

from .cases_mapreduce import emit_residue_max, emit_squares, emit_words


# Helper functions
def as_input(ctx, data):
    if isinstance(data, range):
        return DistRange(ctx, data.start, data.stop, data.step, chunk=64)
    return distribute(ctx, data if ctx.rank == 0 else None)


def run_job(ctx, data, mapper, reducer):
    target = DistHashMap(ctx)
    counters = mapreduce(as_input(ctx, data), mapper, reducer, target)
    return collect(target), counters.as_dict()


def add(a, b):
    return a + b


# -----------------------
# Examples
# -----------------------
def test_words_of_one_line(ctx):
    counts = DistHashMap(ctx)
    mapreduce(DistVector(ctx, ["a b a"]), emit_words, "sum", counts)
    assert counts.to_dict() == {"a": 2, "b": 1}


def test_target_is_merged_not_cleared(ctx):
    counts = DistHashMap(ctx, local={"a": 5})
    mapreduce(DistVector(ctx, ["a b a"]), emit_words, "sum", counts)
    assert counts.to_dict() == {"a": 7, "b": 1}


def test_empty_input_leaves_target_unchanged(ctx):
    counts = DistHashMap(ctx, local={"a": 1})
    counters = mapreduce(DistVector(ctx, []), emit_words, "sum", counts)
    assert counts.to_dict() == {"a": 1}
    assert counters.pairs_emitted == 0

    totals = [4, 5]
    mapreduce(DistRange(ctx, 0, 0), lambda v, emit: emit(0, 1), "sum", totals)
    assert totals == [4, 5]


def test_mapper_emitting_nothing(cluster):
    def run(ctx):
        counts = DistHashMap(ctx)
        mapreduce(DistRange(ctx, 0, 100), lambda v, emit: None, "sum", counts)
        return counts.global_size()

    assert cluster(3, run) == [0, 0, 0]


# -----------------------
# Equivalence with the serial reference
# -----------------------
@pytest.mark.parametrize("workers", [1, 2, 4])
@parametrize_with_cases("data, mapper, reducer", cases=".cases_mapreduce", prefix="job_")
def test_matches_serial_reference(cluster, workers, data, mapper, reducer):
    expected = mapreduce_serial(data, mapper, reducer, {})
    result, _ = cluster(workers, run_job, data, mapper, reducer)[0]
    assert result == expected


@parametrize_with_cases("data, mapper, reducer", cases=".cases_mapreduce", prefix="job_")
def test_repeated_runs_agree(cluster, data, mapper, reducer):
    def run(ctx):
        first = run_job(ctx, data, mapper, reducer)
        second = run_job(ctx, data, mapper, reducer)
        return first, second

    for first, second in cluster(3, run):
        assert first[0] == second[0]
        for name in ("pairs_emitted", "pairs_shuffled", "wire_bytes_out", "wire_bytes_in"):
            assert first[1][name] == second[1][name]


def test_serial_reference_over_a_dict():
    data = {"x": 2, "y": 3, "z": 2}
    inverted = mapreduce_serial(data, lambda k, v, emit: emit(v, 1), "sum", {3: 10})
    assert inverted == {2: 2, 3: 11}


# -----------------------
# Dense and local sequence targets
# -----------------------
@pytest.mark.parametrize("workers", [1, 3])
def test_dense_path_matches_generic_path(cluster, workers):
    data = range(0, 1000)
    expected = mapreduce_serial(data, emit_squares, "sum", {})

    def run(ctx):
        dense = [0] * 7
        counters = mapreduce(DistRange(ctx, 0, 1000, chunk=50), emit_squares, "sum", dense)
        return dense, counters.path

    for dense, path in cluster(workers, run):
        assert path == "dense"
        assert dense == [expected[k] for k in range(7)]


def test_long_sequence_target_takes_local_path(cluster):
    set_options(dense_max_keys=4)
    expected = mapreduce_serial(range(5000), emit_residue_max, "max", {})

    def run(ctx):
        best = [-1] * 17
        counters = mapreduce(DistRange(ctx, 0, 5000), emit_residue_max, "max", best)
        return best, counters.path

    for best, path in cluster(3, run):
        assert path == "local"
        assert best == [expected[k] for k in range(17)]


def test_dense_numpy_target(ctx):
    totals = np.zeros(3)
    mapreduce(DistRange(ctx, 0, 30), lambda v, emit: emit(v % 3, 0.5), "sum", totals)
    assert totals.tolist() == [5.0, 5.0, 5.0]


def test_forced_dense_path(ctx):
    set_options(dense_max_keys=1)
    totals = [0, 0]
    counters = mapreduce_dense(DistRange(ctx, 0, 10), lambda v, emit: emit(v % 2, 1), "sum", totals)
    assert counters.path == "dense"
    assert totals == [5, 5]


def test_dense_merge_rounds():
    with init(ClusterConfig(backend="threads", threads_per_worker=5)) as five:
        totals = [0]
        counters = mapreduce(DistRange(five, 0, 100, chunk=3), lambda v, emit: emit(0, v), "sum", totals)
    assert totals == [sum(range(100))]
    assert counters.thread_rounds == math.ceil(math.log2(5))


@pytest.mark.parametrize("runner", [mapreduce, mapreduce_dense])
def test_key_outside_sequence_target(ctx, runner):
    with pytest.raises(JobError):
        runner(DistRange(ctx, 0, 3), lambda v, emit: emit(v + 5, 1), "sum", [0, 0])


def test_key_outside_sequence_target_on_every_worker(cluster):
    set_options(dense_max_keys=1)

    def run(ctx):
        try:
            mapreduce(DistRange(ctx, 0, 10), lambda v, emit: emit(v, 1), "sum", [0, 0])
        except JobError:
            return "JobError"
        return "finished"

    assert cluster(2, run) == ["JobError", "JobError"]


# -----------------------
# DistVector targets
# -----------------------
def test_histogram_into_vector(cluster):
    def run(ctx):
        bins = distribute(ctx, [0] * 10 if ctx.rank == 0 else None)
        counters = mapreduce(DistRange(ctx, 0, 1000), lambda v, emit: emit(v % 10, 1), "sum", bins)
        return collect(bins), counters.path

    results = cluster(3, run)
    assert results[0][0] == [100] * 10
    assert all(path == "shuffle" for _, path in results)


def test_signed_zero_keys_meet_on_one_owner(cluster):
    def run(ctx):
        counts = DistHashMap(ctx)
        # the upper half of the range emits -0.0, the lower half 0.0
        mapreduce(DistRange(ctx, 0, 40), lambda v, emit: emit(-0.0 if v >= 20 else 0.0, 1), "sum", counts)
        return collect(counts), len(counts.local)

    results = cluster(4, run)
    assert results[0][0] == {0.0: 40}
    assert sum(n for _, n in results) == 1


def test_key_outside_vector_target(cluster):
    def run(ctx):
        bins = distribute(ctx, [0] * 4 if ctx.rank == 0 else None)
        try:
            mapreduce(DistRange(ctx, 0, 10), lambda v, emit: emit(v, 1), "sum", bins)
        except JobError as e:
            return str(e)
        return ""

    assert all("outside target vector" in message for message in cluster(2, run))


# -----------------------
# Batched mappers
# -----------------------
def test_batched_range_mapper(ctx):
    totals = [0]
    mapreduce(DistRange(ctx, 0, 1000, chunk=64), lambda block, emit: emit(0, len(block)), "sum", totals, batched=True)
    assert totals == [1000]


def test_batched_vector_mapper(cluster):
    def mapper(start, values, emit):
        emit(0, sum(values))

    def run(ctx):
        totals = [0]
        mapreduce(distribute(ctx, list(range(500)) if ctx.rank == 0 else None), mapper, "sum", totals, batched=True)
        return totals

    assert cluster(3, run) == [[sum(range(500))]] * 3


def test_batched_map_input_is_refused(ctx):
    with pytest.raises(ValueError):
        mapreduce(DistHashMap(ctx, local={"a": 1}), lambda k, v, emit: None, "sum", [0], batched=True)


# -----------------------
# Eager reduction
# -----------------------
def test_cache_reduces_repeated_key():
    spilled = []
    cache = ThreadCache(8, 4, add, lambda k, v: spilled.append((k, v)))
    cache.add(7, 1)
    cache.add(7, 1)
    assert cache.get(7) == 2
    assert len(cache) == 1
    assert (cache.evictions, spilled) == (0, [])


def test_cache_evicts_home_slot_when_probes_are_full():
    table = NodeTable(256, add)
    cache = ThreadCache(2**16, 4, add, table.add)
    for key in range(2**16 + 1):
        cache.add(key, 1)
    assert cache.evictions == 1
    assert cache.get(0) is None
    cache.flush()
    assert len(cache) == 0
    assert len(table) == 2**16 + 1
    assert sum(v for _, v in table.items()) == 2**16 + 1


def test_evictions_keep_every_count():
    with init(ClusterConfig(backend="threads", threads_per_worker=1)) as one:
        counts = DistHashMap(one)
        counters = mapreduce(DistRange(one, 0, 2**16 + 1), lambda v, emit: emit(v, 1), "sum", counts)
    assert counters.cache_evictions >= 1
    assert len(counts) == 2**16 + 1
    assert sum(counts.values()) == 2**16 + 1


def test_emit_after_close_is_a_contract_error(ctx):
    set_options(debug=True)
    kept = []

    def mapper(i, line, emit):
        kept.append(emit)
        emit(line, 1)

    mapreduce(DistVector(ctx, ["x"]), mapper, "sum", DistHashMap(ctx))
    with pytest.raises(ContractError):
        kept[0]("y", 1)


def test_mapper_error_reaches_the_caller(cluster):
    def run(ctx):
        def mapper(v, emit):
            if v == 7:
                raise ZeroDivisionError("seven")
            emit(0, 1)

        try:
            mapreduce(DistRange(ctx, 0, 20), mapper, "sum", DistHashMap(ctx))
        except Exception as e:
            return type(e).__name__
        return "finished"

    results = cluster(2, run)
    assert "ZeroDivisionError" in results
    assert set(results) <= {"ZeroDivisionError", "JobError"}


# -----------------------
# Counters
# -----------------------
def test_single_worker_sends_nothing(ctx):
    counters = mapreduce(DistVector(ctx, ["a b", "b c"]), emit_words, "sum", DistHashMap(ctx))
    assert (counters.wire_bytes_out, counters.wire_bytes_in) == (0, 0)
    assert counters.pairs_emitted == 4
    assert counters.pairs_shuffled == 3


def test_unique_keys_are_all_shuffled(cluster):
    def run(ctx):
        lines = distribute(ctx, [f"w{i}" for i in range(1000)] if ctx.rank == 0 else None)
        counters = mapreduce(lines, emit_words, "sum", DistHashMap(ctx))
        return counters.pairs_emitted, counters.pairs_shuffled

    results = cluster(3, run)
    assert all(emitted == shuffled for emitted, shuffled in results)
    assert sum(emitted for emitted, _ in results) == 1000


def test_wire_bytes_are_conserved(cluster):
    def run(ctx):
        lines = distribute(ctx, ["a b c d"] * 200 if ctx.rank == 0 else None)
        counters = mapreduce(lines, emit_words, "sum", DistHashMap(ctx))
        return counters.wire_bytes_out, counters.wire_bytes_in

    results = cluster(4, run)
    assert sum(out for out, _ in results) == sum(n for _, n in results)
    assert sum(out for out, _ in results) > 0


def test_counters_allsum(cluster):
    def run(ctx):
        mine = JobCounters(pairs_emitted=ctx.rank + 1, thread_rounds=1, path="dense")
        return mine.allsum(ctx).as_dict()

    for summed in cluster(3, run):
        assert summed["pairs_emitted"] == 6
        assert summed["thread_rounds"] == 1
        assert summed["path"] == "dense"


def test_counters_add():
    total = JobCounters(pairs_emitted=2, reduce_calls=1) + JobCounters(pairs_emitted=3)
    assert (total.pairs_emitted, total.reduce_calls) == (5, 1)


# -----------------------
# Reducers
# -----------------------
@pytest.mark.parametrize(
    "name, values, expected",
    [("sum", [1, 2, 3], 6), ("prod", [2, 3, 4], 24), ("min", [3, -1, 2], -1), ("max", [3, -1, 2], 3)],
)
def test_builtin_reducers(name, values, expected):
    reducer = resolve(name)
    assert reducer.name == name
    assert reducer.reduce(values) == expected


def test_custom_reducer():
    reducer = resolve(lambda a, b: a | b)
    assert isinstance(reducer, Reducer)
    assert reducer.reduce([{1}, {2}, {1, 3}]) == {1, 2, 3}
    assert resolve(reducer) is reducer


@pytest.mark.parametrize("reducer, error", [("median", ValueError), (3, TypeError)])
def test_bad_reducers(reducer, error):
    with pytest.raises(error):
        resolve(reducer)
