import os

import numpy as np
import psutil
import pytest

import blaze_mr as bmr
from blaze_mr.bench import (
    CSV_COLUMNS,
    BenchConfig,
    BenchRecord,
    PeakMemorySampler,
    main,
    read_csv,
    run_bench,
    sample_peak_memory,
    write_csv,
)
from blaze_mr.errors import ConfigError

from .conftest import BACKEND

perf = pytest.mark.skipif(os.environ.get("BLAZE_PERF") != "1", reason="set BLAZE_PERF=1")

SMALL_SIZES = {
    "wordcount": 1,
    "pagerank": 2000,
    "kmeans": 500,
    "gmm": 300,
    "nn": 500,
    "pi": 20_000,
}


# Helper function
def bench(ctx, cfg, phases=None):
    return run_bench(cfg, ctx, on_phase=phases.append if phases is not None else None)


def test_pi_rows(ctx):
    records = bench(ctx, BenchConfig("pi", size=20_000, reps=3, warmup=1))
    assert [r.rep for r in records] == [0, 1, 2, "summary"]
    seconds = [r.seconds for r in records[:3]]
    summary = records[-1]
    assert summary.seconds == pytest.approx(np.mean(seconds))
    assert summary.seconds_std == pytest.approx(np.std(seconds, ddof=1))
    assert all(r.size == 20_000 and r.workers == 1 and r.threads == 2 for r in records)
    assert all(r.items_per_sec > 0 for r in records)


def test_phases_bracket_each_rep(ctx):
    phases = []
    bench(ctx, BenchConfig("pi", size=5000, reps=2, warmup=2), phases)
    assert phases == ["load_start", "load_end"] + ["measure_start", "measure_end"] * 2


@pytest.mark.parametrize("task", sorted(SMALL_SIZES))
def test_every_task_runs(cluster, tmp_path, task):
    cfg = BenchConfig(
        task, size=SMALL_SIZES[task], reps=1, warmup=0, iterations=2, data_dir=str(tmp_path)
    )
    results = cluster(2, bench, cfg)
    assert results[0] == results[1]
    records = results[0]
    assert [r.rep for r in records] == [0, "summary"]
    assert records[0].workers == 2
    assert records[-1].seconds_std == 0.0
    if task == "wordcount":
        assert records[0].pairs_emitted == 1020


def test_generated_input_is_reused(ctx, tmp_path):
    cfg = BenchConfig("pagerank", size=500, reps=1, warmup=0, iterations=1, data_dir=str(tmp_path))
    bench(ctx, cfg)
    (first,) = os.listdir(tmp_path)
    stamp = os.path.getmtime(tmp_path / first)
    bench(ctx, cfg)
    assert os.listdir(tmp_path) == [first]
    assert os.path.getmtime(tmp_path / first) == stamp


def test_csv_round_trip(tmp_path):
    records = [
        BenchRecord("pi", 2, 4, 1000, 0, 0.25, 4000.0, 123456, 10, 2, 64),
        BenchRecord("pi", 2, 4, 1000, 1, 0.5, 2000.0, None, 10, 2, 64),
        BenchRecord("pi", 2, 4, 1000, "summary", 0.375, 2666.5, None, 10, 2, 64, 0.125),
    ]
    path = tmp_path / "bench.csv"
    write_csv(records, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert read_csv(path) == records


@pytest.mark.parametrize(
    "fields",
    [
        {"task": "sort"},
        {"task": "pi", "reps": 0},
        {"task": "pi", "warmup": -1},
        {"task": "pi", "workers": 0},
        {"task": "pi", "threads": 0},
        {"task": "pi", "size": 0},
        {"task": "pi", "iterations": 0},
    ],
)
def test_bad_config(fields):
    with pytest.raises(ConfigError):
        BenchConfig(**fields)


def test_default_size():
    assert BenchConfig("wordcount").resolved_size == 200
    assert BenchConfig("pi", size=7).resolved_size == 7


def test_peak_is_the_largest_sample():
    before = psutil.Process().memory_info().rss
    n = 64 * 2**20
    data, peak = sample_peak_memory(lambda: b"x" * n, interval=0.01)
    assert len(data) == n
    assert peak is not None
    assert peak >= before + n // 2


def test_sampler_never_lowers_its_peak():
    sampler = PeakMemorySampler(interval=0.01)
    with sampler:
        high = sampler.peak
    assert sampler.peak >= high


def test_command_writes_csv(tmp_path):
    path = tmp_path / "pi.csv"
    main(["pi", "--size", "20000", "--reps", "2", "--warmup", "0", "--threads", "2", "--out", str(path)])
    records = read_csv(path)
    assert [r.rep for r in records] == [0, 1, "summary"]


def test_command_defaults_threads_from_options(tmp_path):
    bmr.set_options(threads_per_worker=3)
    path = tmp_path / "pi.csv"
    main(["pi", "--size", "2000", "--reps", "1", "--warmup", "0", "--out", str(path)])
    records = read_csv(path)
    assert [r.rep for r in records] == [0, "summary"]
    assert records[0].threads == 3


@pytest.mark.parametrize("argv", [["pi", "--reps", "0"], ["sort"], ["pi", "--threads", "0"]])
def test_command_rejects_bad_arguments(argv):
    with pytest.raises(SystemExit):
        main(argv)


# -----------------------
# Timing-sensitive
# -----------------------
@perf
@pytest.mark.perf
def test_more_workers_count_faster(cluster):
    cfg = BenchConfig("pi", size=4_000_000, reps=3, warmup=1, threads=1)
    one = cluster(1, bench, cfg, threads=1)[0][-1]
    four = cluster(4, bench, cfg, threads=1)[0][-1]
    if BACKEND == "sockets":
        assert four.items_per_sec > 1.5 * one.items_per_sec
    assert four.pairs_shuffled <= 4

