"""
Benchmark harness and the `blaze-bench` command.

A run generates (or reuses) the input of one workload, loads it, does warmup runs, then times
each measured repetition between barriers. Data generation and loading stay outside the timed
region. Every repetition becomes one CSV row, followed by a summary row with the mean time and
its sample standard deviation:

    ```
    blaze-bench pi --size 1000000 --reps 3 --out pi.csv
    blaze-bench wordcount --workers 2 --threads 4 --size 200
    blaze-bench kmeans --hosts 10.0.0.1:7000,10.0.0.2:7000 --rank 0 --data-dir /shared/blaze
    ```
"""

import argparse
import os
import shutil
import tempfile
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Tuple, Union

import numpy as np
import pandas as pd
import psutil

from .apps.datagen import gen_data
from .apps.gmm import GmmModel, gmm_em
from .apps.kmeans import initial_centers, kmeans
from .apps.nearest import nearest100
from .apps.pagerank import Graph, pagerank
from .apps.pi import count_hits
from .apps.wordcount import wordcount
from .containers import load_edges, load_file, load_points
from .display import _display_table, _display_verdict, _log, _warning
from .errors import ConfigError, InputError, TransportError
from .mapreduce import JobCounters
from .options import get_option
from .timer import PhaseTimer
from .transport import ClusterConfig, ClusterCtx, cpu_count, init, launch
from .utils import _raise_collectively
from .wire import F64, STR, ZIGZAG

TASKS = ["wordcount", "pagerank", "kmeans", "gmm", "nn", "pi"]

CSV_COLUMNS = [
    "task",
    "workers",
    "threads",
    "size",
    "rep",
    "seconds",
    "items_per_sec",
    "peak_rss_bytes",
    "pairs_emitted",
    "pairs_shuffled",
    "wire_bytes_out",
    "seconds_std",
]

# Copies of the base text, edges, points, points, points, samples
DEFAULT_SIZES = {
    "wordcount": 200,
    "pagerank": 100_000,
    "kmeans": 100_000,
    "gmm": 10_000,
    "nn": 100_000,
    "pi": 10_000_000,
}

CLUSTERS = 5
DIM = 2


# -----------------------
# Configuration and records
# -----------------------
@dataclass
class BenchConfig:
    """What to benchmark and how often.

    Attributes:
        task: One of TASKS.
        workers: Number of workers.
        threads: Compute threads per worker. Defaults to option `blaze.threads_per_worker`.
        size: Input size, in the unit of the task. Defaults to DEFAULT_SIZES.
        seed: Seed of the generated data.
        warmup: Untimed runs before the measured ones.
        reps: Measured repetitions.
        out: CSV file to write, if any.
        hosts: `host:port` list of a cluster to join instead of spawning local workers.
        rank: This process's rank within `hosts`.
        data_dir: Where to put generated inputs. A temporary directory when omitted; with
            `hosts` it must be shared by all machines.
        iterations: Iterations of pagerank, kmeans and gmm per run.

    Raises:
        ConfigError: If any field is out of range.
    """

    task: str
    workers: int = 1
    threads: Union[int, None] = None
    size: Union[int, None] = None
    seed: int = 0
    warmup: int = 1
    reps: int = 3
    out: Union[str, None] = None
    hosts: Union[str, None] = None
    rank: int = 0
    data_dir: Union[str, None] = None
    iterations: int = 10

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, choose from {TASKS}")
        if self.reps < 1:
            raise ConfigError(f"reps must be at least 1, got {self.reps}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must not be negative, got {self.warmup}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if self.size is not None and self.size < 1:
            raise ConfigError(f"size must be at least 1, got {self.size}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be at least 1, got {self.iterations}")

    @property
    def resolved_size(self) -> int:
        return self.size if self.size is not None else DEFAULT_SIZES[self.task]


@dataclass
class BenchRecord:
    """One CSV row: a measured repetition, or the summary of all of them (rep == "summary")."""

    task: str
    workers: int
    threads: int
    size: int
    rep: Union[int, str]
    seconds: float
    items_per_sec: float
    peak_rss_bytes: Union[int, None] = None
    pairs_emitted: int = 0
    pairs_shuffled: int = 0
    wire_bytes_out: int = 0
    seconds_std: Union[float, None] = None

    def to_row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in CSV_COLUMNS}

    @classmethod
    def from_row(cls, row: Mapping[str, Any]) -> "BenchRecord":
        """Rebuilds a record from a row as written by `to_row` or read back by pandas."""

        def optional(value: Any, kind: Callable) -> Any:
            return None if value is None or pd.isna(value) else kind(value)

        rep = row["rep"]
        if isinstance(rep, str) and rep.isdigit():
            rep = int(rep)
        elif not isinstance(rep, str):
            rep = int(rep)
        return cls(
            task=str(row["task"]),
            workers=int(row["workers"]),
            threads=int(row["threads"]),
            size=int(row["size"]),
            rep=rep,
            seconds=float(row["seconds"]),
            items_per_sec=float(row["items_per_sec"]),
            peak_rss_bytes=optional(row.get("peak_rss_bytes"), int),
            pairs_emitted=int(row["pairs_emitted"]),
            pairs_shuffled=int(row["pairs_shuffled"]),
            wire_bytes_out=int(row["wire_bytes_out"]),
            seconds_std=optional(row.get("seconds_std"), float),
        )


def records_to_frame(records: List[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records], columns=CSV_COLUMNS)


def write_csv(records: List[BenchRecord], path: Union[str, os.PathLike]) -> None:
    records_to_frame(records).to_csv(path, index=False)


def read_csv(path: Union[str, os.PathLike]) -> List[BenchRecord]:
    frame = pd.read_csv(path, dtype={"rep": str})
    return [BenchRecord.from_row(row) for row in frame.to_dict("records")]


def _display_records(records: List[BenchRecord]) -> None:
    if records:
        _display_table(records_to_frame(records), name=f"🔥 blaze-bench {records[0].task}")


# -----------------------
# Memory
# -----------------------
class PeakMemorySampler:
    """Samples a process's resident set size on a background thread while the block runs.

    Example:
        ```python
        with PeakMemorySampler() as sampler:
            run_job()
        sampler.peak  # bytes, or None where the platform does not report RSS
        ```

    Args:
        interval: Seconds between samples.
        pid: Process to watch. Defaults to this one.
    """

    def __init__(self, interval: float = 0.05, pid: Union[int, None] = None) -> None:
        self.interval = interval
        self.peak: Union[int, None] = None
        self._stop = threading.Event()
        self._thread: Union[threading.Thread, None] = None
        try:
            self._process: Union[psutil.Process, None] = psutil.Process(pid)
        except (psutil.Error, NotImplementedError):
            self._process = None

    def _sample(self) -> None:
        if self._process is None:
            return
        try:
            rss = self._process.memory_info().rss
        except (psutil.Error, NotImplementedError, AttributeError):
            return
        if self.peak is None or rss > self.peak:
            self.peak = rss

    def _run(self) -> None:
        while not self._stop.wait(self.interval):
            self._sample()

    def __enter__(self) -> "PeakMemorySampler":
        self._sample()
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, name="blaze-rss", daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc: Any) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        self._sample()


def sample_peak_memory(
    fn: Callable[..., Any],
    *args: Any,
    interval: float = 0.05,
    pid: Union[int, None] = None,
) -> Tuple[Any, Union[int, None]]:
    """Runs `fn(*args)` and returns its result with the peak RSS seen meanwhile, in bytes."""
    with PeakMemorySampler(interval, pid) as sampler:
        result = fn(*args)
    return result, sampler.peak


# -----------------------
# Workloads
# -----------------------
@dataclass
class _Workload:
    """How to generate, load and run one task.

    `generate(cfg, size, directory)` runs on rank 0 only. `load(ctx, cfg, size, directory)`
    returns the state `run(ctx, cfg, size, state)` works on; run returns the number of items
    processed and the worker's counters.
    """

    generate: Callable[[BenchConfig, int, str], None]
    load: Callable[[ClusterCtx, BenchConfig, int, str], Any]
    run: Callable[[ClusterCtx, BenchConfig, int, Any], Tuple[int, JobCounters]]
    description: str = ""


def _text_file(cfg: BenchConfig, size: int) -> str:
    return f"text-{size}.txt"


def _graph_file(cfg: BenchConfig, size: int) -> str:
    return f"graph-{size}-{cfg.seed}.txt"


def _points_file(cfg: BenchConfig, size: int) -> str:
    return f"points-{size}-{CLUSTERS}x{DIM}-{cfg.seed}.csv"


def _n_pages(size: int) -> int:
    return max(1, size // 10)


def _generator(
    kind: str,
    file_name: Callable[[BenchConfig, int], str],
    opts: Callable[[int], Dict[str, Any]] = lambda size: {},
) -> Callable[[BenchConfig, int, str], None]:
    """Writes the input once; later runs with the same size and seed reuse the file."""

    def generate(cfg: BenchConfig, size: int, directory: str) -> None:
        path = os.path.join(directory, file_name(cfg, size))
        if not os.path.exists(path):
            gen_data(kind, size, cfg.seed, path, **opts(size))

    return generate


def _point_opts(size: int) -> Dict[str, Any]:
    return {"clusters": CLUSTERS, "dim": DIM}


def _load_points(ctx: ClusterCtx, cfg: BenchConfig, size: int, directory: str) -> Any:
    return load_points(ctx, os.path.join(directory, _points_file(cfg, size)))


def _run_wordcount(ctx: ClusterCtx, cfg: BenchConfig, size: int, lines: Any):
    result = wordcount(lines)
    return result.total(), result.counters


def _load_graph(ctx: ClusterCtx, cfg: BenchConfig, size: int, directory: str) -> Graph:
    edges = load_edges(ctx, os.path.join(directory, _graph_file(cfg, size)))
    return Graph.from_edges(edges, _n_pages(size))


def _run_pagerank(ctx: ClusterCtx, cfg: BenchConfig, size: int, graph: Graph):
    state = pagerank(graph, tol=1e-5, max_iterations=cfg.iterations)
    return size * state.iterations, state.counters


def _load_kmeans(ctx: ClusterCtx, cfg: BenchConfig, size: int, directory: str):
    points = _load_points(ctx, cfg, size, directory)
    return points, initial_centers(points, CLUSTERS)


def _run_kmeans(ctx: ClusterCtx, cfg: BenchConfig, size: int, state: Any):
    points, centers = state
    # tol 0 keeps every run at exactly cfg.iterations
    model = kmeans(points, centers, tol=0.0, max_iterations=cfg.iterations)
    return size * model.iterations, model.counters


def _load_gmm(ctx: ClusterCtx, cfg: BenchConfig, size: int, directory: str):
    points = _load_points(ctx, cfg, size, directory)
    return points, GmmModel.spherical(initial_centers(points, CLUSTERS))


def _run_gmm(ctx: ClusterCtx, cfg: BenchConfig, size: int, state: Any):
    points, init_model = state
    model = gmm_em(points, init_model, tol=float("-inf"), max_iterations=cfg.iterations)
    return size * model.iterations, model.counters


def _run_nearest(ctx: ClusterCtx, cfg: BenchConfig, size: int, points: Any):
    nearest100(points, np.zeros(DIM))
    return size, JobCounters()


def _run_pi(ctx: ClusterCtx, cfg: BenchConfig, size: int, state: Any):
    _, counters = count_hits(ctx, size, cfg.seed)
    return size, counters


def _no_data(*args: Any) -> None:
    return None


WORKLOADS: Dict[str, _Workload] = {
    "wordcount": _Workload(
        generate=_generator("text", _text_file),
        load=lambda ctx, cfg, size, d: load_file(ctx, os.path.join(d, _text_file(cfg, size))),
        run=_run_wordcount,
        description="words per second",
    ),
    "pagerank": _Workload(
        generate=_generator("graph", _graph_file, lambda size: {"pages": _n_pages(size)}),
        load=_load_graph,
        run=_run_pagerank,
        description="links per second per iteration",
    ),
    "kmeans": _Workload(
        generate=_generator("points", _points_file, _point_opts),
        load=_load_kmeans,
        run=_run_kmeans,
        description="points per second per iteration",
    ),
    "gmm": _Workload(
        generate=_generator("points", _points_file, _point_opts),
        load=_load_gmm,
        run=_run_gmm,
        description="points per second per iteration",
    ),
    "nn": _Workload(
        generate=_generator("points", _points_file, _point_opts),
        load=_load_points,
        run=_run_nearest,
        description="points per second",
    ),
    "pi": _Workload(
        generate=_no_data,
        load=_no_data,
        run=_run_pi,
        description="samples per second",
    ),
}


# -----------------------
# Harness
# -----------------------
def _slowest(ctx: ClusterCtx, seconds: float) -> float:
    return max(F64.loads(part) for part in ctx.allgather(F64.dumps(seconds)))


def _largest_peak(ctx: ClusterCtx, peak: Union[int, None]) -> Union[int, None]:
    peaks = [ZIGZAG.loads(p) for p in ctx.allgather(ZIGZAG.dumps(-1 if peak is None else peak))]
    return None if min(peaks) < 0 else max(peaks)


def _data_dir(ctx: ClusterCtx, cfg: BenchConfig) -> Tuple[str, bool]:
    """The shared input directory and whether this run created it."""
    if cfg.data_dir is not None:
        if ctx.rank == 0:
            os.makedirs(cfg.data_dir, exist_ok=True)
        return cfg.data_dir, False
    path = tempfile.mkdtemp(prefix="blaze-bench-") if ctx.rank == 0 else None
    return STR.loads(ctx.broadcast(STR.dumps(path) if path is not None else None)), True


def _summarize(records: List[BenchRecord], items: List[int]) -> BenchRecord:
    seconds = np.array([record.seconds for record in records])
    peaks = [record.peak_rss_bytes for record in records]
    last = records[-1]
    mean = float(seconds.mean())
    return BenchRecord(
        task=last.task,
        workers=last.workers,
        threads=last.threads,
        size=last.size,
        rep="summary",
        seconds=mean,
        items_per_sec=float(np.mean(items)) / mean if mean > 0 else float("inf"),
        peak_rss_bytes=None if None in peaks else max(peaks),
        pairs_emitted=last.pairs_emitted,
        pairs_shuffled=last.pairs_shuffled,
        wire_bytes_out=last.wire_bytes_out,
        seconds_std=float(seconds.std(ddof=1)) if len(seconds) > 1 else 0.0,
    )


def run_bench(
    cfg: BenchConfig, ctx: ClusterCtx, on_phase: Union[Callable[[str], None], None] = None
) -> List[BenchRecord]:
    """Benchmarks one task on this worker's cluster. Collective.

    Phase markers "load_start", "load_end", then "measure_start" and "measure_end" around every
    measured repetition are passed to `on_phase` as they happen.

    Args:
        cfg: The benchmark configuration.
        ctx: This worker's cluster context.
        on_phase: Optional hook called with each phase name.

    Returns:
        One record per measured repetition and a final summary record, the same on every
        worker. Seconds are those of the slowest worker; counters are summed over workers.

    Raises:
        InputError: If the input data cannot be generated or read.
    """
    workload = WORKLOADS[cfg.task]
    size = cfg.resolved_size
    phases = PhaseTimer(on_phase)

    phases.mark("load_start")
    directory, created = _data_dir(ctx, cfg)
    problem = None
    if ctx.rank == 0:
        try:
            workload.generate(cfg, size, directory)
        except (InputError, OSError) as e:
            problem = str(e)
    _raise_collectively(ctx, problem, InputError)
    state = workload.load(ctx, cfg, size, directory)
    phases.mark("load_end")
    _log(f"{cfg.task}: loaded size {size} from {directory}", ctx.rank)

    for _ in range(cfg.warmup):
        workload.run(ctx, cfg, size, state)

    records: List[BenchRecord] = []
    items_per_rep: List[int] = []
    for rep in range(cfg.reps):
        ctx.barrier()
        with PeakMemorySampler() as sampler:
            phases.mark("measure_start")
            items, counters = workload.run(ctx, cfg, size, state)
            ctx.barrier()
            phases.mark("measure_end")
        seconds = _slowest(ctx, phases.between("measure_start", "measure_end"))
        totals = counters.allsum(ctx)
        records.append(
            BenchRecord(
                task=cfg.task,
                workers=ctx.size,
                threads=ctx.threads_per_worker,
                size=size,
                rep=rep,
                seconds=seconds,
                items_per_sec=items / seconds if seconds > 0 else float("inf"),
                peak_rss_bytes=_largest_peak(ctx, sampler.peak),
                pairs_emitted=totals.pairs_emitted,
                pairs_shuffled=totals.pairs_shuffled,
                wire_bytes_out=totals.wire_bytes_out,
            )
        )
        items_per_rep.append(items)
        _log(f"{cfg.task} rep {rep}: {seconds:.4f} s", ctx.rank)

    ctx.barrier()
    if created and ctx.rank == 0:
        shutil.rmtree(directory, ignore_errors=True)
    records.append(_summarize(records, items_per_rep))
    _log(f"{cfg.task}: {records[-1].items_per_sec:.4g} {workload.description}", ctx.rank)
    return records


def _bench_worker(ctx: ClusterCtx, cfg: BenchConfig) -> List[BenchRecord]:
    return run_bench(cfg, ctx)


def _parse_args(argv: Union[List[str], None]) -> Tuple[argparse.ArgumentParser, BenchConfig]:
    parser = argparse.ArgumentParser(
        prog="blaze-bench",
        description="Time a Blaze MapReduce workload and write one CSV row per repetition.",
    )
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--workers", type=int, default=1, help="local worker processes")
    parser.add_argument("--threads", type=int, default=None, help="compute threads per worker")
    parser.add_argument("--size", type=int, default=None, help="input size, per task")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--warmup", type=int, default=1)
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--iterations", type=int, default=10)
    parser.add_argument("--hosts", default=None, help="host:port,... of a cluster to join")
    parser.add_argument("--rank", type=int, default=0, help="this process's rank in --hosts")
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--out", default=None, help="CSV file to write")
    args = parser.parse_args(argv)
    try:
        cfg = BenchConfig(
            task=args.task,
            workers=args.workers,
            threads=args.threads,
            size=args.size,
            seed=args.seed,
            warmup=args.warmup,
            reps=args.reps,
            out=args.out,
            hosts=args.hosts,
            rank=args.rank,
            data_dir=args.data_dir,
            iterations=args.iterations,
        )
    except ConfigError as e:
        parser.error(str(e))
    return parser, cfg


def main(argv: Union[List[str], None] = None) -> None:
    """Entry point of `blaze-bench`."""
    parser, cfg = _parse_args(argv)
    threads = cfg.threads if cfg.threads is not None else get_option("threads_per_worker")
    try:
        if cfg.hosts is not None:
            ctx = init(
                ClusterConfig(
                    backend="sockets",
                    rank=cfg.rank,
                    peers=cfg.hosts,
                    threads_per_worker=threads,
                )
            )
            with ctx:
                records = run_bench(cfg, ctx)
            rank = ctx.rank
        else:
            if cfg.workers * threads > cpu_count():
                _warning(
                    f"{cfg.workers} workers x {threads} threads oversubscribe {cpu_count()} cores;"
                    " timings will not scale"
                )
            backend = "sockets" if cfg.workers > 1 else "threads"
            records = launch(
                cfg.workers, _bench_worker, cfg, backend=backend, threads_per_worker=threads
            )[0]
            rank = 0
    except ConfigError as e:
        parser.error(str(e))
    except (TransportError, InputError) as e:
        _display_verdict(False, str(e))
        raise SystemExit(1)

    if rank == 0:
        if cfg.out is not None:
            write_csv(records, cfg.out)
        _display_records(records)
