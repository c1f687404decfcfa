import matplotlib

matplotlib.use("Agg")

import pytest  # noqa: E402

from blaze_mr.bench import BenchRecord, write_csv  # noqa: E402
from blaze_mr.plots import main, plot_throughput  # noqa: E402


@pytest.fixture
def bench_csv(tmp_path):
    records = []
    for workers, seconds in [(1, 2.0), (2, 1.1), (4, 0.6)]:
        records += [
            BenchRecord("pi", workers, 2, 1000, 0, seconds, 1000 / seconds),
            BenchRecord("pi", workers, 2, 1000, "summary", seconds, 1000 / seconds, seconds_std=0.1),
        ]
    path = tmp_path / "bench.csv"
    write_csv(records, path)
    return path


def test_one_line_per_task_and_threads(bench_csv, tmp_path):
    out = tmp_path / "throughput.png"
    fig = plot_throughput(bench_csv, out)
    (ax,) = fig.axes
    assert ax.get_xlabel() == "workers"
    assert [text.get_text() for text in ax.get_legend().get_texts()] == ["pi, 2 threads"]
    assert out.stat().st_size > 0


def test_command_needs_an_output(bench_csv):
    with pytest.raises(SystemExit):
        main([str(bench_csv)])


def test_command_writes_an_image(bench_csv, tmp_path):
    out = tmp_path / "plot.png"
    main([str(bench_csv), "--out", str(out)])
    assert out.exists()
