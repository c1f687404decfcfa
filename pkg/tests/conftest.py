import os

from pytest import fixture

from blaze_mr import ClusterConfig, init, launch, reset_options

# BLAZE_BACKEND=sockets reruns every multi-worker test over forked processes
BACKEND = os.environ.get("BLAZE_BACKEND", "threads")


@fixture(autouse=True)
def default_options():
    reset_options()
    yield
    reset_options()


@fixture
def ctx():
    """A single-worker cluster with two compute threads."""
    with init(ClusterConfig(backend="threads", threads_per_worker=2)) as context:
        yield context


@fixture
def cluster():
    """Runs fn(ctx, *args) on every rank of a fresh cluster and returns the per-rank results."""

    def run(size, fn, *args, threads=2):
        return launch(size, fn, *args, backend=BACKEND, threads_per_worker=threads)

    return run


@fixture
def text_file(tmp_path):
    """Writes lines to a file, with or without a final newline, and returns its path."""

    def write(lines, name="text.txt", trailing_newline=True):
        path = tmp_path / name
        body = "\n".join(lines) + ("\n" if trailing_newline and lines else "")
        path.write_bytes(body.encode("utf-8"))
        return str(path)

    return write
