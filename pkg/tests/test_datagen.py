import json

import numpy as np
import pytest

from blaze_mr import load_edges, load_points
from blaze_mr.apps import (
    KMeansModel,
    base_text,
    dump_model,
    gen_data,
    make_edges,
    make_points,
    make_text,
)
from blaze_mr.apps.datagen import main


def test_points_are_reproducible():
    first, centers = make_points(1000, n_clusters=4, dim=3, seed=1)
    second, _ = make_points(1000, n_clusters=4, dim=3, seed=1)
    assert first.shape == (1000, 3)
    assert centers.shape == (4, 3)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, make_points(1000, n_clusters=4, dim=3, seed=2)[0])


def test_edges_stay_in_range():
    edges = make_edges(10**4, 500, seed=1)
    assert edges.shape == (10**4, 2)
    assert edges.dtype == np.int64
    assert edges.min() >= 0
    assert edges.max() < 500
    assert np.array_equal(edges, make_edges(10**4, 500, seed=1))


def test_text_copies():
    assert make_text(3, ["a b"]) == ["a b", "a b", "a b"]
    assert make_text(2) == base_text() * 2
    assert base_text(["sonnets", "genesis"]) == base_text("sonnets") + base_text("genesis")


@pytest.mark.parametrize(
    "call",
    [
        lambda: make_text(0),
        lambda: base_text("hamlet"),
        lambda: make_points(10, n_clusters=0),
        lambda: make_edges(10, 0),
        lambda: gen_data("images", 10),
    ],
)
def test_rejects(call):
    with pytest.raises(ValueError):
        call()


def test_points_survive_the_file(ctx, tmp_path):
    path = tmp_path / "points.csv"
    points, _ = gen_data("points", 300, seed=4, out=path, clusters=3, dim=2)
    assert np.array_equal(load_points(ctx, path).local, points)


def test_edges_survive_the_file(ctx, tmp_path):
    path = tmp_path / "edges.txt"
    edges = gen_data("graph", 500, seed=4, out=path, pages=30)
    assert np.array_equal(load_edges(ctx, path).local, edges)
    assert edges.max() < 30


def test_command_writes_text(tmp_path, capsys):
    path = tmp_path / "corpus.txt"
    main(["text", "--size", "2", "--out", str(path)])
    assert path.read_text(encoding="utf-8").splitlines() == base_text() * 2
    assert "Passed" in capsys.readouterr().out


def test_command_reports_unwritable_output(tmp_path):
    with pytest.raises(SystemExit):
        main(["graph", "--size", "10", "--out", str(tmp_path / "missing" / "edges.txt")])


def test_dump_model(tmp_path):
    model = KMeansModel(centers=np.array([[1.0, 2.0]]), counts=np.array([3.0]), iterations=2)
    path = tmp_path / "model.json"
    text = dump_model(model, path)
    data = json.loads(path.read_text())
    assert data == json.loads(text)
    assert data["centers"] == [[1.0, 2.0]]
    assert data["wcss"] is None
    assert dump_model({"a": np.arange(2)}) == json.dumps({"a": [0, 1]}, indent=2)
