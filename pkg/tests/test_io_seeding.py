from __future__ import annotations

import json
import threading

import numpy as np
import pytest

from nonhyp.io import SCHEMA_VERSION, csv_text, dumps_json, read_csv, write_csv, write_json
from nonhyp.parallel import ENV_THREADS, pmap, worker_count
from nonhyp.seeding import stream


def test_write_json_adds_schema(tmp_path):
    p = write_json(tmp_path / "a" / "r.json", {"x": np.float64(1.5), "n": np.int64(2), "v": np.arange(3)})
    data = json.loads(p.read_text())
    assert data == {"schema_version": SCHEMA_VERSION, "x": 1.5, "n": 2, "v": [0, 1, 2]}


def test_json_nonfinite():
    data = json.loads(dumps_json({"a": np.inf, "b": -np.inf, "c": np.nan}))
    assert data == {"a": "inf", "b": "-inf", "c": None}


def test_csv_layout(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [[0.1, True], [None, "w"]])
    assert p.read_text() == "# schema_version,1.0\na,b\n0.1,true\n,w\n"
    assert read_csv(p) == (["a", "b"], [["0.1", "true"], ["", "w"]])


def test_float_cells_roundtrip():
    x = 0.1 + 0.2
    assert csv_text(["x"], [[x]]).splitlines()[-1] == repr(x)


def test_concurrent_writes_are_whole(tmp_path):
    target = tmp_path / "c.json"

    def w(i):
        write_json(target, {"i": i, "pad": "x" * 10_000})

    ts = [threading.Thread(target=w, args=(i,)) for i in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert json.loads(target.read_text())["pad"] == "x" * 10_000
    assert [p.name for p in tmp_path.iterdir()] == ["c.json"]


def test_stream_reproducible_and_independent():
    a = stream(7, "shadow", 1, 2).random(4)
    assert np.array_equal(a, stream(7, "shadow", 1, 2).random(4))
    assert not np.array_equal(a, stream(7, "shadow", 1, 3).random(4))
    assert not np.array_equal(a, stream(7, "horseshoe", 1, 2).random(4))
    assert not np.array_equal(a, stream(8, "shadow", 1, 2).random(4))


def test_worker_count_env_cap(monkeypatch):
    monkeypatch.delenv(ENV_THREADS, raising=False)
    assert worker_count() == 1
    assert worker_count(8) == 8
    monkeypatch.setenv(ENV_THREADS, "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.setenv(ENV_THREADS, "junk")
    assert worker_count(3) == 3


@pytest.mark.parametrize("workers", [1, 2, 8])
def test_pmap_preserves_order(workers):
    assert pmap(lambda x: x * x, range(50), workers) == [x * x for x in range(50)]


def test_pmap_propagates_errors():
    def f(x):
        if x == 3:
            raise RuntimeError("boom")
        return x

    with pytest.raises(RuntimeError, match="boom"):
        pmap(f, range(6), 4)
