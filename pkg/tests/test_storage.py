import json
import os

import numpy as np
import pytest

from doorpass_lab.core.exceptions import RunLockedError
from doorpass_lab.infra.storage import ArtifactStore, atomic_write_bytes, format_csv, read_csv


def test_second_writer_is_rejected(tmp_path):
    with ArtifactStore(str(tmp_path), "run"):
        with pytest.raises(RunLockedError):
            ArtifactStore(str(tmp_path), "run").acquire()
    # после освобождения каталог снова доступен
    with ArtifactStore(str(tmp_path), "run"):
        pass
    assert not os.path.exists(tmp_path / "run" / ".lock")


def test_csv_stamp_and_values():
    text = format_csv(["label", "rate"], [[1.0, np.float64(0.25)], ["x", 3]],
                      {"seed": 0, "config_hash": "abc"})
    lines = text.splitlines()
    assert lines[0] == "# config_hash=abc, seed=0"
    assert lines[1] == "label,rate"
    assert lines[2] == "1.0,0.25"


def test_read_csv_skips_stamp(tmp_path):
    store = ArtifactStore(str(tmp_path), "run", {"seed": 3})
    path = store.write_csv("table.csv", ["a", "b"], [[1, 2.5]])
    assert read_csv(path) == [{"a": "1", "b": "2.5"}]


def test_json_and_jsonl_carry_stamp(tmp_path):
    store = ArtifactStore(str(tmp_path), "run", {"seed": 3})
    with open(store.write_json("summary.json", {"ok": True}), encoding='utf-8') as f:
        assert json.load(f) == {"ok": True, "stamp": {"seed": 3}}
    store.reset_file("curve.jsonl")
    store.append_jsonl("curve.jsonl", {"step": 1})
    store.append_jsonl("curve.jsonl", {"step": 2})
    with open(store.path("curve.jsonl"), encoding='utf-8') as f:
        records = [json.loads(line) for line in f]
    assert records == [{"seed": 3, "step": 1}, {"seed": 3, "step": 2}]


def test_atomic_bytes_leave_no_temporaries(tmp_path):
    target = str(tmp_path / "nested" / "blob.bin")
    atomic_write_bytes(target, b"abc")
    atomic_write_bytes(target, b"defg")
    with open(target, 'rb') as f:
        assert f.read() == b"defg"
    assert os.listdir(tmp_path / "nested") == ["blob.bin"]
