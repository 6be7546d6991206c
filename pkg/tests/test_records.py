"""Tests for CSV records and run summaries."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from fromage_lab.records import (
    SUMMARY_FILE,
    CsvRecorder,
    RunStatus,
    config_digest,
    format_value,
    read_csv,
    run_directory,
    write_csv,
    write_summary,
)


@pytest.mark.parametrize(
    ("value", "expected"),
    [
        (None, ""),
        (True, "true"),
        (np.bool_(False), "false"),
        (3, "3"),
        (np.int64(7), "7"),
        (0.1, "0.1"),
        (np.float64(0.25), "0.25"),
        (math.inf, "inf"),
        (RunStatus.DIVERGED, "diverged"),
        ("fromage", "fromage"),
    ],
)
def test_format_value(value, expected):
    assert format_value(value) == expected


def test_csv_uses_crlf_and_fixed_columns(tmp_path):
    path = write_csv(tmp_path / "out" / "rows.csv", ["a", "b"], [{"a": 1}, {"a": 2, "b": 0.5}])
    raw = path.read_bytes()
    assert raw == b"a,b\r\n1,\r\n2,0.5\r\n"
    assert read_csv(path) == [{"a": "1", "b": ""}, {"a": "2", "b": "0.5"}]


def test_header_is_written_without_rows(tmp_path):
    path = write_csv(tmp_path / "empty.csv", ["x"], [])
    assert path.read_bytes() == b"x\r\n"


def test_unknown_column_is_rejected(tmp_path):
    with CsvRecorder(tmp_path / "rows.csv", ["a"]) as recorder:
        with pytest.raises(KeyError, match="not in the schema"):
            recorder.write({"b": 1})
        assert recorder.rows_written == 0


def test_closed_recorder_refuses_rows(tmp_path):
    recorder = CsvRecorder(tmp_path / "rows.csv", ["a"])
    with pytest.raises(RuntimeError, match="not open"):
        recorder.write({"a": 1})


def test_run_directory_layout(tmp_path):
    path = run_directory(tmp_path, "train", "first")
    assert path == tmp_path / "train" / "first"
    assert path.is_dir()
    assert run_directory(tmp_path, "train").parent == tmp_path / "train"


def test_summary_records_seed_digest_and_extras(tmp_path):
    config_yaml = "seed: 3\n"
    run_dir = run_directory(tmp_path, "verify-bounds", "check")
    path = write_summary(
        run_dir,
        command="verify-bounds",
        seed=3,
        config_yaml=config_yaml,
        status=RunStatus.VIOLATED,
        violations=2,
        worst_ratio=math.inf,
    )
    summary = json.loads(path.read_text(encoding="utf-8"))
    assert path.name == SUMMARY_FILE
    assert summary["label"] == "check"
    assert summary["seed"] == 3
    assert summary["status"] == "violated"
    assert summary["config_sha256"] == config_digest(config_yaml)
    assert summary["violations"] == 2
    assert summary["worst_ratio"] == "inf"
    assert summary["build"]
    assert (run_dir / "config.yaml").read_text(encoding="utf-8") == config_yaml
