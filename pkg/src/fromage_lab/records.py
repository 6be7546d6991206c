"""
Run outputs: CSV tables, ``summary.json`` and the output directory layout.

CSV files use RFC-4180 quoting with CRLF line ends. Floats are written with
``repr`` so the same numbers always produce the same bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import subprocess
from collections.abc import Iterable, Mapping, Sequence
from datetime import datetime, timezone
from enum import StrEnum
from pathlib import Path
from types import TracebackType
from typing import IO, Any

import numpy as np

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"


class RunStatus(StrEnum):
    OK = "ok"
    COMPLETED = "completed"
    DIVERGED = "diverged"
    VIOLATED = "violated"
    BELOW_THRESHOLD = "below_threshold"


def format_value(value: Any) -> str:
    """Render one CSV cell; ``None`` becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, StrEnum):
        return value.value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class CsvRecorder:
    """
    Append rows with a fixed column set to a CSV file.

    The header is written on open, so a run that produces no rows still leaves
    a header-only file.
    """

    def __init__(self, path: str | Path, columns: Sequence[str]) -> None:
        self.path = Path(path)
        self.columns = list(columns)
        self._handle: IO[str] | None = None
        self._writer: csv.DictWriter[str] | None = None
        self.rows_written = 0

    def open(self) -> "CsvRecorder":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(self._handle, fieldnames=self.columns, lineterminator="\r\n")
        self._writer.writeheader()
        return self

    def write(self, row: Mapping[str, Any]) -> None:
        if self._writer is None:
            raise RuntimeError(f"{self.path} is not open")
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"columns {sorted(unknown)} are not in the schema of {self.path.name}")
        self._writer.writerow({c: format_value(row.get(c)) for c in self.columns})
        self.rows_written += 1

    def write_all(self, rows: Iterable[Mapping[str, Any]]) -> None:
        for row in rows:
            self.write(row)

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self._writer = None

    def __enter__(self) -> "CsvRecorder":
        return self.open()

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.close()


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    with CsvRecorder(path, columns) as recorder:
        recorder.write_all(rows)
    return Path(path)


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def default_label() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def run_directory(output_dir: str | Path, command: str, label: str | None = None) -> Path:
    """Create and return ``{output_dir}/{command}/{label}``."""
    path = Path(output_dir) / command / (label or default_label())
    path.mkdir(parents=True, exist_ok=True)
    return path


def config_digest(config_yaml: str) -> str:
    return hashlib.sha256(config_yaml.encode("utf-8")).hexdigest()


def build_identifier() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    from . import __version__

    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.TimeoutExpired):
        return __version__
    described = result.stdout.strip()
    if result.returncode != 0 or not described:
        return __version__
    return described


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, StrEnum):
        return value.value
    return value


def write_summary(
    run_dir: str | Path,
    *,
    command: str,
    seed: int,
    config_yaml: str,
    status: RunStatus,
    **extra: Any,
) -> Path:
    """
    Write ``summary.json`` next to a run's CSV files.

    Parameters
    ----------
    run_dir : path
        Run output directory.
    command : str
        Subcommand that produced the run.
    seed : int
        Global seed.
    config_yaml : str
        Resolved configuration; its SHA-256 is recorded.
    status : RunStatus
        Final status.
    **extra
        Per-command summary numbers.
    """
    path = Path(run_dir) / SUMMARY_FILE
    summary = {
        "command": command,
        "label": Path(run_dir).name,
        "seed": seed,
        "config_sha256": config_digest(config_yaml),
        "build": build_identifier(),
        "status": status.value,
        **_json_safe(extra),
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (Path(run_dir) / "config.yaml").write_text(config_yaml, encoding="utf-8")
    logger.info(f"Wrote run summary {path}")
    return path
