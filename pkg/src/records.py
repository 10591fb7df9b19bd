"""Run-directory output files: trajectory stream, field blocks, key-value records and tables."""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from .config import FIELDS_FILE, SUMMARY_FILE, TRAJECTORY_FILE
from .models import CheckpointRecord, CheckResult, SystemState

logger = logging.getLogger(__name__)

COUNT_DTYPE = np.dtype("<u8")
FLOAT_DTYPE = np.dtype("<f8")


class TrajectoryWriter:
    """Checkpoint sink streaming scalars as JSON lines and fields as binary blocks.

    Each field block is an 8-byte little-endian count of complex values followed by
    little-endian float64 (re, im) pairs. The JSON record of a checkpoint with a stored
    field carries the byte offset of its block.
    """

    def __init__(self, out_dir: Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.trajectory_path = out_dir / TRAJECTORY_FILE
        self.fields_path = out_dir / FIELDS_FILE
        self._records = open(self.trajectory_path, "w", encoding="utf-8")
        self._fields = open(self.fields_path, "wb")
        self.count = 0

    def write(self, record: CheckpointRecord, state: Optional[SystemState]) -> None:
        row = record.to_record()
        if state is not None:
            row["field_offset"] = self._fields.tell()
            write_field_block(self._fields, state.xi.values)
        self._records.write(json.dumps(row) + "\n")
        self.count += 1

    def close(self) -> None:
        self._records.close()
        self._fields.close()
        logger.debug(f"wrote {self.count} checkpoints to {self.trajectory_path}")

    def __enter__(self) -> "TrajectoryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_field_block(handle, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype=complex)
    handle.write(np.array([values.size], dtype=COUNT_DTYPE).tobytes())
    handle.write(values.view(np.float64).astype(FLOAT_DTYPE).tobytes())


def read_field_block(path: Path, offset: int = 0) -> np.ndarray:
    """Read the complex field block starting at a byte offset of a fields file."""
    with open(path, "rb") as handle:
        handle.seek(offset)
        header = handle.read(COUNT_DTYPE.itemsize)
        if len(header) != COUNT_DTYPE.itemsize:
            raise ValueError(f"no field block at offset {offset} of {path}")
        count = int(np.frombuffer(header, dtype=COUNT_DTYPE)[0])
        payload = handle.read(2 * count * FLOAT_DTYPE.itemsize)
    if len(payload) != 2 * count * FLOAT_DTYPE.itemsize:
        raise ValueError(f"truncated field block at offset {offset} of {path}")
    pairs = np.frombuffer(payload, dtype=FLOAT_DTYPE).astype(np.float64)
    return pairs[0::2] + 1j * pairs[1::2]


def read_trajectory(path: Path) -> pd.DataFrame:
    """Checkpoint scalars of a run as a DataFrame (one row per checkpoint)."""
    path = Path(path)
    if path.is_dir():
        path = path / TRAJECTORY_FILE
    if not path.is_file():
        raise FileNotFoundError(f"no trajectory stream at {path}")
    return pd.read_json(path, lines=True, precise_float=True)


def _format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_kv_record(path: Path, record: Dict[str, Any]) -> Path:
    """Flat key=value file, one entry per line in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_format_value(value)}" for key, value in record.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_kv_record(path: Path) -> Dict[str, str]:
    record = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            record[key] = value
    return record


def write_summary(out_dir: Path, kind: str, checks: Iterable[CheckResult]) -> Path:
    """summary.rec: the experiment kind, one line per check and the overall status."""
    checks = list(checks)
    path = Path(out_dir) / SUMMARY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    status = "pass" if all(check.passed for check in checks) else "fail"
    lines = [f"kind={kind}"] + [check.to_line() for check in checks] + [f"status={status}"]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_summary(path: Path) -> Dict[str, Any]:
    """Parse summary.rec back into the kind, the status and the check lines."""
    path = Path(path)
    if path.is_dir():
        path = path / SUMMARY_FILE
    summary = {"kind": None, "status": None, "checks": []}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("check="):
            fields = dict(part.split("=", 1) for part in line.split())
            summary["checks"].append(CheckResult(
                name=fields["check"],
                statistic=float(fields["statistic"]),
                tolerance=float(fields["tolerance"]),
                passed=fields["passed"] == "true",
            ))
        elif line.startswith("kind="):
            summary["kind"] = line.split("=", 1)[1]
        elif line.startswith("status="):
            summary["status"] = line.split("=", 1)[1]
    return summary


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    """Diagnostic table as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.debug(f"wrote {len(frame)} rows to {path}")
    return path
