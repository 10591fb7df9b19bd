import math

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from src.dynamics import evolve
from src.export import export_trajectory_parquet
from src.models import CheckResult, ModelConfig, SystemState
from src.radial import gaussian
from src.records import (
    TrajectoryWriter,
    read_field_block,
    read_kv_record,
    read_summary,
    read_trajectory,
    write_field_block,
    write_kv_record,
    write_summary,
    write_table,
)


@pytest.fixture
def recorded_run(tmp_path, small_grid, gaussian_coupling):
    config = ModelConfig(grid=small_grid, G=gaussian_coupling, dt=0.05, t_end=1.0, checkpoint_stride=2, field_stride=10)
    with TrajectoryWriter(tmp_path / "run") as writer:
        trajectory = evolve(SystemState(gaussian(small_grid, 1.0, 0.2), 0.3), config, writer)
    return tmp_path / "run", trajectory, writer


def test_trajectory_stream(recorded_run):
    run_dir, trajectory, writer = recorded_run
    frame = read_trajectory(run_dir)
    assert len(frame) == writer.count == len(trajectory.records)
    npt.assert_allclose(frame["t"], trajectory.times)
    npt.assert_allclose(frame["z_re"] + 1j * frame["z_im"], trajectory.z_values, rtol=1e-12)
    assert frame["has_field"].sum() == len(trajectory.states) == 3


def test_field_blocks_read_back_exactly(recorded_run):
    run_dir, trajectory, _ = recorded_run
    frame = read_trajectory(run_dir)
    offsets = frame.loc[frame["has_field"], "field_offset"].astype(int).tolist()
    assert offsets[0] == 0
    for offset, state in zip(offsets, trajectory.states):
        npt.assert_array_equal(read_field_block(run_dir / "fields.bin", offset), state.xi.values)


def test_truncated_field_block(tmp_path):
    path = tmp_path / "fields.bin"
    with open(path, "wb") as handle:
        write_field_block(handle, np.arange(4) + 1j)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_field_block(path)
    with pytest.raises(ValueError, match="no field block"):
        read_field_block(path, offset=10_000)


def test_kv_record(tmp_path):
    path = write_kv_record(tmp_path / "fgr.rec", {"gamma": 0.1, "fgr_holds": True, "iterations": np.int64(3), "mode": "x"})
    assert path.read_text() == "gamma=0.1\nfgr_holds=true\niterations=3\nmode=x\n"
    assert read_kv_record(path) == {"gamma": "0.1", "fgr_holds": "true", "iterations": "3", "mode": "x"}


def test_summary(tmp_path):
    checks = [
        CheckResult("mass_drift", np.float64(1e-9), 1e-6, True),
        CheckResult("evolution_error", 0.5, math.inf, True),
        CheckResult("energy_drift", 2e-3, 1e-4, False),
    ]
    path = write_summary(tmp_path, "simulate", checks)
    lines = path.read_text().splitlines()
    assert lines[0] == "kind=simulate"
    assert lines[1] == "check=mass_drift statistic=1e-09 tolerance=1e-06 passed=true"
    assert lines[-1] == "status=fail"

    summary = read_summary(tmp_path)
    assert summary["kind"] == "simulate"
    assert summary["status"] == "fail"
    assert summary["checks"] == checks


def test_empty_summary_passes(tmp_path):
    write_summary(tmp_path, "fgr", [])
    assert read_summary(tmp_path / "summary.rec")["status"] == "pass"


def test_write_table(tmp_path):
    frame = pd.DataFrame({"t": [0.0, 0.5], "value": [1.0, 2.0]})
    path = write_table(tmp_path / "tables" / "series.csv", frame)
    pd.testing.assert_frame_equal(pd.read_csv(path), frame)


def test_export_parquet(recorded_run, tmp_path):
    run_dir, trajectory, _ = recorded_run
    path = export_trajectory_parquet(run_dir, tmp_path / "out" / "scalars.parquet")
    frame = pd.read_parquet(path)
    assert len(frame) == len(trajectory.records)
    npt.assert_allclose(frame["g_xi_abs"], np.abs(trajectory.g_xi_values))


def test_export_parquet_default_location(recorded_run):
    run_dir, _, _ = recorded_run
    assert export_trajectory_parquet(run_dir) == run_dir / "trajectory.parquet"
