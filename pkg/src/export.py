"""Export run data to Parquet and CSV for analysis."""
from pathlib import Path
from typing import Optional

import pandas as pd

from .config import DB_PATH
from .database import get_connection, init_database
from .records import read_trajectory


def export_trajectory_parquet(run_dir: Path, output_path: Optional[Path] = None) -> Path:
    """Export the checkpoint scalars of a run directory to Parquet.

    Args:
        run_dir: Run directory holding trajectory.ndrec
        output_path: Output file path. Defaults to <run_dir>/trajectory.parquet

    Returns:
        Path to the created Parquet file.
    """
    run_dir = Path(run_dir)
    if output_path is None:
        output_path = run_dir / "trajectory.parquet"

    df = read_trajectory(run_dir)

    # Complex scalars are stored split; keep the modulus of (G|xi) next to |z|
    if {"g_xi_re", "g_xi_im"} <= set(df.columns):
        df["g_xi_abs"] = (df["g_xi_re"] ** 2 + df["g_xi_im"] ** 2) ** 0.5

    output_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_parquet(output_path, index=False, engine="pyarrow")

    print(f"Exported {len(df)} checkpoints to {output_path}")
    return output_path


def export_checks_csv(output_path: Path, db_path: Path = DB_PATH) -> Path:
    """Export every registered check, joined with its run, to CSV."""
    conn = get_connection(db_path)
    init_database(conn)
    df = pd.read_sql_query(
        """
        SELECT run_id, kind, out_dir, status, started_at, check_name, statistic, tolerance, passed
        FROM run_checks
        ORDER BY run_id, check_name
        """,
        conn,
    )
    conn.close()

    df["started_at"] = pd.to_datetime(df["started_at"])
    df["passed"] = df["passed"].astype(bool)

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(output_path, index=False)

    print(f"Exported {len(df)} checks to {output_path}")
    return output_path
