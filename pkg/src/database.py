"""Database connection and operations for the run registry."""
import sqlite3
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Generator, List, Optional

from .config import DB_PATH
from .models import CheckResult


def get_connection(db_path: Path = DB_PATH) -> sqlite3.Connection:
    """Create a database connection with row factory enabled."""
    db_path = Path(db_path)
    if str(db_path) != ":memory:":
        db_path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys = ON")
    return conn


@contextmanager
def transaction(conn: sqlite3.Connection) -> Generator[sqlite3.Connection, None, None]:
    """Context manager for database transactions."""
    try:
        yield conn
        conn.commit()
    except Exception:
        conn.rollback()
        raise


def init_database(conn: sqlite3.Connection) -> None:
    """Initialize the database schema."""
    conn.executescript("""
        -- One row per experiment run
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY,
            kind TEXT NOT NULL,
            out_dir TEXT NOT NULL,
            config_hash TEXT NOT NULL,
            status TEXT DEFAULT 'running',
            started_at DATETIME DEFAULT CURRENT_TIMESTAMP,
            finished_at DATETIME
        );

        -- Acceptance checks reported by a run
        CREATE TABLE IF NOT EXISTS checks (
            id INTEGER PRIMARY KEY,
            run_id INTEGER REFERENCES runs(id) ON DELETE CASCADE,
            name TEXT NOT NULL,
            statistic REAL,
            tolerance REAL,
            passed INTEGER NOT NULL,
            UNIQUE(run_id, name)
        );

        -- Indexes
        CREATE INDEX IF NOT EXISTS idx_runs_kind ON runs(kind);
        CREATE INDEX IF NOT EXISTS idx_checks_run ON checks(run_id);

        -- View: checks with the kind of the run that produced them
        CREATE VIEW IF NOT EXISTS run_checks AS
        SELECT
            r.id as run_id,
            r.kind,
            r.out_dir,
            r.status,
            r.started_at,
            c.name as check_name,
            c.statistic,
            c.tolerance,
            c.passed
        FROM checks c
        JOIN runs r ON c.run_id = r.id;
    """)
    conn.commit()


# Run operations
def insert_run(conn: sqlite3.Connection, kind: str, out_dir: Path, config_hash: str) -> int:
    """Register a run that is about to start, returning its ID."""
    cursor = conn.execute(
        "INSERT INTO runs (kind, out_dir, config_hash, started_at) VALUES (?, ?, ?, ?)",
        (kind, str(out_dir), config_hash, datetime.now().isoformat())
    )
    conn.commit()
    return cursor.lastrowid


def finish_run(conn: sqlite3.Connection, run_id: int, status: str) -> None:
    """Mark a run as finished with status 'pass', 'fail' or 'error'."""
    conn.execute(
        "UPDATE runs SET status = ?, finished_at = ? WHERE id = ?",
        (status, datetime.now().isoformat(), run_id)
    )
    conn.commit()


def get_runs(conn: sqlite3.Connection, kind: Optional[str] = None, limit: int = 50) -> List[dict]:
    """Most recent runs, optionally of one kind."""
    if kind:
        cursor = conn.execute(
            "SELECT * FROM runs WHERE kind = ? ORDER BY id DESC LIMIT ?",
            (kind, limit)
        )
    else:
        cursor = conn.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
    return [dict(row) for row in cursor.fetchall()]


def get_run(conn: sqlite3.Connection, run_id: int) -> Optional[dict]:
    cursor = conn.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
    row = cursor.fetchone()
    return dict(row) if row else None


# Check operations
def insert_check(conn: sqlite3.Connection, run_id: int, check: CheckResult) -> int:
    """Store one acceptance check of a run; the caller commits."""
    cursor = conn.execute(
        """
        INSERT OR REPLACE INTO checks (run_id, name, statistic, tolerance, passed)
        VALUES (?, ?, ?, ?, ?)
        """,
        (run_id, check.name, check.statistic, check.tolerance, int(check.passed))
    )
    return cursor.lastrowid


def get_checks_for_run(conn: sqlite3.Connection, run_id: int) -> List[CheckResult]:
    cursor = conn.execute("SELECT * FROM checks WHERE run_id = ? ORDER BY id", (run_id,))
    return [
        CheckResult(
            name=row["name"],
            statistic=row["statistic"] if row["statistic"] is not None else float("nan"),
            tolerance=row["tolerance"] if row["tolerance"] is not None else float("nan"),
            passed=bool(row["passed"])
        )
        for row in cursor.fetchall()
    ]


# Analysis queries
def get_check_stats(conn: sqlite3.Connection) -> List[dict]:
    """Pass rate and worst statistic per (kind, check)."""
    cursor = conn.execute(
        """
        SELECT kind, check_name, COUNT(*) as runs, SUM(passed) as passed,
               MAX(statistic) as worst_statistic
        FROM run_checks
        GROUP BY kind, check_name
        ORDER BY kind, check_name
        """
    )
    return [dict(row) for row in cursor.fetchall()]
