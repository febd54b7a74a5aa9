import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import duckdb

from twinbeam import __version__
from twinbeam.sweeps import SweepRecord


DEFAULT_STORE_PATH = Path.home() / ".twinbeam" / "sweeps.duckdb"

SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS sweep_points (
    config_hash VARCHAR NOT NULL,
    parameter VARCHAR NOT NULL,
    value DOUBLE NOT NULL,
    metrics JSON,
    units JSON,
    error VARCHAR,
    config JSON NOT NULL,
    code_version VARCHAR NOT NULL,
    stored_at TIMESTAMP NOT NULL,
    PRIMARY KEY (config_hash, parameter, value)
);

CREATE INDEX IF NOT EXISTS idx_sweep_points_parameter ON sweep_points(parameter)
"""

COLUMNS = [
    "config_hash", "parameter", "value", "metrics", "units", "error",
    "config", "code_version", "stored_at",
]


class SweepStore:

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else DEFAULT_STORE_PATH
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = duckdb.connect(str(self.path))
        self._init_schema()

    def _init_schema(self):
        for statement in SCHEMA_SQL.strip().split(";"):
            statement = statement.strip()
            if statement:
                self._conn.execute(statement)

    def close(self):
        self._conn.close()

    def __enter__(self) -> "SweepStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def put_record(self, parameter: str, record: SweepRecord, config: dict) -> None:
        # failed points are not stored so a later run retries them
        if record.error is not None:
            return
        self._conn.execute(
            """
            INSERT OR REPLACE INTO sweep_points
            (config_hash, parameter, value, metrics, units, error, config, code_version, stored_at)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            """,
            [
                record.config_hash,
                parameter,
                record.parameter_value,
                json.dumps(record.metrics, sort_keys=True),
                json.dumps(record.units, sort_keys=True),
                record.error,
                json.dumps(config, sort_keys=True),
                __version__,
                datetime.now(timezone.utc),
            ],
        )

    def _fetch(self, config_hash: str, parameter: str, value: float) -> Optional[dict]:
        row = self._conn.execute(
            f"""
            SELECT {', '.join(COLUMNS)} FROM sweep_points
            WHERE config_hash = ? AND parameter = ? AND value = ?
            """,
            [config_hash, parameter, value],
        ).fetchone()
        return dict(zip(COLUMNS, row)) if row else None

    def get_record(self, config_hash: str, parameter: str, value: float) -> Optional[SweepRecord]:
        row = self._fetch(config_hash, parameter, value)
        if row is None or row["code_version"] != __version__:
            return None
        return SweepRecord(
            parameter_value=row["value"],
            metrics=json.loads(row["metrics"]),
            units=json.loads(row["units"]),
            error=row["error"],
            config_hash=row["config_hash"],
        )

    def get_config(self, config_hash: str, parameter: str, value: float) -> Optional[dict]:
        row = self._fetch(config_hash, parameter, value)
        return json.loads(row["config"]) if row else None

    def get_record_count(self, parameter: Optional[str] = None) -> int:
        if parameter:
            result = self._conn.execute(
                "SELECT COUNT(*) FROM sweep_points WHERE parameter = ?",
                [parameter],
            ).fetchone()
        else:
            result = self._conn.execute("SELECT COUNT(*) FROM sweep_points").fetchone()
        return result[0] if result else 0

    def get_store_size_bytes(self) -> int:
        if self.path.exists():
            return self.path.stat().st_size
        return 0

    def query_records(self, parameter: Optional[str] = None) -> list[dict]:
        conditions = []
        params = []
        if parameter:
            conditions.append("parameter = ?")
            params.append(parameter)
        where = f"WHERE {' AND '.join(conditions)}" if conditions else ""

        result = self._conn.execute(
            f"""
            SELECT {', '.join(COLUMNS)} FROM sweep_points
            {where}
            ORDER BY parameter, value
            """,
            params,
        ).fetchall()
        return [dict(zip(COLUMNS, row)) for row in result]
