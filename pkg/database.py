"""
Run registry for the spikefront command line.
One SQLite row per command invocation or grid cell, accessed through aiosqlite.
The registry is bookkeeping: no command output depends on it.
"""

import json
import logging
import os
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from typing import Any, AsyncIterator, Dict, List, Optional

import aiosqlite

from models import RunRecord, RunStatus
from settings import get_settings

logger = logging.getLogger(__name__)

_SCHEMA = (
    """
    CREATE TABLE IF NOT EXISTS runs (
        run_id TEXT PRIMARY KEY,
        command TEXT NOT NULL,
        status TEXT NOT NULL,
        config TEXT NOT NULL,
        result TEXT,
        error_message TEXT,
        created_at TIMESTAMP NOT NULL,
        updated_at TIMESTAMP NOT NULL
    )
    """,
    "CREATE INDEX IF NOT EXISTS idx_runs_command ON runs(command)",
    "CREATE INDEX IF NOT EXISTS idx_runs_status ON runs(status)",
    "CREATE INDEX IF NOT EXISTS idx_runs_created ON runs(created_at DESC)",
)

_COLUMNS = "run_id, command, status, config, result, error_message, created_at, updated_at"


def _dump(payload: Optional[Dict[str, Any]]) -> Optional[str]:
    return None if payload is None else json.dumps(payload, sort_keys=True)


class RunRegistry:
    """
    SQLite store of RunRecords.

    Reads and writes log failures and return None, [], {} or False; only
    initialize() raises.
    """

    def __init__(self, db_path: str = "./spikefront_runs.db"):
        self.db_path = str(db_path)
        logger.info(f"RunRegistry initialized at {self.db_path}")

    @asynccontextmanager
    async def _connect(self) -> AsyncIterator[aiosqlite.Connection]:
        async with aiosqlite.connect(self.db_path) as db:
            db.row_factory = aiosqlite.Row
            yield db

    async def initialize(self):
        """Create the runs table and its indexes"""
        try:
            async with self._connect() as db:
                for statement in _SCHEMA:
                    await db.execute(statement)
                await db.commit()
            logger.info("Run registry tables initialized")
        except Exception as e:
            logger.error(f"Error initializing run registry at {self.db_path}: {e}", exc_info=True)
            raise

    async def create_run(self, record: RunRecord) -> bool:
        """
        Insert a new run.

        Returns:
            False when the id already exists or the write fails
        """
        row = (
            record.run_id,
            record.command,
            record.status.value,
            _dump(record.config),
            _dump(record.result),
            record.error_message,
            record.created_at.isoformat(),
            record.updated_at.isoformat(),
        )
        try:
            async with self._connect() as db:
                await db.execute(f"INSERT INTO runs ({_COLUMNS}) VALUES (?, ?, ?, ?, ?, ?, ?, ?)", row)
                await db.commit()
        except aiosqlite.IntegrityError:
            logger.warning(f"Run {record.run_id} already registered")
            return False
        except Exception as e:
            logger.error(f"Error registering run {record.run_id}: {e}")
            return False
        logger.info(f"[{record.run_id}] registered ({record.command})")
        return True

    async def get_run(self, run_id: str) -> Optional[RunRecord]:
        try:
            async with self._connect() as db:
                async with db.execute(f"SELECT {_COLUMNS} FROM runs WHERE run_id = ?", (run_id,)) as cursor:
                    row = await cursor.fetchone()
        except Exception as e:
            logger.error(f"Error reading run {run_id}: {e}")
            return None
        return self._to_record(row) if row else None

    async def update_run_status(
        self,
        run_id: str,
        status: RunStatus,
        result: Optional[Dict[str, Any]] = None,
        error_message: Optional[str] = None
    ) -> bool:
        """
        Move a run to a new status, replacing its result and error message.

        Args:
            run_id: Run identifier
            status: New status
            result: JSON-serializable command result
            error_message: Failure message

        Returns:
            True when the row was written
        """
        stamp = datetime.now(timezone.utc).isoformat()
        try:
            async with self._connect() as db:
                await db.execute(
                    "UPDATE runs SET status = ?, result = ?, error_message = ?, updated_at = ? WHERE run_id = ?",
                    (status.value, _dump(result), error_message, stamp, run_id)
                )
                await db.commit()
        except Exception as e:
            logger.error(f"Error updating run {run_id}: {e}")
            return False
        logger.info(f"[{run_id}] -> {status.value}")
        return True

    async def get_recent_runs(self, limit: int = 10, command: Optional[str] = None) -> List[RunRecord]:
        """Newest first, optionally restricted to one command"""
        where, params = ("WHERE command = ?", (command, limit)) if command else ("", (limit,))
        query = f"SELECT {_COLUMNS} FROM runs {where} ORDER BY created_at DESC LIMIT ?"
        try:
            async with self._connect() as db:
                async with db.execute(query, params) as cursor:
                    rows = await cursor.fetchall()
        except Exception as e:
            logger.error(f"Error listing runs: {e}")
            return []
        return [self._to_record(row) for row in rows]

    async def delete_run(self, run_id: str) -> bool:
        try:
            async with self._connect() as db:
                await db.execute("DELETE FROM runs WHERE run_id = ?", (run_id,))
                await db.commit()
        except Exception as e:
            logger.error(f"Error deleting run {run_id}: {e}")
            return False
        logger.info(f"[{run_id}] deleted")
        return True

    async def check_connection(self) -> bool:
        try:
            async with self._connect() as db:
                await db.execute("SELECT 1")
            return True
        except Exception as e:
            logger.error(f"Run registry at {self.db_path} unreachable: {e}")
            return False

    async def get_statistics(self) -> Dict[str, Any]:
        """
        Totals by status and by command.

        Returns:
            {"total_runs", "by_status", "by_command", "database_size"}, or {}
            when the registry cannot be read
        """
        try:
            async with self._connect() as db:
                by_status = await self._count_by(db, "status")
                by_command = await self._count_by(db, "command")
        except Exception as e:
            logger.error(f"Error computing registry statistics: {e}")
            return {}
        return {
            "total_runs": sum(by_status.values()),
            "by_status": by_status,
            "by_command": by_command,
            "database_size": os.path.getsize(self.db_path) if os.path.exists(self.db_path) else 0,
        }

    @staticmethod
    async def _count_by(db: aiosqlite.Connection, column: str) -> Dict[str, int]:
        async with db.execute(f"SELECT {column}, COUNT(*) FROM runs GROUP BY {column}") as cursor:
            return {row[0]: row[1] async for row in cursor}

    @staticmethod
    def _to_record(row: aiosqlite.Row) -> RunRecord:
        return RunRecord(
            run_id=row["run_id"],
            command=row["command"],
            status=RunStatus(row["status"]),
            config=json.loads(row["config"]),
            result=json.loads(row["result"]) if row["result"] else None,
            error_message=row["error_message"],
            created_at=datetime.fromisoformat(row["created_at"]),
            updated_at=datetime.fromisoformat(row["updated_at"])
        )


registry_instance: Optional[RunRegistry] = None


def get_registry() -> RunRegistry:
    """Process-wide registry at SPIKEFRONT_DATABASE_PATH; rebuilt when the setting changes"""
    global registry_instance
    db_path = str(get_settings().database_path)
    if registry_instance is None or registry_instance.db_path != db_path:
        registry_instance = RunRegistry(db_path)
    return registry_instance
