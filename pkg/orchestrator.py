"""
Experiment orchestrator - runs commands and grid jobs as registered runs.
Ablation cells are independent jobs and may run in a process pool.
"""

import asyncio
import inspect
import logging
import uuid
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence

import torch

from database import RunRegistry
from datasets import AudioDataset
from evaluation import train_and_evaluate
from models import (
    AblationRow,
    AblationSpec,
    LossConfig,
    OptimizerConfig,
    PipelineConfig,
    RunRecord,
    RunStatus
)

logger = logging.getLogger(__name__)


def configure_threads(threads: int) -> None:
    """Intra-op threads; a single thread also forces deterministic kernels"""
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(threads == 1)


class ExperimentOrchestrator:
    """
    Coordinates command runs and ablation grids.
    Every unit of work is recorded in the run registry.
    """

    def __init__(self, registry: RunRegistry, max_workers: int = 1, threads: int = 1):
        """
        Args:
            registry: Run registry for job state
            max_workers: Processes for grid cells; 1 runs them in order in-process
            threads: Intra-op threads applied in every worker process
        """
        if max_workers < 1:
            raise ValueError(f"max_workers must be >= 1, got {max_workers}")
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}")
        self.registry = registry
        self.max_workers = max_workers
        self.threads = threads
        logger.info(f"ExperimentOrchestrator initialized with {max_workers} worker(s)")

    async def run(
        self,
        command: str,
        config: Dict[str, Any],
        job: Callable[[], Dict[str, Any]]
    ) -> Dict[str, Any]:
        """
        Execute one command as a registered run.

        Args:
            command: Command name recorded in the registry
            config: Configuration recorded with the run
            job: Zero-argument callable (or coroutine function) returning the JSON result

        Returns:
            The job's result
        """
        run_id = self._generate_run_id()
        try:
            logger.info(f"[{run_id}] {command} starting")
            await self._create_run(run_id, command, config)
            await self.registry.update_run_status(run_id, RunStatus.IN_PROGRESS)

            result = job()
            if inspect.isawaitable(result):
                result = await result

            await self.registry.update_run_status(run_id, RunStatus.COMPLETED, result=result)
            logger.info(f"[{run_id}] {command} complete")
            return result

        except Exception as e:
            logger.error(f"[{run_id}] {command} failed: {e}", exc_info=True)
            await self.registry.update_run_status(run_id, RunStatus.FAILED, error_message=str(e))
            raise

    async def run_ablation(
        self,
        specs: Sequence[AblationSpec],
        seeds: Sequence[int],
        base: PipelineConfig,
        loss: LossConfig,
        optimizer: OptimizerConfig,
        train_set: AudioDataset,
        test_set: AudioDataset,
        batch_size: int = 32
    ) -> List[AblationRow]:
        """
        Run every (spec, seed) cell as its own registered job.

        Returns:
            Rows in spec-major, seed-minor order
        """
        if not specs:
            raise ValueError("ablation grid needs at least one spec")
        cells = [(spec, seed) for spec in specs for seed in seeds]
        logger.info(f"Ablation grid: {len(specs)} specs x {len(seeds)} seeds")

        if self.max_workers == 1:
            rows = []
            for spec, seed in cells:
                rows.append(await self._run_cell(
                    None, spec, seed, base, loss, optimizer, train_set, test_set, batch_size
                ))
            return rows

        # spawned workers start with torch defaults
        with ProcessPoolExecutor(
            max_workers=self.max_workers,
            initializer=configure_threads,
            initargs=(self.threads,)
        ) as pool:
            return list(await asyncio.gather(*[
                self._run_cell(pool, spec, seed, base, loss, optimizer, train_set, test_set, batch_size)
                for spec, seed in cells
            ]))

    async def _run_cell(
        self,
        pool: Optional[ProcessPoolExecutor],
        spec: AblationSpec,
        seed: int,
        base: PipelineConfig,
        loss: LossConfig,
        optimizer: OptimizerConfig,
        train_set: AudioDataset,
        test_set: AudioDataset,
        batch_size: int
    ) -> AblationRow:
        run_id = self._generate_run_id()
        config = {"spec": spec.model_dump(mode="json"), "seed": seed}
        try:
            await self._create_run(run_id, "ablate-cell", config)
            await self.registry.update_run_status(run_id, RunStatus.IN_PROGRESS)
            logger.info(f"[{run_id}] cell {spec.label} seed {seed}")

            args = (spec, seed, base, loss, optimizer, train_set, test_set, batch_size)
            if pool is None:
                row = train_and_evaluate(*args)
            else:
                row = await asyncio.get_running_loop().run_in_executor(pool, train_and_evaluate, *args)

            await self.registry.update_run_status(run_id, RunStatus.COMPLETED, result=row.csv_row())
            return row

        except Exception as e:
            logger.error(f"[{run_id}] cell {spec.label} seed {seed} failed: {e}", exc_info=True)
            await self.registry.update_run_status(run_id, RunStatus.FAILED, error_message=str(e))
            raise

    def _generate_run_id(self) -> str:
        return f"run_{uuid.uuid4().hex[:12]}"

    async def _create_run(self, run_id: str, command: str, config: Dict[str, Any]) -> bool:
        now = datetime.now(timezone.utc)
        record = RunRecord(
            run_id=run_id,
            command=command,
            status=RunStatus.PENDING,
            config=config,
            created_at=now,
            updated_at=now
        )
        return await self.registry.create_run(record)

    async def get_run_status(self, run_id: str) -> Dict[str, Any]:
        """
        Status of one run.

        Returns:
            Run summary, or status "not_found"
        """
        try:
            record = await self.registry.get_run(run_id)

            if record:
                return {
                    "run_id": record.run_id,
                    "command": record.command,
                    "status": record.status.value,
                    "created_at": record.created_at.isoformat(),
                    "updated_at": record.updated_at.isoformat(),
                    "result": record.result,
                    "error": record.error_message
                }
            return {
                "run_id": run_id,
                "status": "not_found",
                "error": "Run not found in registry"
            }

        except Exception as e:
            logger.error(f"Error getting run status for {run_id}: {e}")
            return {"run_id": run_id, "status": "error", "error": str(e)}

    async def get_recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        """
        Recent run summaries.

        Args:
            limit: Maximum number of runs to return

        Returns:
            List of run summaries
        """
        try:
            records = await self.registry.get_recent_runs(limit)
            return [
                {
                    "run_id": record.run_id,
                    "command": record.command,
                    "status": record.status.value,
                    "created_at": record.created_at.isoformat(),
                    "error": record.error_message
                }
                for record in records
            ]

        except Exception as e:
            logger.error(f"Error getting recent runs: {e}")
            return []
