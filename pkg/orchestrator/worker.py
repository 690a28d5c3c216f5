"""Sweep job worker: pops queued sweeps, runs them and records the CSV."""

from __future__ import annotations

import os
import sys
import time
from typing import Any, Dict, Optional

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared.config import InvalidConfig, Settings, build_config
from shared.experiment import emit_csv, sweep
from shared.logs import get_logger
from shared.storage import RunStore

logger = get_logger("orchestrator")


class OrchestratorWorker:
    def __init__(self, store: RunStore, settings: Optional[Settings] = None) -> None:
        self.store = store
        self.settings = settings or Settings.from_env()

    def run(self, job: Dict[str, Any]) -> Dict[str, Any]:
        """Execute one queued sweep job and update its run record."""
        run_id = job["run_id"]
        self.store.update_run(run_id, status="in_progress")
        try:
            config = build_config(job["config"])
            table = sweep(
                config,
                job["axis"],
                job["protocols"],
                values=job.get("values"),
                workers=self.settings.sweep_workers,
            )
            path = emit_csv(table, self.settings.results_dir / f"{run_id}.csv")
        except (InvalidConfig, ValueError, OSError) as exc:
            logger.error("run_id=%s failed: %s", run_id, exc)
            return self.store.update_run(run_id, status="failed", error=str(exc))

        logger.info("run_id=%s completed rows=%s csv=%s", run_id, len(table), path)
        return self.store.update_run(
            run_id,
            status="completed",
            rows=[row.model_dump(mode="json") for row in table],
            csv_path=str(path),
        )


def poll_queue(store: RunStore) -> Dict[str, Any] | None:
    """Pull a job from the shared JSON queue; sleep when empty."""
    job = store.pop_job()
    if job:
        return job
    time.sleep(1)
    return None


def main() -> None:
    settings = Settings.from_env()
    worker = OrchestratorWorker(RunStore(settings.data_dir), settings)
    while True:
        job = poll_queue(worker.store)
        if not job:
            continue
        result = worker.run(job)
        logger.info("run_id=%s status=%s", result.get("run_id"), result.get("status"))


if __name__ == "__main__":
    main()
