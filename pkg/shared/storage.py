"""JSON-file backed storage for simulation runs and the sweep job queue."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional

from shared.config import Settings


class RunStore:
    def __init__(self, data_dir: Path) -> None:
        self.data_dir = Path(data_dir)
        self.runs_file = self.data_dir / "runs.json"
        self.jobs_file = self.data_dir / "jobs.json"
        self._lock = threading.Lock()

    def _ensure_files(self) -> None:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        if not self.runs_file.exists():
            self.runs_file.write_text(json.dumps({}, indent=2))
        if not self.jobs_file.exists():
            self.jobs_file.write_text(json.dumps([], indent=2))

    def load_runs(self) -> Dict[str, Dict[str, Any]]:
        self._ensure_files()
        return json.loads(self.runs_file.read_text())

    def _save_runs(self, runs: Dict[str, Dict[str, Any]]) -> None:
        self.runs_file.write_text(json.dumps(runs, indent=2))

    def create_run(self, run_id: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        with self._lock:
            runs = self.load_runs()
            runs[run_id] = payload
            self._save_runs(runs)
            return payload

    def update_run(self, run_id: str, **updates: Any) -> Dict[str, Any]:
        with self._lock:
            runs = self.load_runs()
            run = runs.get(run_id, {})
            run.update(updates)
            runs[run_id] = run
            self._save_runs(runs)
            return run

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        return self.load_runs().get(run_id)

    def enqueue_job(self, job: Dict[str, Any]) -> None:
        with self._lock:
            self._ensure_files()
            jobs = json.loads(self.jobs_file.read_text())
            jobs.append(job)
            self.jobs_file.write_text(json.dumps(jobs, indent=2))

    def pop_job(self) -> Optional[Dict[str, Any]]:
        with self._lock:
            self._ensure_files()
            jobs: List[Dict[str, Any]] = json.loads(self.jobs_file.read_text())
            if not jobs:
                return None
            job = jobs.pop(0)
            self.jobs_file.write_text(json.dumps(jobs, indent=2))
            return job


def default_store() -> RunStore:
    return RunStore(Settings.from_env().data_dir)
