"""FastAPI entrypoint for the location service simulator."""

from __future__ import annotations

import os
import sys
import uuid
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared import analytic
from shared.config import InvalidConfig, build_config
from shared.experiment import AXES, RunMetrics, run
from shared.logs import get_logger
from shared.storage import RunStore, default_store

logger = get_logger("api_gateway")

app = FastAPI(title="Hierarchical Location Service Simulator")
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

_store: Optional[RunStore] = None


def get_store() -> RunStore:
    global _store
    if _store is None:
        _store = default_store()
    return _store


class RunRequest(BaseModel):
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = Field(None, ge=0)


class RunResponse(BaseModel):
    run_id: str
    kind: str
    status: str
    config: Dict[str, Any]
    created_at: str
    metrics: Optional[RunMetrics] = None
    rows: Optional[List[Dict[str, Any]]] = None
    csv_path: Optional[str] = None
    error: Optional[str] = None


class SweepRequest(BaseModel):
    config: Dict[str, Any] = Field(default_factory=dict)
    axis: Literal["speed", "density"]
    protocols: List[Literal["hls", "phls1", "phls2"]] = Field(default_factory=lambda: ["hls", "phls1", "phls2"])
    values: Optional[List[float]] = None


class AnalyticRequest(BaseModel):
    n: List[int] = Field(..., min_length=1)
    v: List[float] = Field(..., min_length=1)
    density: float = Field(3e-4, gt=0)
    R: float = 125.0
    z: float = Field(analytic.DEFAULT_HOP_PROGRESS, gt=0)
    base: Literal[2, 4] = 4
    normalized: bool = False


class AnalyticResponse(BaseModel):
    rows: List[Dict[str, Any]]


def _config_or_422(values: Dict[str, Any]):
    try:
        return build_config(values)
    except InvalidConfig as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/runs", response_model=RunResponse)
async def create_run(request: RunRequest, store: RunStore = Depends(get_store)) -> RunResponse:
    """Run one scenario synchronously and persist its metrics."""
    config = _config_or_422(request.config)
    run_id = str(uuid.uuid4())
    metrics = run(config, request.seed)
    payload = {
        "run_id": run_id,
        "kind": "run",
        "status": "completed",
        "config": config.model_dump(mode="json"),
        "created_at": datetime.now().isoformat(),
        "metrics": metrics.model_dump(mode="json"),
    }
    store.create_run(run_id, payload)
    logger.info("run_id=%s protocol=%s success=%.3f", run_id, config.protocol.value, metrics.query_success_rate)
    return RunResponse(**payload)


@app.get("/runs/{run_id}", response_model=RunResponse)
async def get_run_status(run_id: str, store: RunStore = Depends(get_store)) -> RunResponse:
    record = store.get_run(run_id)
    if not record:
        raise HTTPException(status_code=404, detail="Run not found.")
    return RunResponse(**record)


@app.post("/sweeps", response_model=RunResponse)
async def create_sweep(request: SweepRequest, store: RunStore = Depends(get_store)) -> RunResponse:
    """Queue a sweep for the orchestrator worker."""
    config = _config_or_422(request.config)
    if request.axis not in AXES:
        raise HTTPException(status_code=422, detail=f"unknown axis {request.axis}")
    run_id = str(uuid.uuid4())
    payload = {
        "run_id": run_id,
        "kind": "sweep",
        "status": "queued",
        "config": config.model_dump(mode="json"),
        "created_at": datetime.now().isoformat(),
    }
    store.create_run(run_id, payload)
    store.enqueue_job({
        "run_id": run_id,
        "config": payload["config"],
        "axis": request.axis,
        "protocols": request.protocols,
        "values": request.values,
    })
    logger.info("run_id=%s queued sweep axis=%s protocols=%s", run_id, request.axis, ",".join(request.protocols))
    return RunResponse(**payload)


@app.post("/analytic", response_model=AnalyticResponse)
async def evaluate_analytic(request: AnalyticRequest) -> AnalyticResponse:
    try:
        rows = analytic.report_rows(
            request.n,
            request.v,
            density=request.density,
            R=request.R,
            z=request.z,
            level_scale_exponent=request.base,
            normalize_hit_probs=request.normalized,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return AnalyticResponse(rows=rows)


if __name__ == "__main__":
    import uvicorn

    from shared.config import Settings

    settings = Settings.from_env()
    uvicorn.run(app, host=settings.api_host, port=settings.api_port)
