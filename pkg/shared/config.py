"""Scenario configuration and environment settings."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from shared.grid import GridHierarchy
from shared.locsvc import DescentMode, Protocol, ServerMobilityPolicy

ENV_PATH = Path(__file__).resolve().parent.parent / "config" / ".env"
load_dotenv(ENV_PATH)


class InvalidConfig(ValueError):
    pass


class SuccessMode(str, Enum):
    RADIUS = "radius"
    ANY_REPLY = "any_reply"


@dataclass(frozen=True)
class Settings:
    data_dir: Path
    results_dir: Path
    api_host: str
    api_port: int
    sweep_workers: int

    @classmethod
    def from_env(cls) -> "Settings":
        return cls(
            data_dir=Path(os.getenv("DATA_DIR", "./data/state")),
            results_dir=Path(os.getenv("RESULTS_DIR", "./results")),
            api_host=os.getenv("API_HOST", "0.0.0.0"),
            api_port=int(os.getenv("API_PORT", "8000")),
            sweep_workers=max(1, int(os.getenv("SWEEP_WORKERS", "1"))),
        )


class ScenarioConfig(BaseModel):
    """One simulated scenario; defaults reproduce the published parameter table."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    area_side: float = Field(1000.0, gt=0)
    radio_range: float = Field(250.0, gt=0)
    node_count: int = Field(300, ge=2)
    v_max: float = Field(10.0, gt=0)
    pause_max: float = Field(10.0, ge=0)
    leg_time_max: float = Field(30.0, gt=0)
    duration: float = Field(300.0, gt=0)
    warmup: float = Field(10.0, ge=0)
    requests_per_run: int = Field(1200, ge=1)
    runs: int = Field(5, ge=1)
    protocol: Protocol = Protocol.PHLS1
    alpha: float = Field(0.5, ge=0, le=1)
    server_mobility: ServerMobilityPolicy = ServerMobilityPolicy.HANDOVER
    descent: DescentMode = DescentMode.FULL
    cell_side: float = Field(125.0, gt=0)
    rng_seed: int = Field(1, ge=0)
    success_radius: float = Field(250.0, gt=0)
    success_mode: SuccessMode = SuccessMode.RADIUS
    query_deadline: float = Field(5.0, gt=0)
    hop_latency: float = Field(0.005, gt=0)
    max_hops: int = Field(128, ge=1)

    @field_validator("protocol", "server_mobility", "descent", "success_mode", mode="before")
    @classmethod
    def _lowercase(cls, value: Any) -> Any:
        return value.strip().lower() if isinstance(value, str) else value

    @model_validator(mode="after")
    def _check_geometry(self) -> "ScenarioConfig":
        if self.cell_side * math.sqrt(2) > self.radio_range:
            raise ValueError(
                f"cell_side={self.cell_side} too large for radio_range={self.radio_range}: "
                "nodes in one cell must reach each other"
            )
        try:
            GridHierarchy.from_area(self.area_side, self.cell_side)
        except ValueError as exc:
            raise ValueError(str(exc)) from exc
        if self.warmup >= self.duration:
            raise ValueError(f"warmup={self.warmup} must be shorter than duration={self.duration}")
        return self

    @property
    def grid(self) -> GridHierarchy:
        return GridHierarchy.from_area(self.area_side, self.cell_side)

    def with_overrides(self, **changes: Any) -> "ScenarioConfig":
        return build_config({**self.model_dump(), **changes})


def build_config(values: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig(**values)
    except ValidationError as exc:
        raise InvalidConfig(str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a flat ``key=value`` scenario file; unknown keys and bare keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise InvalidConfig(f"config file not found: {path}")
    # a bare key parses to None and must still reach validation
    values = dict(dotenv_values(path))
    return build_config(values)
