"""Modified random-direction mobility with specular reflection and pauses."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from shared.grid import GridHierarchy, Point

Vector = Tuple[float, float]

# Mobility events land this far past a boundary so the node is strictly across it.
BOUNDARY_NUDGE = 1e-6


class Phase(str, Enum):
    MOVING = "moving"
    PAUSED = "paused"


@dataclass(frozen=True)
class MotionState:
    position: Point
    velocity: Vector
    phase: Phase
    phase_end: float
    time: float = 0.0
    avg_velocity: Vector = (0.0, 0.0)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class MobilityConfig:
    v_max: float
    area: GridHierarchy
    pause_max: float = 10.0
    leg_time_max: float = 30.0

    def __post_init__(self) -> None:
        if self.v_max <= 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.pause_max < 0:
            raise ValueError(f"pause_max must be >= 0, got {self.pause_max}")
        if self.leg_time_max <= 0:
            raise ValueError(f"leg_time_max must be positive, got {self.leg_time_max}")


def _unit_open(rng: np.random.Generator) -> float:
    """Uniform draw on (0, 1]."""
    return 1.0 - rng.random()


def _fold(coord: float, velocity: float, low: float, side: float) -> Tuple[float, float]:
    rel = coord - low
    bounces = math.floor(rel / side)
    if bounces % 2 == 0:
        return low + rel - bounces * side, velocity
    return low + (bounces + 1) * side - rel, -velocity


def reflect(position: Point, velocity: Vector, dt: float, area: GridHierarchy) -> Tuple[Point, Vector]:
    """Move for ``dt`` seconds, bouncing off the area walls."""
    side = area.side_length
    ox, oy = area.origin
    x, vx = _fold(position[0] + velocity[0] * dt, velocity[0], ox, side)
    y, vy = _fold(position[1] + velocity[1] * dt, velocity[1], oy, side)
    return (x, y), (vx, vy)


def fold_positions(start: np.ndarray, velocity: np.ndarray, dt: np.ndarray, area: GridHierarchy) -> np.ndarray:
    """Vectorised :func:`reflect` for (N, 2) arrays; only positions are returned."""
    side = area.side_length
    rel = start - np.asarray(area.origin) + velocity * dt[:, None]
    bounces = np.floor(rel / side)
    odd = (bounces % 2) == 1
    folded = np.where(odd, (bounces + 1) * side - rel, rel - bounces * side)
    return folded + np.asarray(area.origin)


def start_leg(state: MotionState, cfg: MobilityConfig, rng: np.random.Generator) -> MotionState:
    speed = cfg.v_max * _unit_open(rng)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    duration = cfg.leg_time_max * _unit_open(rng)
    return replace(
        state,
        velocity=(speed * math.cos(heading), speed * math.sin(heading)),
        phase=Phase.MOVING,
        phase_end=state.time + duration,
    )


def start_pause(state: MotionState, cfg: MobilityConfig, rng: np.random.Generator) -> MotionState:
    duration = cfg.pause_max * _unit_open(rng) if cfg.pause_max > 0 else 0.0
    return replace(state, velocity=(0.0, 0.0), phase=Phase.PAUSED, phase_end=state.time + duration)


def initial_state(position: Point, cfg: MobilityConfig, rng: np.random.Generator, time: float = 0.0) -> MotionState:
    seed_state = MotionState(position=position, velocity=(0.0, 0.0), phase=Phase.PAUSED, phase_end=time, time=time)
    return start_leg(seed_state, cfg, rng)


def advance(state: MotionState, to_time: float, cfg: MobilityConfig, rng: np.random.Generator) -> MotionState:
    """Integrate the node up to ``to_time``, drawing new phases as they expire."""
    if to_time < state.time:
        raise ValueError(f"cannot advance from t={state.time} back to t={to_time}")

    while True:
        segment_end = min(to_time, state.phase_end)
        if state.phase is Phase.MOVING and segment_end > state.time:
            position, velocity = reflect(state.position, state.velocity, segment_end - state.time, cfg.area)
            state = replace(state, position=position, velocity=velocity, time=segment_end)
        else:
            state = replace(state, time=segment_end)

        if state.phase_end > to_time:
            return state
        # phase expired at or before to_time
        if state.phase is Phase.MOVING:
            state = start_pause(state, cfg, rng)
        else:
            state = start_leg(state, cfg, rng)
        if state.phase_end > to_time:
            return state


def next_event_time(state: MotionState, area: GridHierarchy) -> float:
    """Earliest of phase end, leaving the current cell, or touching a wall."""
    if state.phase is Phase.PAUSED:
        return state.phase_end

    cell = area.cell_of(state.position)
    lows = (area.origin[0] + cell.x * area.cell_side, area.origin[1] + cell.y * area.cell_side)
    horizon = state.phase_end - state.time
    for coord, velocity, low in zip(state.position, state.velocity, lows):
        if velocity > 0:
            horizon = min(horizon, (low + area.cell_side - coord) / velocity + BOUNDARY_NUDGE)
        elif velocity < 0:
            horizon = min(horizon, (coord - low) / -velocity + BOUNDARY_NUDGE)
    return state.time + max(horizon, 0.0)


class Fleet:
    """Motion state of every node plus array mirrors for fast position snapshots."""

    def __init__(self, states: Sequence[MotionState], cfg: MobilityConfig, rngs: Sequence[np.random.Generator]):
        if len(states) != len(rngs):
            raise ValueError("one random stream per node is required")
        self.cfg = cfg
        self.states: List[MotionState] = list(states)
        self._rngs = list(rngs)
        self._start = np.array([s.position for s in self.states], dtype=float).reshape(-1, 2)
        self._velocity = np.array([s.velocity for s in self.states], dtype=float).reshape(-1, 2)
        self._since = np.array([s.time for s in self.states], dtype=float)
        self._cache_time: float | None = None
        self._cache: np.ndarray | None = None

    @classmethod
    def random(cls, count: int, cfg: MobilityConfig, placement_rng: np.random.Generator,
               node_rngs: Sequence[np.random.Generator]) -> "Fleet":
        side = cfg.area.side_length
        ox, oy = cfg.area.origin
        coords = placement_rng.uniform(0.0, side, size=(count, 2))
        states = [
            initial_state((ox + float(x), oy + float(y)), cfg, rng)
            for (x, y), rng in zip(coords, node_rngs)
        ]
        return cls(states, cfg, node_rngs)

    @classmethod
    def static(cls, positions: Sequence[Point], area: GridHierarchy) -> "Fleet":
        """Nodes that never move; used for scripted topologies."""
        cfg = MobilityConfig(v_max=1e-12, area=area, pause_max=0.0)
        states = [
            MotionState(position=p, velocity=(0.0, 0.0), phase=Phase.PAUSED, phase_end=math.inf)
            for p in positions
        ]
        return cls(states, cfg, [np.random.default_rng(0) for _ in positions])

    def __len__(self) -> int:
        return len(self.states)

    def advance_node(self, node: int, to_time: float) -> MotionState:
        state = advance(self.states[node], to_time, self.cfg, self._rngs[node])
        self.states[node] = state
        self._start[node] = state.position
        self._velocity[node] = state.velocity if state.phase is Phase.MOVING else (0.0, 0.0)
        self._since[node] = state.time
        self._cache_time = None
        return state

    def set_avg_velocity(self, node: int, avg_velocity: Vector) -> None:
        self.states[node] = replace(self.states[node], avg_velocity=avg_velocity)

    def next_event_time(self, node: int) -> float:
        return next_event_time(self.states[node], self.cfg.area)

    def positions_at(self, time: float) -> np.ndarray:
        """Positions of all nodes at ``time``; valid while no node has passed its phase end."""
        if self._cache_time != time:
            dt = np.maximum(time - self._since, 0.0)
            self._cache = fold_positions(self._start, self._velocity, dt, self.cfg.area)
            self._cache_time = time
        return self._cache

    def position_of(self, node: int, time: float) -> Point:
        x, y = self.positions_at(time)[node]
        return (float(x), float(y))
