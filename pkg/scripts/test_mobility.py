import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared.grid import GridHierarchy
from shared.mobility import (
    BOUNDARY_NUDGE,
    Fleet,
    MobilityConfig,
    MotionState,
    Phase,
    advance,
    next_event_time,
    reflect,
    start_leg,
)

GRID = GridHierarchy(cell_side=125.0, levels=3)
CFG = MobilityConfig(v_max=20.0, area=GRID)


def moving(position, velocity, phase_end=100.0, time=0.0):
    return MotionState(position=position, velocity=velocity, phase=Phase.MOVING, phase_end=phase_end, time=time)


def test_reflection_off_wall():
    state = advance(moving((995.0, 500.0), (10.0, 0.0)), 1.0, CFG, np.random.default_rng(0))
    assert state.position == pytest.approx((995.0, 500.0))
    assert state.velocity == pytest.approx((-10.0, 0.0))


def test_linear_motion():
    state = advance(moving((0.0, 0.0), (3.0, 4.0)), 2.0, CFG, np.random.default_rng(0))
    assert state.position == pytest.approx((6.0, 8.0))


def test_paused_node_stays_put():
    paused = MotionState(position=(10.0, 20.0), velocity=(0.0, 0.0), phase=Phase.PAUSED, phase_end=8.0)
    state = advance(paused, 5.0, CFG, np.random.default_rng(0))
    assert state.position == (10.0, 20.0)
    assert state.phase is Phase.PAUSED


def test_cannot_go_back_in_time():
    with pytest.raises(ValueError):
        advance(moving((1.0, 1.0), (1.0, 0.0), time=5.0), 4.0, CFG, np.random.default_rng(0))


def test_containment_and_speed_preserved():
    rng = np.random.default_rng(11)
    for _ in range(200):
        start = tuple(rng.uniform(0, 1000, 2))
        heading = rng.uniform(0, 2 * math.pi)
        velocity = (50 * math.cos(heading), 50 * math.sin(heading))
        position, reflected = reflect(start, velocity, float(rng.uniform(0, 200)), GRID)
        assert GRID.contains(position)
        assert math.hypot(*reflected) == pytest.approx(50.0)


def test_phase_transitions_keep_node_inside():
    rng = np.random.default_rng(2)
    state = start_leg(MotionState((500.0, 500.0), (0.0, 0.0), Phase.PAUSED, 0.0), CFG, rng)
    for t in np.linspace(1, 600, 300):
        state = advance(state, float(t), CFG, rng)
        assert GRID.contains(state.position)
        assert state.speed <= CFG.v_max + 1e-9
        if state.phase is Phase.PAUSED:
            assert state.velocity == (0.0, 0.0)


def test_mean_leg_speed_is_half_vmax():
    rng = np.random.default_rng(7)
    seed_state = MotionState((500.0, 500.0), (0.0, 0.0), Phase.PAUSED, 0.0)
    speeds = [start_leg(seed_state, CFG, rng).speed for _ in range(20000)]
    assert np.mean(speeds) == pytest.approx(CFG.v_max / 2, rel=0.05)
    assert min(speeds) > 0


def test_determinism():
    a = advance(moving((400.0, 400.0), (7.0, -3.0), phase_end=5.0), 90.0, CFG, np.random.default_rng(42))
    b = advance(moving((400.0, 400.0), (7.0, -3.0), phase_end=5.0), 90.0, CFG, np.random.default_rng(42))
    assert a == b


def test_next_event_time_is_cell_exit():
    state = moving((100.0, 50.0), (10.0, 0.0))
    assert next_event_time(state, GRID) == pytest.approx(2.5 + BOUNDARY_NUDGE)
    paused = MotionState((100.0, 50.0), (0.0, 0.0), Phase.PAUSED, phase_end=3.0)
    assert next_event_time(paused, GRID) == 3.0
    short = moving((60.0, 60.0), (1.0, 1.0), phase_end=4.0)
    assert next_event_time(short, GRID) == 4.0


def test_fleet_snapshot_matches_integration():
    node_rngs = [np.random.default_rng(i) for i in range(20)]
    fleet = Fleet.random(20, CFG, np.random.default_rng(99), node_rngs)
    horizon = min(fleet.next_event_time(n) for n in range(20))
    t = horizon * 0.9
    snapshot = fleet.positions_at(t)
    for node in range(20):
        state = fleet.states[node]
        expected, _ = reflect(state.position, state.velocity, t - state.time, GRID)
        assert tuple(snapshot[node]) == pytest.approx(expected)


def test_static_fleet_never_moves():
    fleet = Fleet.static([(10.0, 10.0), (200.0, 300.0)], GRID)
    assert fleet.position_of(1, 1e6) == (200.0, 300.0)
    assert math.isinf(fleet.next_event_time(0))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
