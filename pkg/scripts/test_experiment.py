import os
import sys
from pathlib import Path

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared.config import ScenarioConfig, load_config
from shared.experiment import (
    CSV_COLUMNS,
    EmptyTable,
    IoFailure,
    Scenario,
    SweepRow,
    aggregate,
    bandwidth,
    emit_csv,
    render_csv,
    run,
    success_rate,
    sweep,
)
from shared.locsvc import Protocol

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"

SMALL = ScenarioConfig(
    area_side=500.0,
    cell_side=125.0,
    node_count=40,
    v_max=10.0,
    duration=40.0,
    warmup=5.0,
    requests_per_run=30,
    runs=2,
    query_deadline=2.0,
    rng_seed=3,
)


def row(axis_value, protocol, success=0.5):
    return SweepRow(
        axis_name="speed",
        axis_value=axis_value,
        protocol=protocol,
        runs=5,
        success_rate_mean=success,
        success_rate_std=0.0123456789,
        location_error_mean_m=12.3456789,
        location_error_std_m=1.0,
        bandwidth_mean_Bps_per_node=1234567.0,
        bandwidth_std=0.0,
        query_hops_mean=3.0,
        drop_noprogress_count=2,
        drop_deadline_count=0,
    )


def test_metric_arithmetic():
    assert success_rate(900, 1200) == 0.75
    assert bandwidth(90_000, 300.0, 300) == 1.0
    assert success_rate(0, 0) == 0.0


def test_run_is_deterministic():
    first = run(SMALL, 11)
    second = run(SMALL, 11)
    assert first == second
    assert first.model_dump_json() == second.model_dump_json()
    assert run(SMALL, 12).trace_digest != first.trace_digest


@pytest.mark.parametrize("protocol", list(Protocol))
def test_run_invariants(protocol):
    config = SMALL.with_overrides(protocol=protocol)
    scenario = Scenario(config, 5)
    metrics = scenario.execute()

    assert metrics.queries == config.requests_per_run
    assert 0.0 <= metrics.query_success_rate <= 1.0
    assert metrics.avg_location_error >= 0.0
    assert metrics.successes <= metrics.replies <= metrics.queries
    assert metrics.answers_exact + metrics.answers_predicted == metrics.replies

    counted = sum(t.size for t in scenario.network.log if config.warmup <= t.time <= config.duration)
    assert metrics.bandwidth == counted / (config.duration * config.node_count)

    for session in scenario.service.sessions.values():
        assert session.issued >= config.warmup
        if scenario.is_success(session):
            assert session.error <= config.success_radius
        answer = session.answer
        if answer is not None and not answer.exact and not session.drops and session.pending == 0:
            assert all(answer.timestamp >= c.timestamp for c in session.candidates)

    assert metrics.registration_done <= config.warmup
    assert metrics.storage_max >= metrics.storage_mean >= 0.0


def test_static_scenario_is_exact():
    config = load_config(CONFIG_DIR / "static.conf")
    for protocol in (Protocol.PHLS1, Protocol.PHLS2):
        metrics = run(config.with_overrides(protocol=protocol))
        assert metrics.query_success_rate == 1.0
        assert metrics.avg_location_error == pytest.approx(0.0, abs=1e-6)


def test_any_reply_mode_counts_every_answer():
    config = SMALL.with_overrides(success_mode="any_reply", success_radius=1.0)
    metrics = run(config, 2)
    assert metrics.successes == metrics.replies


def test_sweep_counts_and_order():
    table = sweep(SMALL, "speed", ["phls1", "hls"], values=[10.0, 5.0])
    assert [(r.axis_value, r.protocol) for r in table] == [
        (5.0, Protocol.HLS), (5.0, Protocol.PHLS1), (10.0, Protocol.HLS), (10.0, Protocol.PHLS1)
    ]
    assert all(r.runs == SMALL.runs for r in table)

    density = sweep(SMALL, "density", [Protocol.PHLS2], values=[20, 30])
    assert [r.axis_value for r in density] == [20.0, 30.0]


def test_single_point_sweep_matches_run_aggregation():
    [point] = sweep(SMALL, "speed", ["phls2"], values=[10.0])
    config = SMALL.with_overrides(protocol="phls2")
    runs = [run(config, SMALL.rng_seed + k) for k in range(SMALL.runs)]
    assert point == aggregate("speed", 10.0, Protocol.PHLS2, runs)


def test_parallel_sweep_matches_serial():
    serial = sweep(SMALL, "speed", ["phls1"], values=[10.0], workers=1)
    parallel = sweep(SMALL, "speed", ["phls1"], values=[10.0], workers=2)
    assert render_csv(serial) == render_csv(parallel)


def test_emit_csv(tmp_path):
    table = [row(30.0, p) for p in (Protocol.PHLS2, Protocol.HLS, Protocol.PHLS1)]
    table += [row(10.0, p) for p in Protocol]
    path = emit_csv(table, tmp_path / "out" / "sweep.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 7
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert [line.split(",")[2] for line in lines[1:]] == ["hls", "phls1", "phls2"] * 2
    assert lines[1].split(",")[:7] == ["speed", "10", "hls", "5", "0.5", "0.0123457", "12.3457"]
    assert "1.23457e+06" in lines[1]

    again = emit_csv(list(reversed(table)), tmp_path / "again.csv")
    assert again.read_bytes() == path.read_bytes()


def test_emit_csv_errors(tmp_path):
    with pytest.raises(EmptyTable):
        emit_csv([], tmp_path / "empty.csv")
    blocker = tmp_path / "file.txt"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        emit_csv([row(10.0, Protocol.HLS)], blocker / "out.csv")


def test_unknown_axis():
    with pytest.raises(ValueError):
        sweep(SMALL, "pause", ["hls"])


# protocol trends at reduced scale

SPARSE = ScenarioConfig(
    area_side=500.0,
    cell_side=125.0,
    node_count=14,
    pause_max=1.0,
    leg_time_max=60.0,
    duration=60.0,
    warmup=10.0,
    requests_per_run=80,
    runs=3,
    query_deadline=2.0,
    success_radius=60.0,
    rng_seed=21,
)

DENSE = ScenarioConfig(
    area_side=250.0,
    cell_side=125.0,
    node_count=60,
    v_max=30.0,
    duration=40.0,
    warmup=5.0,
    requests_per_run=20,
    runs=2,
    query_deadline=2.0,
    rng_seed=8,
)


def by_protocol(table, axis_value):
    return {row.protocol: row for row in table if row.axis_value == axis_value}


def test_speed_degrades_success_and_accuracy():
    table = sweep(SPARSE, "speed", ["hls", "phls1"], values=[0.01, 40.0])
    still, fast = by_protocol(table, 0.01), by_protocol(table, 40.0)
    for protocol in (Protocol.HLS, Protocol.PHLS1):
        assert still[protocol].location_error_mean_m < 2.0
        assert still[protocol].location_error_mean_m < fast[protocol].location_error_mean_m
        assert still[protocol].success_rate_mean >= fast[protocol].success_rate_mean


def test_prediction_beats_stored_positions_at_speed():
    fast = by_protocol(sweep(SPARSE, "speed", ["hls", "phls1"], values=[40.0]), 40.0)
    assert fast[Protocol.PHLS1].location_error_mean_m < fast[Protocol.HLS].location_error_mean_m


def test_unicast_updates_cost_less_than_geocast():
    rows = by_protocol(sweep(DENSE, "speed", list(Protocol), values=[30.0]), 30.0)
    hls = rows[Protocol.HLS].bandwidth_mean_Bps_per_node
    assert rows[Protocol.PHLS1].bandwidth_mean_Bps_per_node < hls
    assert rows[Protocol.PHLS2].bandwidth_mean_Bps_per_node < hls



if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
