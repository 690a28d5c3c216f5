"""Scenario runner, metrics, parameter sweeps and CSV output."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from shared.config import ScenarioConfig, SuccessMode
from shared.consensus import mean_std, total
from shared.grid import RegionId
from shared.locsvc import LocationService, Protocol, QuerySession
from shared.logs import get_logger
from shared.mobility import Fleet, MobilityConfig
from shared.netsim import DropReason, Network, Simulator

logger = get_logger("experiment")

AXES: Dict[str, Tuple[str, List[float]]] = {
    "speed": ("v_max", [10.0, 20.0, 30.0, 40.0, 50.0]),
    "density": ("node_count", [100, 200, 300, 400]),
}


class EmptyTable(ValueError):
    pass


class IoFailure(OSError):
    pass


class RunMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    protocol: Protocol
    seed: int
    node_count: int
    v_max: float
    queries: int
    successes: int
    replies: int
    query_success_rate: float
    avg_location_error: float
    bandwidth: float
    bytes_counted: int
    query_hops_mean: float
    drop_noprogress: int
    drop_deadline: int
    updates_sent: int
    updates_dropped_empty: int
    updates_stored: int
    updates_lost: int
    handovers_sent: int
    records_lost: int
    records_discarded: int
    records_stale: int
    answers_exact: int
    answers_predicted: int
    queries_unanswered: int
    failures_unknown: int
    failures_routing: int
    storage_mean: float
    storage_max: int
    hop_progress_mean_m: float
    registration_done: float
    trace_digest: str


class SweepRow(BaseModel):
    axis_name: str
    axis_value: float
    protocol: Protocol
    runs: int
    success_rate_mean: float
    success_rate_std: float
    location_error_mean_m: float
    location_error_std_m: float
    bandwidth_mean_Bps_per_node: float
    bandwidth_std: float
    query_hops_mean: float
    drop_noprogress_count: int
    drop_deadline_count: int


CSV_COLUMNS = list(SweepRow.model_fields)


def success_rate(successes: int, queries: int) -> float:
    return successes / queries if queries else 0.0


def bandwidth(total_bytes: int, duration: float, node_count: int) -> float:
    """Bytes per second per node."""
    return total_bytes / (duration * node_count)


class Scenario:
    """One seeded simulation: fleet, network, location service and query workload."""

    def __init__(self, config: ScenarioConfig, seed: int) -> None:
        self.config = config
        self.seed = seed
        self.grid = config.grid
        placement_seq, query_seq, *node_seqs = np.random.SeedSequence(seed).spawn(config.node_count + 2)

        mobility = MobilityConfig(
            v_max=config.v_max, area=self.grid, pause_max=config.pause_max, leg_time_max=config.leg_time_max
        )
        self.fleet = Fleet.random(
            config.node_count,
            mobility,
            np.random.default_rng(placement_seq),
            [np.random.default_rng(s) for s in node_seqs],
        )
        self.sim = Simulator()
        self.network = Network(
            self.sim,
            self.fleet.positions_at,
            self.grid,
            radio_range=config.radio_range,
            hop_latency=config.hop_latency,
            max_hops=config.max_hops,
        )
        self.service = LocationService(
            config.protocol,
            self.grid,
            self.network,
            self.fleet,
            alpha=config.alpha,
            policy=config.server_mobility,
            descent=config.descent,
            query_deadline=config.query_deadline,
        )
        self._query_rng = np.random.default_rng(query_seq)
        self._cells: List[RegionId] = [self.grid.cell_of(s.position) for s in self.fleet.states]

    @property
    def end_time(self) -> float:
        return self.config.duration + self.config.query_deadline

    def _schedule_move(self, node: int) -> None:
        at = self.fleet.next_event_time(node)
        if at <= self.config.duration:
            self.sim.schedule(at, f"move:{node}", self._on_move, node)

    def _on_move(self, node: int) -> None:
        now = self.sim.now
        old = self._cells[node]
        state = self.fleet.advance_node(node, now)
        new = self.grid.cell_of(state.position)
        self._cells[node] = new
        if new != old:
            self.service.on_move(node, old, new, now)
        self._schedule_move(node)

    def _schedule_queries(self) -> None:
        cfg = self.config
        count = cfg.requests_per_run
        times = self._query_rng.uniform(cfg.warmup, cfg.duration, size=count)
        requesters = self._query_rng.integers(0, cfg.node_count, size=count)
        offsets = self._query_rng.integers(0, cfg.node_count - 1, size=count)
        # skip over the requester so the pair is always distinct
        subjects = offsets + (offsets >= requesters)
        for i, (at, requester, subject) in enumerate(zip(times, requesters, subjects)):
            self.sim.schedule(float(at), f"query:{i}", self._on_query, int(requester), int(subject))

    def _on_query(self, requester: int, subject: int) -> None:
        self.service.resolve(requester, subject, self.sim.now)

    def execute(self) -> RunMetrics:
        for node in range(self.config.node_count):
            self.service.register(node, 0.0)
        for node in range(self.config.node_count):
            self._schedule_move(node)
        self._schedule_queries()
        self.sim.run(until=self.end_time)

        if self.service.stats.registration_done > self.config.warmup:
            logger.warning(
                "registration_done=%.3f exceeds warmup=%.3f seed=%s",
                self.service.stats.registration_done, self.config.warmup, self.seed,
            )
        return self.metrics()

    def is_success(self, session: QuerySession) -> bool:
        if session.answer is None:
            return False
        if self.config.success_mode is SuccessMode.ANY_REPLY:
            return True
        return session.error <= self.config.success_radius

    def metrics(self) -> RunMetrics:
        cfg = self.config
        sessions = list(self.service.sessions.values())
        answered = [s for s in sessions if s.answer is not None]
        errors = [s.error for s in answered]
        successes = sum(1 for s in sessions if self.is_success(s))
        failures = [s.failure.reason for s in sessions if s.failure is not None]
        storage = np.array([self.service.table.count(n) for n in range(cfg.node_count)])
        counted = self.network.bytes_between(cfg.warmup, cfg.duration)
        stats = self.service.stats
        return RunMetrics(
            protocol=cfg.protocol,
            seed=self.seed,
            node_count=cfg.node_count,
            v_max=cfg.v_max,
            queries=len(sessions),
            successes=successes,
            replies=len(answered),
            query_success_rate=success_rate(successes, len(sessions)),
            avg_location_error=float(np.mean(errors)) if errors else 0.0,
            bandwidth=bandwidth(counted, cfg.duration, cfg.node_count),
            bytes_counted=counted,
            query_hops_mean=float(np.mean([s.hops for s in sessions])) if sessions else 0.0,
            drop_noprogress=self.network.drops[DropReason.NO_PROGRESS],
            drop_deadline=self.network.drops[DropReason.DEADLINE_EXCEEDED],
            updates_sent=stats.updates_sent,
            updates_dropped_empty=stats.updates_dropped_empty,
            updates_stored=stats.updates_stored,
            updates_lost=stats.updates_lost,
            handovers_sent=stats.handovers_sent,
            records_lost=stats.records_lost,
            records_discarded=stats.records_discarded,
            records_stale=stats.records_stale,
            answers_exact=stats.answers_exact,
            answers_predicted=stats.answers_predicted,
            queries_unanswered=stats.queries_unanswered,
            failures_unknown=failures.count("unknown"),
            failures_routing=failures.count("routing"),
            storage_mean=float(storage.mean()),
            storage_max=int(storage.max()),
            hop_progress_mean_m=self.network.hop_progress_mean,
            registration_done=stats.registration_done,
            trace_digest=self.sim.trace_digest(),
        )


def run(config: ScenarioConfig, seed: Optional[int] = None) -> RunMetrics:
    seed = config.rng_seed if seed is None else seed
    metrics = Scenario(config, seed).execute()
    logger.info(
        "protocol=%s seed=%s nodes=%s v_max=%s success=%.3f error=%.1f bandwidth=%.2f",
        config.protocol.value, seed, config.node_count, config.v_max,
        metrics.query_success_rate, metrics.avg_location_error, metrics.bandwidth,
    )
    return metrics


def _run_task(task: Tuple[ScenarioConfig, int]) -> RunMetrics:
    config, seed = task
    return run(config, seed)


def aggregate(axis_name: str, axis_value: float, protocol: Protocol, runs: Sequence[RunMetrics]) -> SweepRow:
    success_mean, success_sd = mean_std(m.query_success_rate for m in runs)
    error_mean, error_sd = mean_std(m.avg_location_error for m in runs)
    bw_mean, bw_sd = mean_std(m.bandwidth for m in runs)
    hops_mean, _ = mean_std(m.query_hops_mean for m in runs)
    dumped = [m.model_dump() for m in runs]
    return SweepRow(
        axis_name=axis_name,
        axis_value=float(axis_value),
        protocol=protocol,
        runs=len(runs),
        success_rate_mean=success_mean,
        success_rate_std=success_sd,
        location_error_mean_m=error_mean,
        location_error_std_m=error_sd,
        bandwidth_mean_Bps_per_node=bw_mean,
        bandwidth_std=bw_sd,
        query_hops_mean=hops_mean,
        drop_noprogress_count=total(dumped, "drop_noprogress"),
        drop_deadline_count=total(dumped, "drop_deadline"),
    )


def sweep(
    base: ScenarioConfig,
    axis: str,
    protocols: Iterable[Protocol | str],
    values: Optional[Sequence[float]] = None,
    workers: int = 1,
) -> List[SweepRow]:
    """Run ``base.runs`` seeds for every (axis value, protocol) and aggregate them."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}, expected one of {sorted(AXES)}")
    field, defaults = AXES[axis]
    protocols = sorted({Protocol(str.lower(p)) for p in protocols}, key=lambda p: p.value)
    points = sorted(values if values is not None else defaults)
    if not protocols or not points:
        raise ValueError("a sweep needs at least one protocol and one axis value")

    groups: List[Tuple[float, Protocol, ScenarioConfig]] = []
    for value in points:
        typed = int(value) if field == "node_count" else float(value)
        for protocol in protocols:
            groups.append((value, protocol, base.with_overrides(**{field: typed, "protocol": protocol})))
    tasks = [(config, base.rng_seed + k) for _, _, config in groups for k in range(base.runs)]
    logger.info("axis=%s points=%s protocols=%s simulations=%s workers=%s",
                axis, len(points), [p.value for p in protocols], len(tasks), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]

    rows = []
    for index, (value, protocol, _) in enumerate(groups):
        chunk = results[index * base.runs:(index + 1) * base.runs]
        rows.append(aggregate(axis, value, protocol, chunk))
    return rows


def _format(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, Protocol):
        return value.value
    return str(value)


def render_csv(table: Sequence[SweepRow]) -> str:
    if not table:
        raise EmptyTable("no rows to write")
    ordered = sorted(table, key=lambda row: (row.axis_value, row.protocol.value))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in ordered:
        writer.writerow([_format(getattr(row, column)) for column in CSV_COLUMNS])
    return buffer.getvalue()


def emit_csv(table: Sequence[SweepRow], path: str | Path) -> Path:
    text = render_csv(table)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    logger.info("wrote rows=%s path=%s", len(table), path)
    return path
