"""Location service protocols: PHLS1, PHLS2 and the HLS baseline.

PHLS elects one server node per level (modulo hash over region members) and
sends it unicast updates; HLS elects one responsible cell per level and
geocasts the update to everyone in it. Queries in both walk the hierarchy:
ascend through the requester's regions, descend into sibling branches, and
answer exactly from the level-0 record of the cell the subject is in, or
by prediction from the freshest record the walk came across.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from shared.grid import GridHierarchy, Point, RegionId, select_server
from shared.logs import get_logger
from shared.mobility import Fleet, Vector
from shared.netsim import Dropped, Network, Packet, PacketKind, Simulator

logger = get_logger("locsvc")


class NegativeElapsed(ValueError):
    pass


class AlphaOutOfRange(ValueError):
    pass


class SubjectUnknown(LookupError):
    pass


class QueryFailed(LookupError):
    pass


class Protocol(str, Enum):
    HLS = "hls"
    PHLS1 = "phls1"
    PHLS2 = "phls2"


class PredictionScheme(str, Enum):
    NONE = "none"
    LINEAR = "linear"
    MOVING_AVERAGE = "moving_average"


class ServerMobilityPolicy(str, Enum):
    HANDOVER = "handover"
    DISCARD = "discard"


class DescentMode(str, Enum):
    FULL = "full"
    GUIDED = "guided"


SCHEME_FOR_PROTOCOL = {
    Protocol.HLS: PredictionScheme.NONE,
    Protocol.PHLS1: PredictionScheme.LINEAR,
    Protocol.PHLS2: PredictionScheme.MOVING_AVERAGE,
}


@dataclass(frozen=True)
class LocationRecord:
    subject: int
    position: Point
    velocity: Vector
    timestamp: float
    region: RegionId

    @property
    def level(self) -> int:
        return self.region.level


@dataclass(frozen=True)
class PredictorConfig:
    scheme: PredictionScheme = PredictionScheme.LINEAR
    alpha: float = 0.5

    def __post_init__(self) -> None:
        check_alpha(self.alpha)

    @classmethod
    def for_protocol(cls, protocol: Protocol, alpha: float = 0.5) -> "PredictorConfig":
        return cls(scheme=SCHEME_FOR_PROTOCOL[protocol], alpha=alpha)


def check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")


def _elapsed(record: LocationRecord, t_now: float) -> float:
    if t_now < record.timestamp:
        raise NegativeElapsed(f"t_now={t_now} precedes record timestamp {record.timestamp}")
    return t_now - record.timestamp


def predict_linear(record: LocationRecord, t_now: float, area: GridHierarchy) -> Point:
    """Last position plus last velocity times elapsed time, kept inside the area."""
    dt = _elapsed(record, t_now)
    x, y = record.position
    vx, vy = record.velocity
    return area.clamp((x + vx * dt, y + vy * dt))


def update_avg_velocity(v_bar_old: Vector, v_rec: Vector, alpha: float) -> Vector:
    check_alpha(alpha)
    return (
        alpha * v_bar_old[0] + (1.0 - alpha) * v_rec[0],
        alpha * v_bar_old[1] + (1.0 - alpha) * v_rec[1],
    )


def predict_avg(record: LocationRecord, v_bar_new: Vector, t_now: float, area: GridHierarchy) -> Point:
    dt = _elapsed(record, t_now)
    x, y = record.position
    return area.clamp((x + v_bar_new[0] * dt, y + v_bar_new[1] * dt))


def predict(record: LocationRecord, t_now: float, scheme: PredictionScheme, area: GridHierarchy) -> Point:
    if scheme is PredictionScheme.NONE:
        _elapsed(record, t_now)
        return record.position
    if scheme is PredictionScheme.MOVING_AVERAGE:
        # the record's velocity slot already carries the sender's smoothed velocity
        return predict_avg(record, record.velocity, t_now, area)
    return predict_linear(record, t_now, area)


def freshest(records: Iterable[Optional[LocationRecord]]) -> Optional[LocationRecord]:
    best: Optional[LocationRecord] = None
    for record in records:
        if record is not None and (best is None or record.timestamp > best.timestamp):
            best = record
    return best


class ServerTable:
    """Records held by each host, keyed by (subject, level)."""

    def __init__(self) -> None:
        self._hosts: Dict[int, Dict[Tuple[int, int], LocationRecord]] = {}

    def store(self, host: int, record: LocationRecord) -> bool:
        held = self._hosts.setdefault(host, {})
        key = (record.subject, record.level)
        current = held.get(key)
        if current is not None and record.timestamp <= current.timestamp:
            return False
        held[key] = record
        return True

    def get(self, host: int, subject: int, level: int) -> Optional[LocationRecord]:
        return self._hosts.get(host, {}).get((subject, level))

    def for_subject(self, host: int, subject: int) -> List[LocationRecord]:
        held = self._hosts.get(host, {})
        return [record for (who, _), record in sorted(held.items()) if who == subject]

    def records(self, host: int) -> List[LocationRecord]:
        return [record for _, record in sorted(self._hosts.get(host, {}).items())]

    def remove(self, host: int, subject: int, level: int) -> Optional[LocationRecord]:
        return self._hosts.get(host, {}).pop((subject, level), None)

    def count(self, host: int) -> int:
        return len(self._hosts.get(host, {}))

    def holds_subject(self, subject: int) -> bool:
        return any(who == subject for held in self._hosts.values() for (who, _) in held)

    def __len__(self) -> int:
        return sum(len(held) for held in self._hosts.values())


@dataclass(frozen=True)
class LocationAnswer:
    position: Point
    exact: bool
    timestamp: float
    received_at: float


@dataclass(frozen=True)
class QueryFailure:
    reason: str  # "unknown" | "routing"


@dataclass
class QuerySession:
    query_id: int
    requester: int
    subject: int
    issued: float
    deadline: float
    requester_cell: RegionId
    replies: List[LocationAnswer] = field(default_factory=list)
    true_positions: List[Point] = field(default_factory=list)
    candidates: List[LocationRecord] = field(default_factory=list)
    pending: int = 0
    answer: Optional[LocationAnswer] = None
    true_position: Optional[Point] = None
    failure: Optional[QueryFailure] = None
    finished: bool = False
    hops: int = 0
    drops: Counter = field(default_factory=Counter)

    @property
    def outcome(self) -> LocationAnswer | QueryFailure | None:
        return self.answer if self.answer is not None else self.failure

    @property
    def error(self) -> Optional[float]:
        """Distance between the answer and where the subject really was when it arrived."""
        if self.answer is None or self.true_position is None:
            return None
        return math.dist(self.answer.position, self.true_position)

    def result(self) -> LocationAnswer:
        if self.answer is not None:
            return self.answer
        if self.failure is not None and self.failure.reason == "unknown":
            raise SubjectUnknown(f"no server holds a record for node {self.subject}")
        raise QueryFailed(f"query {self.query_id} for node {self.subject} got no reply")


@dataclass
class ServiceStats:
    updates_sent: int = 0
    updates_dropped_empty: int = 0
    updates_stored: int = 0
    updates_lost: int = 0
    handovers_sent: int = 0
    records_lost: int = 0
    records_discarded: int = 0
    records_stale: int = 0
    queries_issued: int = 0
    answers_exact: int = 0
    answers_predicted: int = 0
    queries_unanswered: int = 0
    registration_done: float = 0.0


class LocationService:
    def __init__(
        self,
        protocol: Protocol,
        grid: GridHierarchy,
        network: Network,
        fleet: Fleet,
        alpha: float = 0.5,
        policy: ServerMobilityPolicy = ServerMobilityPolicy.HANDOVER,
        descent: DescentMode = DescentMode.FULL,
        query_deadline: float = 5.0,
    ) -> None:
        self.protocol = protocol
        self.grid = grid
        self.network = network
        self.sim: Simulator = network.sim
        self.fleet = fleet
        self.predictor = PredictorConfig.for_protocol(protocol, alpha)
        self.policy = policy
        self.descent = descent
        self.query_deadline = query_deadline
        self.table = ServerTable()
        self.stats = ServiceStats()
        self.sessions: Dict[int, QuerySession] = {}
        self.servers: Dict[int, Dict[int, int]] = {}
        self._query_ids = itertools.count()
        self._cells_time: Optional[float] = None
        self._cells: Optional[np.ndarray] = None

    @property
    def geocast(self) -> bool:
        return self.protocol is Protocol.HLS

    # membership oracle

    def _cell_indices(self) -> np.ndarray:
        if self._cells_time != self.sim.now:
            self._cells = self.grid.cell_indices(self.network.positions(self.sim.now))
            self._cells_time = self.sim.now
        return self._cells

    def members(self, region: RegionId) -> List[int]:
        cells = self._cell_indices()
        mask = (np.right_shift(cells[:, 0], region.level) == region.x) & (
            np.right_shift(cells[:, 1], region.level) == region.y
        )
        return [int(i) for i in np.flatnonzero(mask)]

    def position(self, node: int) -> Point:
        return self.fleet.position_of(node, self.sim.now)

    def cell(self, node: int) -> RegionId:
        return self.grid.cell_of(self.position(node))

    def responsible_cell(self, subject: int, region: RegionId) -> RegionId:
        cells = self.grid.cells_in(region)
        return cells[subject % len(cells)]

    def elect(self, subject: int, region: RegionId, exclude: Iterable[int] = ()) -> Optional[int]:
        skip = {subject, *exclude}
        candidates = [m for m in self.members(region) if m not in skip]
        return select_server(subject, candidates) if candidates else None

    def _addressed(self, packet_fields: dict, subject: int, region: RegionId) -> Optional[Packet]:
        """Packet addressed to the subject's server (PHLS) or responsible cell (HLS) in ``region``."""
        if self.geocast:
            return Packet(target_cell=self.responsible_cell(subject, region), subject=subject, **packet_fields)
        server = self.elect(subject, region)
        if server is None:
            return None
        return Packet(recipient=server, subject=subject, **packet_fields)

    # updates

    def _velocity_slot(self, node: int) -> Vector:
        state = self.fleet.states[node]
        if self.predictor.scheme is PredictionScheme.MOVING_AVERAGE:
            v_bar = update_avg_velocity(state.avg_velocity, state.velocity, self.predictor.alpha)
            self.fleet.set_avg_velocity(node, v_bar)
            return v_bar
        return state.velocity

    def on_boundary_cross(self, node: int, k: int, t_now: float) -> List[Packet]:
        """Update packets for levels 0..k of the node's new regions."""
        position = self.position(node)
        cell = self.grid.cell_of(position)
        levels = list(range(k + 1))
        known = self.servers.setdefault(node, {})
        if not self.geocast and self.policy is ServerMobilityPolicy.DISCARD:
            for level in range(k + 1, self.grid.levels + 1):
                server = known.get(level)
                region = self.grid.region_of(cell, level)
                if server is None or server == node or server not in self.members(region):
                    levels.append(level)

        velocity = self._velocity_slot(node)
        packets: List[Packet] = []
        for level in levels:
            region = self.grid.region_of(cell, level)
            record = LocationRecord(node, position, velocity, t_now, region)
            packet = self._addressed(
                dict(kind=PacketKind.UPDATE, origin=node, requester=node, payload=record, level=level),
                node,
                region,
            )
            if packet is None:
                self.stats.updates_dropped_empty += 1
                logger.debug("update dropped node=%s level=%s region=%s empty", node, level, region)
                continue
            if packet.recipient is not None:
                known[level] = packet.recipient
            packets.append(packet)
        return packets

    def on_server_region_exit(self, server: int, t_now: float) -> List[Packet]:
        """Hand over or discard the records a host no longer sits inside the region of."""
        cell = self.cell(server)
        packets: List[Packet] = []
        for record in self.table.records(server):
            home = self.responsible_cell(record.subject, record.region) if self.geocast else record.region
            if self.grid.region_of(cell, home.level) == home:
                continue
            self.table.remove(server, record.subject, record.level)
            if self.policy is ServerMobilityPolicy.DISCARD:
                self.stats.records_discarded += 1
                continue
            remaining = [m for m in self.members(home) if m not in (server, record.subject)]
            if not remaining:
                self.stats.records_lost += 1
                continue
            if self.geocast and any(self._holds(m, record) for m in remaining):
                continue
            if record.subject not in self.members(record.region):
                # the subject has registered elsewhere since; nothing to hand over
                self.stats.records_stale += 1
                continue
            packets.append(
                Packet(
                    kind=PacketKind.HANDOVER,
                    origin=server,
                    requester=server,
                    subject=record.subject,
                    payload=record,
                    recipient=select_server(record.subject, remaining),
                    level=record.level,
                )
            )
        return packets

    def _holds(self, host: int, record: LocationRecord) -> bool:
        held = self.table.get(host, record.subject, record.level)
        return held is not None and held.timestamp >= record.timestamp

    def register(self, node: int, t_now: float) -> None:
        self.dispatch(self.on_boundary_cross(node, self.grid.levels, t_now), node)

    def on_move(self, node: int, old_cell: RegionId, new_cell: RegionId, t_now: float) -> None:
        k = self.grid.crossed_level(old_cell, new_cell)
        if k is None:
            return
        self.dispatch(self.on_boundary_cross(node, k, t_now), node)
        self.dispatch(self.on_server_region_exit(node, t_now), node)

    def dispatch(self, packets: List[Packet], source: int) -> None:
        for packet in packets:
            if packet.kind is PacketKind.UPDATE:
                self.stats.updates_sent += 1
            elif packet.kind is PacketKind.HANDOVER:
                self.stats.handovers_sent += 1
            self.network.send(packet, source, self._on_delivered, self._on_dropped)

    def _note_registration(self, packet: Packet) -> None:
        if packet.kind is PacketKind.UPDATE and packet.payload.timestamp == 0.0:
            self.stats.registration_done = max(self.stats.registration_done, self.sim.now)

    def _geocast_store(self, packet: Packet, first: int) -> None:
        stored = 0
        for member in self.members(packet.target_cell):
            if member == packet.subject:
                continue
            if member != first:
                self.network.transmit(packet, first, member)
            self.table.store(member, packet.payload)
            stored += 1
        if stored:
            self.stats.updates_stored += 1
        else:
            self.stats.updates_lost += 1

    # delivery

    def _on_delivered(self, packet: Packet, node: int) -> None:
        if packet.kind in (PacketKind.UPDATE, PacketKind.HANDOVER):
            self._note_registration(packet)
            if packet.target_cell is not None:
                self._geocast_store(packet, node)
            else:
                self.table.store(node, packet.payload)
                self.stats.updates_stored += 1
            return

        session = self.sessions[packet.query_id]
        session.hops += packet.hops
        session.pending -= 1
        if packet.kind is PacketKind.QUERY:
            self._on_query(session, packet, node)
        elif packet.kind is PacketKind.QUERY_DESCEND:
            self._on_descend(session, packet, node)
        else:
            self._on_reply(session, packet)
        self._settle_if_idle(session)

    def _on_dropped(self, packet: Packet, dropped: Dropped) -> None:
        if packet.query_id is not None:
            session = self.sessions[packet.query_id]
            session.hops += dropped.hops
            session.drops[dropped.reason] += 1
            session.pending -= 1
            self._settle_if_idle(session)
        elif packet.kind is PacketKind.UPDATE:
            self.stats.updates_lost += 1
            self._note_registration(packet)
        else:
            self.stats.records_lost += 1

    # queries

    def resolve(
        self,
        requester: int,
        subject: int,
        t_now: float,
        on_done: Optional[Callable[[QuerySession], None]] = None,
    ) -> QuerySession:
        """Start a treewalk for ``subject``.

        The session completes on the first exact reply. Otherwise it settles on
        the freshest predicted reply once every query, descent and reply packet
        it spawned has been delivered or dropped, or at the deadline, whichever
        comes first.
        """
        if requester == subject:
            raise ValueError("a node does not query its own location")
        session = QuerySession(
            query_id=next(self._query_ids),
            requester=requester,
            subject=subject,
            issued=t_now,
            deadline=t_now + self.query_deadline,
            requester_cell=self.cell(requester),
        )
        self.sessions[session.query_id] = session
        self.stats.queries_issued += 1
        self.sim.schedule(session.deadline, f"query-deadline:{session.query_id}", self._finalize, session, on_done)
        self._ascend(session, requester, 0, None, None)
        self._settle_if_idle(session)
        return session

    def _send_session(self, session: QuerySession, packet: Packet, holder: int) -> None:
        session.pending += 1
        self.network.send(packet, holder, self._on_delivered, self._on_dropped)

    def _query_packet(self, session: QuerySession, kind: PacketKind, level: int, scope: RegionId,
                      best: Optional[LocationRecord] = None, came_from: Optional[RegionId] = None) -> Optional[Packet]:
        return self._addressed(
            dict(
                kind=kind,
                origin=session.requester,
                requester=session.requester,
                payload=best,
                deadline=session.deadline,
                query_id=session.query_id,
                level=level,
                scope=scope,
                came_from=came_from,
            ),
            session.subject,
            scope,
        )

    def _exact_record(self, subject: int, records: List[LocationRecord]) -> Optional[LocationRecord]:
        """Level-0 record of a subject still inside that cell (cell members hear each other directly)."""
        here = self.cell(subject)
        return next((r for r in records if r.level == 0 and r.region == here), None)

    def _ascend(self, session: QuerySession, holder: int, level: int, best: Optional[LocationRecord],
                came_from: Optional[RegionId]) -> None:
        scope = self.grid.region_of(session.requester_cell, level)
        packet = self._query_packet(session, PacketKind.QUERY, level, scope, best, came_from)
        if packet is not None:
            self._send_session(session, packet, holder)
        elif level < self.grid.levels:
            self._ascend(session, holder, level + 1, best, scope)
        elif best is not None:
            self._reply(session, holder, best, exact=False)

    def _on_query(self, session: QuerySession, packet: Packet, node: int) -> None:
        if session.finished:
            return
        records = self.table.for_subject(node, session.subject)
        session.candidates.extend(records)
        exact = self._exact_record(session.subject, records)
        if exact is not None:
            self._reply(session, node, exact, exact=True)
            return

        best = freshest([packet.payload, *records])
        if packet.level >= 1:
            for child in self.grid.children(packet.scope):
                if child != packet.came_from:
                    self._descend(session, node, child, best)
        if packet.level < self.grid.levels:
            self._ascend(session, node, packet.level + 1, best, packet.scope)
        elif best is not None:
            self._reply(session, node, best, exact=False)

    def _descend(self, session: QuerySession, holder: int, region: RegionId,
                 carried: Optional[LocationRecord]) -> None:
        packet = self._query_packet(session, PacketKind.QUERY_DESCEND, region.level, region, carried)
        if packet is not None:
            self._send_session(session, packet, holder)

    def _on_descend(self, session: QuerySession, packet: Packet, node: int) -> None:
        if session.finished:
            return
        records = self.table.for_subject(node, session.subject)
        session.candidates.extend(records)
        exact = self._exact_record(session.subject, records)
        if exact is not None:
            self._reply(session, node, exact, exact=True)
            return

        carried = packet.payload
        local = freshest(records)
        # only records fresher than what the walk already carries are worth a reply
        if local is not None and (carried is None or local.timestamp > carried.timestamp):
            self._reply(session, node, local, exact=False)
            carried = local
        if packet.scope.level == 0:
            return
        if self.descent is DescentMode.GUIDED and not any(r.region == packet.scope for r in records):
            return
        for child in self.grid.children(packet.scope):
            self._descend(session, node, child, carried)

    def _reply(self, session: QuerySession, node: int, record: LocationRecord, exact: bool) -> None:
        now = self.sim.now
        position = record.position if exact else predict(record, now, self.predictor.scheme, self.grid)
        answer = LocationRecord(record.subject, position, record.velocity, record.timestamp, record.region)
        packet = Packet(
            kind=PacketKind.REPLY,
            origin=node,
            requester=session.requester,
            subject=session.subject,
            payload=answer,
            recipient=session.requester,
            deadline=session.deadline,
            query_id=session.query_id,
            level=record.level,
            exact=exact,
        )
        self._send_session(session, packet, node)

    def _on_reply(self, session: QuerySession, packet: Packet) -> None:
        if session.finished:
            return
        record = packet.payload
        answer = LocationAnswer(record.position, packet.exact, record.timestamp, self.sim.now)
        session.replies.append(answer)
        session.true_positions.append(self.position(session.subject))
        if answer.exact:
            self._complete(session, len(session.replies) - 1)

    def _complete(self, session: QuerySession, index: int) -> None:
        session.answer = session.replies[index]
        session.true_position = session.true_positions[index]
        session.finished = True
        if session.answer.exact:
            self.stats.answers_exact += 1
        else:
            self.stats.answers_predicted += 1

    def _settle_if_idle(self, session: QuerySession) -> None:
        if not session.finished and session.pending == 0:
            self._settle(session)

    def _settle(self, session: QuerySession) -> None:
        if session.replies:
            # freshest timestamp wins, earliest arrival breaks ties
            replies = session.replies
            chosen = max(range(len(replies)), key=lambda i: (replies[i].timestamp, -replies[i].received_at))
            self._complete(session, chosen)
            return
        session.finished = True
        reason = "routing" if self.table.holds_subject(session.subject) else "unknown"
        session.failure = QueryFailure(reason)
        self.stats.queries_unanswered += 1

    def _finalize(self, session: QuerySession, on_done: Optional[Callable[[QuerySession], None]]) -> None:
        if not session.finished:
            self._settle(session)
        if on_done is not None:
            on_done(session)
