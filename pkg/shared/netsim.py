"""Discrete-event core, unit-disk radio and greedy geographic forwarding."""

from __future__ import annotations

import hashlib
import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Callable, Dict, List, NamedTuple, Optional, Set, Tuple

import numpy as np

from shared.grid import GridHierarchy, Point, RegionId
from shared.logs import get_logger

if TYPE_CHECKING:
    from shared.locsvc import LocationRecord

logger = get_logger("netsim")

HEADER_SIZE = 20  # kind, origin, requester, subject, deadline
RECORD_SIZE = 48  # position 2x8, velocity 2x8, timestamp 8, region tag 8

DEFAULT_RADIO_RANGE = 250.0
DEFAULT_HOP_LATENCY = 0.005


class UnknownNode(LookupError):
    pass


class PacketKind(str, Enum):
    UPDATE = "update"
    HANDOVER = "handover"
    QUERY = "query"
    QUERY_DESCEND = "query_descend"
    REPLY = "reply"


class DropReason(str, Enum):
    NO_PROGRESS = "no_progress"
    DEADLINE_EXCEEDED = "deadline_exceeded"


def payload_size(kind: PacketKind) -> int:
    # Queries carry the best-so-far record slot even when it is empty.
    return RECORD_SIZE


@dataclass
class Packet:
    kind: PacketKind
    origin: int
    requester: int
    subject: int
    payload: Optional["LocationRecord"] = None
    recipient: Optional[int] = None
    target_cell: Optional[RegionId] = None
    deadline: float = math.inf
    query_id: Optional[int] = None
    level: Optional[int] = None
    exact: bool = False
    scope: Optional[RegionId] = None
    came_from: Optional[RegionId] = None
    size: int = 0
    hops: int = 0
    packet_id: int = -1
    dest_position: Optional[Point] = None
    progress: List[Tuple[float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if (self.recipient is None) == (self.target_cell is None):
            raise ValueError("a packet needs exactly one of recipient or target_cell")
        self.size = HEADER_SIZE + payload_size(self.kind)


@dataclass(frozen=True)
class Delivered:
    node: int
    hops: int


@dataclass(frozen=True)
class Dropped:
    reason: DropReason
    at_node: int
    hops: int


class Transmission(NamedTuple):
    time: float
    packet_id: int
    kind: PacketKind
    size: int
    sender: int
    receiver: int


class EventQueue:
    """Min-heap of (time, sequence, event); the sequence makes equal times FIFO."""

    def __init__(self) -> None:
        self._heap: List[Tuple[float, int, Any]] = []
        self._sequence = itertools.count()

    def push(self, time: float, event: Any) -> int:
        seq = next(self._sequence)
        heapq.heappush(self._heap, (time, seq, event))
        return seq

    def pop(self) -> Tuple[float, int, Any]:
        return heapq.heappop(self._heap)

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class Event:
    label: str
    handler: Callable[..., None]
    args: Tuple[Any, ...] = ()


class Simulator:
    def __init__(self) -> None:
        self.now = 0.0
        self.queue = EventQueue()
        self.events_processed = 0
        self._trace = hashlib.sha256()

    def schedule(self, time: float, label: str, handler: Callable[..., None], *args: Any) -> int:
        if time < self.now:
            raise ValueError(f"cannot schedule {label} at t={time} before now={self.now}")
        return self.queue.push(time, Event(label, handler, args))

    def schedule_in(self, delay: float, label: str, handler: Callable[..., None], *args: Any) -> int:
        return self.schedule(self.now + delay, label, handler, *args)

    def run(self, until: float = math.inf) -> None:
        while self.queue and self.queue.peek_time() <= until:
            time, seq, event = self.queue.pop()
            self.now = time
            self._trace.update(f"{time:.9f}|{seq}|{event.label}\n".encode())
            event.handler(*event.args)
            self.events_processed += 1
        if until != math.inf:
            self.now = max(self.now, until)

    def trace_digest(self) -> str:
        return self._trace.hexdigest()


class Network:
    """Idealised radio: unit disk, no collisions, fixed per-hop latency."""

    def __init__(
        self,
        sim: Simulator,
        positions: Callable[[float], np.ndarray],
        grid: GridHierarchy,
        radio_range: float = DEFAULT_RADIO_RANGE,
        hop_latency: float = DEFAULT_HOP_LATENCY,
        max_hops: int = 128,
    ) -> None:
        self.sim = sim
        self.positions = positions
        self.grid = grid
        self.radio_range = radio_range
        self.hop_latency = hop_latency
        self.max_hops = max_hops
        self.log: List[Transmission] = []
        self.drops: Counter = Counter()
        self.drops_by_kind: Counter = Counter()
        self.delivered = 0
        self.greedy_hops = 0
        self.progress_total = 0.0
        self._packet_ids = itertools.count()

    @staticmethod
    def _check_node(node: int, snapshot: np.ndarray) -> None:
        if not 0 <= node < len(snapshot):
            raise UnknownNode(f"node {node} not in snapshot of {len(snapshot)} nodes")

    def _in_range(self, node: int, snapshot: np.ndarray) -> np.ndarray:
        offsets = snapshot - snapshot[node]
        mask = np.hypot(offsets[:, 0], offsets[:, 1]) <= self.radio_range
        mask[node] = False
        return mask

    def neighbors(self, node: int, snapshot: np.ndarray) -> Set[int]:
        self._check_node(node, snapshot)
        return {int(i) for i in np.flatnonzero(self._in_range(node, snapshot))}

    def greedy_next_hop(self, current: int, dest_position: Point, snapshot: np.ndarray) -> Optional[int]:
        """Neighbour strictly closer to the destination, nearest first; None at a local maximum."""
        self._check_node(current, snapshot)
        offsets = snapshot - np.asarray(dest_position)
        remaining = np.hypot(offsets[:, 0], offsets[:, 1])
        candidates = np.flatnonzero(self._in_range(current, snapshot) & (remaining < remaining[current]))
        if candidates.size == 0:
            return None
        return int(candidates[np.argmin(remaining[candidates])])

    def transmit(self, packet: Packet, sender: int, receiver: int) -> None:
        packet.hops += 1
        self.log.append(Transmission(self.sim.now, packet.packet_id, packet.kind, packet.size, sender, receiver))

    def bytes_between(self, start: float, end: float) -> int:
        return sum(t.size for t in self.log if start <= t.time <= end)

    @property
    def bytes_total(self) -> int:
        return sum(t.size for t in self.log)

    @property
    def hop_progress_mean(self) -> float:
        return self.progress_total / self.greedy_hops if self.greedy_hops else 0.0

    def send(
        self,
        packet: Packet,
        source: int,
        on_delivered: Callable[[Packet, int], None],
        on_dropped: Optional[Callable[[Packet, Dropped], None]] = None,
    ) -> Packet:
        packet.packet_id = next(self._packet_ids)
        self.sim.schedule(self.sim.now, f"hop:{packet.kind.value}:{packet.packet_id}", self._step,
                          packet, source, on_delivered, on_dropped)
        return packet

    def _target(self, packet: Packet, holder: int, snapshot: np.ndarray) -> Tuple[bool, Point]:
        if packet.recipient is not None:
            self._check_node(packet.recipient, snapshot)
            target = (float(snapshot[packet.recipient][0]), float(snapshot[packet.recipient][1]))
            return holder == packet.recipient, target
        here = self.grid.cell_of((float(snapshot[holder][0]), float(snapshot[holder][1])))
        return here == packet.target_cell, self.grid.center(packet.target_cell)

    def _step(self, packet: Packet, holder: int, on_delivered: Callable[[Packet, int], None],
              on_dropped: Optional[Callable[[Packet, Dropped], None]]) -> None:
        now = self.sim.now
        if now > packet.deadline:
            self._drop(packet, holder, DropReason.DEADLINE_EXCEEDED, on_dropped)
            return

        snapshot = self.positions(now)
        arrived, target = self._target(packet, holder, snapshot)
        packet.dest_position = target
        if arrived:
            self.delivered += 1
            logger.debug("delivered packet=%s kind=%s node=%s hops=%s", packet.packet_id, packet.kind.value,
                         holder, packet.hops)
            on_delivered(packet, holder)
            return

        next_hop = self.greedy_next_hop(holder, target, snapshot) if packet.hops < self.max_hops else None
        if next_hop is None:
            self._drop(packet, holder, DropReason.NO_PROGRESS, on_dropped)
            return

        before = math.dist(snapshot[holder], target)
        after = math.dist(snapshot[next_hop], target)
        packet.progress.append((before, after))
        self.greedy_hops += 1
        self.progress_total += before - after
        self.transmit(packet, holder, next_hop)
        self.sim.schedule(now + self.hop_latency, f"hop:{packet.kind.value}:{packet.packet_id}", self._step,
                          packet, next_hop, on_delivered, on_dropped)

    def _drop(self, packet: Packet, holder: int, reason: DropReason,
              on_dropped: Optional[Callable[[Packet, Dropped], None]]) -> None:
        self.drops[reason] += 1
        self.drops_by_kind[packet.kind] += 1
        logger.debug("dropped packet=%s kind=%s reason=%s node=%s", packet.packet_id, packet.kind.value,
                     reason.value, holder)
        if on_dropped is not None:
            on_dropped(packet, Dropped(reason, holder, packet.hops))

    def route(self, packet: Packet, source: int) -> Delivered | Dropped:
        """Send one packet and run the event loop until it resolves."""
        outcome: Dict[str, Delivered | Dropped] = {}
        self.send(
            packet,
            source,
            lambda p, node: outcome.setdefault("result", Delivered(node, p.hops)),
            lambda p, dropped: outcome.setdefault("result", dropped),
        )
        while "result" not in outcome and self.sim.queue:
            self.sim.run(until=self.sim.queue.peek_time())
        return outcome["result"]
