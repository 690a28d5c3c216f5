import math
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from shared.grid import GridHierarchy, RegionId
from shared.netsim import (
    Delivered,
    DropReason,
    Dropped,
    EventQueue,
    Network,
    Packet,
    PacketKind,
    Simulator,
    UnknownNode,
)

GRID = GridHierarchy(cell_side=125.0, levels=3)


def network_for(points, radio_range=250.0):
    snapshot = np.asarray(points, dtype=float)
    sim = Simulator()
    return Network(sim, lambda _t: snapshot, GRID, radio_range=radio_range), snapshot


def unicast(recipient, deadline=math.inf):
    return Packet(kind=PacketKind.UPDATE, origin=0, requester=0, subject=0, recipient=recipient, deadline=deadline)


def test_neighbors_examples():
    net, snap = network_for([(0, 0), (200, 0), (300, 0)])
    assert net.neighbors(0, snap) == {1}
    net, snap = network_for([(0, 0), (900, 900)])
    assert net.neighbors(0, snap) == set()
    net, snap = network_for([(50, 50), (50, 50)])
    assert net.neighbors(0, snap) == {1}
    with pytest.raises(UnknownNode):
        net.neighbors(5, snap)


def test_greedy_next_hop_examples():
    net, snap = network_for([(0, 0), (100, 0), (200, 0)])
    assert net.greedy_next_hop(0, (250, 0), snap) == 2
    net, snap = network_for([(0, 0), (-50, 0)])
    assert net.greedy_next_hop(0, (300, 0), snap) is None
    net, snap = network_for([(0, 0), (240, 0)])
    assert net.greedy_next_hop(0, (240, 0), snap) == 1


def test_packet_size_and_addressing():
    assert unicast(1).size == 68
    descend = Packet(kind=PacketKind.QUERY_DESCEND, origin=0, requester=0, subject=1, target_cell=RegionId(0, 1, 1))
    assert descend.size == 68
    with pytest.raises(ValueError):
        Packet(kind=PacketKind.QUERY, origin=0, requester=0, subject=1)


def test_chain_delivery_counts_hops_and_bytes():
    net, _ = network_for([(0, 0), (200, 0), (400, 0), (600, 0)])
    outcome = net.route(unicast(3), 0)
    assert outcome == Delivered(node=3, hops=3)
    assert net.bytes_total == 3 * 68
    assert net.bytes_total == sum(t.size for t in net.log)
    assert net.sim.now == pytest.approx(3 * 0.005)


def test_partition_drops_no_progress():
    net, _ = network_for([(0, 0), (200, 0), (900, 0)])
    outcome = net.route(unicast(2), 0)
    assert isinstance(outcome, Dropped)
    assert outcome.reason is DropReason.NO_PROGRESS
    assert outcome.at_node == 1
    assert net.drops[DropReason.NO_PROGRESS] == 1


def test_past_deadline_drops():
    net, _ = network_for([(0, 0), (200, 0)])
    outcome = net.route(unicast(1, deadline=-1.0), 0)
    assert outcome == Dropped(DropReason.DEADLINE_EXCEEDED, 0, 0)


def test_geocast_reaches_target_cell():
    net, _ = network_for([(10, 10), (200, 10), (400, 10), (430, 60)])
    packet = Packet(kind=PacketKind.UPDATE, origin=0, requester=0, subject=0, target_cell=RegionId(0, 3, 0))
    outcome = net.route(packet, 0)
    assert isinstance(outcome, Delivered)
    assert outcome.node in (2, 3)


def test_greedy_path_strictly_decreases():
    rng = np.random.default_rng(4)
    points = rng.uniform(0, 1000, size=(150, 2))
    net, _ = network_for(points)
    for target in range(1, 30):
        packet = unicast(target)
        if isinstance(net.route(packet, 0), Delivered):
            assert all(after < before for before, after in packet.progress)


def test_event_queue_fifo_on_ties():
    queue = EventQueue()
    queue.push(1.0, "b")
    queue.push(0.5, "a")
    queue.push(1.0, "c")
    assert [queue.pop()[2] for _ in range(3)] == ["a", "b", "c"]


def test_trace_digest_is_deterministic():
    def trace():
        sim = Simulator()
        seen = []
        for i, t in enumerate([3.0, 1.0, 1.0, 2.0]):
            sim.schedule(t, f"e{i}", seen.append, i)
        sim.run()
        return seen, sim.trace_digest()

    (order_a, digest_a), (order_b, digest_b) = trace(), trace()
    assert order_a == order_b == [1, 2, 3, 0]
    assert digest_a == digest_b


def test_schedule_in_past_rejected():
    sim = Simulator()
    sim.run(until=5.0)
    with pytest.raises(ValueError):
        sim.schedule(1.0, "late", lambda: None)


def test_bytes_between_window():
    net, _ = network_for([(0, 0), (200, 0), (400, 0)])
    net.route(unicast(2), 0)
    assert net.bytes_between(0.0, 0.0) == 68
    assert net.bytes_between(0.001, 1.0) == 68


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
