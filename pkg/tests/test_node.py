import pytest

from lspdsim.node import (AccessOutcome, NodeState, ProtocolError, Stage,
                          handle_incoming_packet, phase1_step, reorder_insert)
from lspdsim.types import (FLAG_TRAP, MK, Coord, IncompletePacketError, Packet, SimConfig,
                           fragment)

CFG = SimConfig(mesh_rows=2, mesh_cols=2, directory_node=Coord(1, 1))
ME = Coord(0, 0)


def node(trace=(), cfg=CFG, coord=ME):
    return NodeState(coord, cfg.node_index(coord), cfg, trace, record_accesses=True)


def run_until_wait(n, start=0, limit=20):
    for cycle in range(start, start + limit):
        phase1_step(n, cycle)
        if n.wait:
            return cycle
    raise AssertionError("node never blocked")


def test_l1_miss_penalty_then_directory_access():
    n = node([(0x100, False)])
    phase1_step(n, 0)
    assert n.stage == Stage.L1_MISS and n.counters["l1_misses"] == 1
    phase1_step(n, 1)
    assert not n.outbox
    phase1_step(n, 2)
    assert [p.kind for p in n.outbox] == [MK.DIRECTORY_ACCESS]
    assert n.outbox[0].dst == Coord(1, 1) and n.outbox[0].tag == 0x100 // 64
    assert n.wait and n.wait_reason == "directory"
    assert n.counters["directory_searches"] == 1


def test_memory_fill_then_hits():
    n = node([(0x100, False), (0x104, False), (0x120, True)])
    run_until_wait(n)
    n.outbox.clear()
    handle_incoming_packet(n, Packet(MK.NEGATIVE_DIRECTORY_REPLY, Coord(1, 1), ME, 4), 5)
    assert [p.kind for p in n.outbox] == [MK.MEMORY_FETCH_REQUEST]
    handle_incoming_packet(n, Packet(MK.MEMORY_FETCH_REPLY, Coord(1, 1), ME, 4), 9)
    assert not n.wait and n.l2.find(4) is not None
    phase1_step(n, 10)                         # 0x104: L1 hit
    assert n.counters["l1_hits"] == 1
    phase1_step(n, 11)                         # 0x120: other L1 line, same L2 block
    for c in range(12, 12 + CFG.l1_miss_penalty_cycles + CFG.l2_hit_latency_cycles):
        phase1_step(n, c)
    assert n.counters["l2_hits"] == 1 and n.stage == Stage.IDLE
    assert n.l2.find(4).dirty                  # store reached the local slice
    outcomes = [e[3] for e in n.access_log]
    assert outcomes == [AccessOutcome.MEMORY_FILL, AccessOutcome.L1_HIT,
                        AccessOutcome.L2_LOCAL_HIT]
    assert n.access_log[2][1:3] == (11, 11 + CFG.l1_miss_penalty_cycles + CFG.l2_hit_latency_cycles)


def test_remote_path_counters():
    n = node([(0x100, False)])
    run_until_wait(n)
    n.outbox.clear()
    holder = Coord(0, 1)
    handle_incoming_packet(n, Packet(MK.DIRECTORY_REPLY, Coord(1, 1), ME, 4, aux=holder), 5)
    ra = n.outbox[-1]
    assert (ra.kind, ra.dst, ra.aux) == (MK.REMOTE_L2_ACCESS, holder, ME)
    handle_incoming_packet(n, Packet(MK.REMOTE_L2_REPLY, holder, ME, 4, aux=holder), 20)
    c = n.counters
    assert (c["requests_made"], c["replies_received"]) == (1, 2)
    assert n.l1.find(0x100 // 32).owner == holder
    assert n.l2.find(4) is None


def test_unexpected_reply_is_protocol_error():
    n = node()
    with pytest.raises(ProtocolError):
        handle_incoming_packet(n, Packet(MK.REMOTE_L2_REPLY, Coord(0, 1), ME, 4), 0)
    with pytest.raises(ProtocolError):
        handle_incoming_packet(n, Packet(MK.DIRECTORY_ACCESS, Coord(0, 1), ME, 4), 0)


def serving_node(history_depth=10):
    cfg = CFG.with_(migration_history_depth=history_depth)
    n = node(cfg=cfg)
    n.trace = [(0x100, False)]
    run_until_wait(n)
    handle_incoming_packet(n, Packet(MK.NEGATIVE_DIRECTORY_REPLY, Coord(1, 1), ME, 4), 3)
    handle_incoming_packet(n, Packet(MK.MEMORY_FETCH_REPLY, Coord(1, 1), ME, 4), 4)
    n.outbox.clear()
    return n


def test_remote_request_served_after_l2_latency():
    n = serving_node()
    req = Coord(1, 0)
    handle_incoming_packet(n, Packet(MK.REMOTE_L2_ACCESS, req, ME, 4, aux=req), 10)
    assert n.counters["requests_received"] == 1 and not n.outbox
    phase1_step(n, 10)
    assert not n.outbox
    phase1_step(n, 10 + CFG.l2_hit_latency_cycles)
    rep = n.outbox[0]
    assert (rep.kind, rep.dst, rep.aux) == (MK.REMOTE_L2_REPLY, req, ME)
    assert n.counters["replies_sent"] == 1


def test_migration_after_serving_and_redirect():
    n = serving_node(history_depth=1)
    req = Coord(1, 0)
    handle_incoming_packet(n, Packet(MK.REMOTE_L2_ACCESS, req, ME, 4, aux=req), 10)
    phase1_step(n, 11)
    kinds = [p.kind for p in n.outbox]
    assert kinds == [MK.REMOTE_L2_REPLY, MK.L2_BLOCK_MIGRATION]
    assert n.l2.find(4).migrating == req and n.forward[4] == req
    n.outbox.clear()
    handle_incoming_packet(n, Packet(MK.MIGRATION_ARRIVED, req, ME, 4), 30)
    assert n.l2.find(4) is None
    other = Coord(0, 1)
    handle_incoming_packet(n, Packet(MK.REMOTE_L2_ACCESS, other, ME, 4, aux=other), 31)
    rr = n.outbox.pop()
    assert (rr.kind, rr.dst, rr.aux) == (MK.REQUEST_REDIRECTION, req, other)
    assert n.counters["redirections"] == 1
    handle_incoming_packet(n, Packet(MK.DIRECTORY_UPDATE_ACK, Coord(1, 1), ME, 4, aux=req), 32)
    assert 4 not in n.forward
    handle_incoming_packet(n, Packet(MK.REMOTE_L2_ACCESS, other, ME, 4, aux=other), 33)
    assert n.outbox.pop().kind is MK.TRAP_REPLY


def test_migration_arrival_registers_with_directory():
    n = node()
    src = Coord(1, 0)
    handle_incoming_packet(n, Packet(MK.L2_BLOCK_MIGRATION, src, ME, 4, data=bytes(64)), 5)
    line = n.l2.find(4)
    assert line.dir_pending
    assert [(p.kind, p.dst) for p in n.outbox] == [(MK.DIRECTORY_UPDATE, Coord(1, 1)),
                                                   (MK.MIGRATION_ARRIVED, src)]
    handle_incoming_packet(n, Packet(MK.DIRECTORY_UPDATE_ACK, Coord(1, 1), ME, 4, aux=ME), 9)
    assert not line.dir_pending
    assert n.migration_log == [(4, 5, src)]


def test_trap_recovery_fills_l1_only():
    n = node([(0x100, False)])
    run_until_wait(n)
    holder = Coord(0, 1)
    handle_incoming_packet(n, Packet(MK.DIRECTORY_REPLY, Coord(1, 1), ME, 4, aux=holder), 3)
    handle_incoming_packet(n, Packet(MK.TRAP_REPLY, holder, ME, 4), 8)
    mfq = n.outbox[-1]
    assert mfq.kind is MK.MEMORY_FETCH_REQUEST and mfq.flags & FLAG_TRAP
    handle_incoming_packet(n, Packet(MK.MEMORY_FETCH_REPLY, Coord(1, 1), ME, 4, flags=FLAG_TRAP), 60)
    assert n.l2.find(4) is None and n.l1.find(0x100 // 32) is not None
    assert n.counters["traps_received"] == 1 and n.counters["memory_requests"] == 1
    assert n.access_log[-1][3] is AccessOutcome.TRAPPED


def test_directory_node_services_after_latency():
    d = node(coord=Coord(1, 1))
    handle_incoming_packet(d, Packet(MK.DIRECTORY_ACCESS, ME, Coord(1, 1), 4), 10)
    phase1_step(d, 10)
    assert not d.outbox
    phase1_step(d, 11)
    assert d.outbox[0].kind is MK.NEGATIVE_DIRECTORY_REPLY
    assert d.counters["replies_sent"] == 1


def flits_of(kind, pid=3):
    p = Packet(kind, Coord(1, 0), ME, tag=4, packet_id=pid)
    fs = fragment(p, CFG)
    for i, f in enumerate(fs):
        f.inject_cycle = 10 + i
    return p, fs


def test_reorder_buffer_out_of_order():
    n = node()
    p, fs = flits_of(MK.REMOTE_L2_ACCESS)
    for f in (fs[2], fs[0], fs[3]):
        assert reorder_insert(n, f, 20) is None
    assert reorder_insert(n, fs[1], 25) == p
    assert not n.reorder
    assert n.counters["latency_sum"] == 25 - 10


def test_reorder_buffer_rejects_duplicates_and_strays():
    n = node()
    _, fs = flits_of(MK.REMOTE_L2_ACCESS)
    reorder_insert(n, fs[0], 1)
    with pytest.raises(IncompletePacketError):
        reorder_insert(n, fs[0], 2)
    stray = fragment(Packet(MK.DIRECTORY_ACCESS, ME, Coord(1, 1), packet_id=9), CFG)[0]
    with pytest.raises(ProtocolError):
        reorder_insert(n, stray, 3)


def test_interleaved_packets_reassemble_independently():
    n = node()
    p1, a = flits_of(MK.REMOTE_L2_ACCESS, pid=1)
    p2, b = flits_of(MK.REMOTE_L2_ACCESS, pid=2)
    got = [reorder_insert(n, f, 0) for pair in zip(a, b) for f in pair]
    assert [x for x in got if x is not None] == [p1, p2]
