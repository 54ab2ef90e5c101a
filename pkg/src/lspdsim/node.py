"""Per-node behaviour: the memory-access state machine, packet servicing and
reorder-buffer reassembly.

All of a node's side effects stay inside its own NodeState.  Anything meant
for another node leaves through ``outbox`` as a Packet; the engine numbers and
fragments those between phases.
"""

from __future__ import annotations

import heapq
from collections import deque
from enum import Enum, IntEnum
from typing import Optional

from .cache import (CacheArray, L2Line, install_block, lookup_block,
                    record_access, should_migrate)
from .directory import (DirectoryTable, MemoryModel, dir_remove, dir_update,
                        handle_directory_message)
from .types import (FLAG_REDIRECT, FLAG_TRAP, FLAG_WRITE, MK, Coord, Flit,
                    IncompletePacketError, Packet, SimConfig, reassemble)


class AccessOutcome(Enum):
    L1_HIT = "l1_hit"
    L2_LOCAL_HIT = "l2_local_hit"
    REMOTE_HIT = "remote_hit"
    MEMORY_FILL = "memory_fill"
    TRAPPED = "trapped"


class Stage(IntEnum):
    IDLE = 0
    HIT_STALL = 1
    L1_MISS = 2
    L2_HIT = 3
    WAITING = 4


COUNTERS = (
    "requests_made", "requests_received", "replies_sent", "replies_received",
    "redirections", "traps", "traps_received", "directory_searches", "memory_requests",
    "migrations_out", "migrations_in", "l1_hits", "l1_misses", "l2_hits", "l2_misses",
    "accesses", "packets_sent", "packets_delivered", "latency_sum",
) + tuple(f"outcome_{o.value}" for o in AccessOutcome)

# timed actions
_EV_DIRECTORY, _EV_SERVE, _EV_MEMORY = 0, 1, 2

_ZERO_CACHE: dict[int, bytes] = {}


def _zeros(n: int) -> bytes:
    b = _ZERO_CACHE.get(n)
    if b is None:
        b = _ZERO_CACHE[n] = bytes(n)
    return b


class ProtocolError(AssertionError):
    """A routing or protocol invariant was violated."""


class NodeState:
    def __init__(self, coord: Coord, index: int, config: SimConfig, trace=(),
                 record_accesses: bool = False, record_messages: bool = False):
        self.coord = coord
        self.index = index
        self.config = config
        self.l1 = CacheArray(config.l1)
        depth = config.migration_history_depth if config.migration_enabled else None
        self.l2 = CacheArray(config.l2, history_depth=depth, l2=True)
        self.send_queue: deque[Flit] = deque()
        self.outbox: list[Packet] = []
        self.reorder: dict[int, list] = {}
        self.wait = False
        self.wait_reason: Optional[str] = None
        self.stage = Stage.IDLE
        self.miss_counter = 0
        self.trace = list(trace)
        self.trace_cursor = 0
        # access in progress
        self.cur_addr = 0
        self.cur_write = False
        self.cur_start = 0
        self.events: list = []
        self._event_seq = 0
        self.forward: dict[int, Coord] = {}
        self.deferred_removes: set[int] = set()
        self.directory: Optional[DirectoryTable] = None
        self.memory: Optional[MemoryModel] = None
        if coord == config.directory_node:
            self.directory = DirectoryTable(config.total_memory_bytes, config.l2.line_size)
        if coord == config.memory_node:
            self.memory = MemoryModel(config.memory_latency_cycles)
        self.counters = dict.fromkeys(COUNTERS, 0)
        self.access_log: Optional[list] = [] if record_accesses else None
        self.migration_log: Optional[list] = [] if record_accesses else None
        self.msg_log: Optional[list] = [] if record_messages else None

    # -- bookkeeping -----------------------------------------------------

    def needs_phase1(self) -> bool:
        if self.events:
            return True
        if self.wait:
            return False
        return self.stage != Stage.IDLE or self.trace_cursor < len(self.trace)

    def is_quiet(self) -> bool:
        return (not self.events and not self.wait and self.stage == Stage.IDLE
                and self.trace_cursor >= len(self.trace) and not self.send_queue
                and not self.outbox and not self.reorder)

    def emit(self, kind: MK, dst: Coord, tag: int, aux: Optional[Coord] = None,
             flags: int = 0, data: bytes = b"") -> Packet:
        p = Packet(kind, self.coord, Coord(*dst), tag, aux, flags, data)
        self.outbox.append(p)
        return p

    def schedule(self, ready: int, action: int, packet: Packet) -> None:
        self._event_seq += 1
        heapq.heappush(self.events, (ready, self._event_seq, action, packet))

    def _l1_data(self) -> bytes:
        return _zeros(self.config.l1.line_size)

    def _l2_data(self) -> bytes:
        return _zeros(self.config.l2.line_size)

    def _complete(self, outcome: AccessOutcome, cycle: int) -> None:
        c = self.counters
        c["accesses"] += 1
        c["outcome_" + outcome.value] += 1
        if self.access_log is not None:
            self.access_log.append((self.cur_addr // self.config.l2.line_size, self.cur_start,
                                    cycle, outcome))
        self.wait = False
        self.wait_reason = None
        self.stage = Stage.IDLE

    def _apply_store(self, l1_line) -> None:
        if not self.cur_write:
            return
        if l1_line.owner == self.coord:
            l2_line = self.l2.find(self.cur_addr // self.config.l2.line_size)
            if l2_line is not None:
                l2_line.dirty = True
        else:
            l1_line.written = True

    def _fill_l1(self, owner: Optional[Coord], cycle: int) -> None:
        """Install the current access's L1 line and write back the victim."""
        cfg = self.config
        l1_block = self.cur_addr // cfg.l1.line_size
        ev = install_block(self.l1, l1_block, self._l1_data(), cycle, owner=owner)
        if ev is not None and ev.owner is not None:
            victim_l2_block = ev.block * cfg.l1.line_size // cfg.l2.line_size
            if ev.owner == self.coord:
                if ev.written:
                    line = self.l2.find(victim_l2_block)
                    if line is not None:
                        line.dirty = True
            else:
                self.emit(MK.L1_VICTIM_WRITEBACK, ev.owner, victim_l2_block,
                          flags=FLAG_WRITE if ev.written else 0, data=ev.data)
        self._apply_store(self.l1.find(l1_block))

    def _install_l2(self, block: int, cycle: int, dirty: bool) -> L2Line:
        """Place ``block`` in the local slice and deal with the victim."""
        self.forward.pop(block, None)
        ev = install_block(self.l2, block, self._l2_data(), cycle, owner=self.coord, dirty=dirty)
        if ev is not None:
            old = ev.line
            cfg = self.config
            if old.migrating is not None:
                pass  # the destination already owns the block
            else:
                if old.dir_pending:
                    self.deferred_removes.add(ev.block)
                else:
                    self.emit(MK.DIRECTORY_REMOVE, cfg.directory_node, ev.block)
                if ev.dirty:
                    self.emit(MK.L2_BLOCK_WRITEBACK, cfg.memory_node, ev.block, data=ev.data)
        return self.l2.find(block)


def phase1_step(node: NodeState, cycle: int) -> None:
    """Advance the node's access state machine by one cycle."""
    if node.events and node.events[0][0] <= cycle:
        _run_events(node, cycle)
    if node.wait:
        return
    stage = node.stage
    cfg = node.config
    c = node.counters
    if stage == Stage.IDLE:
        if node.trace_cursor >= len(node.trace):
            return
        addr, is_write = node.trace[node.trace_cursor]
        node.trace_cursor += 1
        node.cur_addr = addr
        node.cur_write = is_write
        node.cur_start = cycle
        if lookup_block(node.l1, addr // cfg.l1.line_size, cycle) is not None:
            c["l1_hits"] += 1
            node._apply_store(node.l1.find(addr // cfg.l1.line_size))
            node._complete(AccessOutcome.L1_HIT, cycle + cfg.l1_hit_latency_cycles - 1)
            if cfg.l1_hit_latency_cycles > 1:
                node.stage = Stage.HIT_STALL
                node.miss_counter = cfg.l1_hit_latency_cycles - 1
        else:
            c["l1_misses"] += 1
            node.stage = Stage.L1_MISS
            node.miss_counter = cfg.l1_miss_penalty_cycles
        return
    if stage == Stage.HIT_STALL:
        node.miss_counter -= 1
        if node.miss_counter <= 0:
            node.stage = Stage.IDLE
        return
    if stage == Stage.L1_MISS:
        if node.miss_counter > 1:
            node.miss_counter -= 1
            return
        block = node.cur_addr // cfg.l2.line_size
        if lookup_block(node.l2, block, cycle) is not None:
            c["l2_hits"] += 1
            record_access(node.l2.find(block), node.coord)
            node.stage = Stage.L2_HIT
            node.miss_counter = cfg.l2_hit_latency_cycles
            if node.miss_counter <= 0:
                _finish_local_hit(node, cycle)
        else:
            c["l2_misses"] += 1
            c["directory_searches"] += 1
            node.emit(MK.DIRECTORY_ACCESS, cfg.directory_node, block)
            node.wait = True
            node.wait_reason = "directory"
            node.stage = Stage.WAITING
        return
    if stage == Stage.L2_HIT:
        node.miss_counter -= 1
        if node.miss_counter <= 0:
            _finish_local_hit(node, cycle)
        return


def _finish_local_hit(node: NodeState, cycle: int) -> None:
    node._fill_l1(node.coord, cycle)
    node._complete(AccessOutcome.L2_LOCAL_HIT, cycle)


def _run_events(node: NodeState, cycle: int) -> None:
    events = node.events
    while events and events[0][0] <= cycle:
        _, _, action, packet = heapq.heappop(events)
        if action == _EV_DIRECTORY:
            _directory_service(node, packet)
        elif action == _EV_SERVE:
            _finish_service(node, packet, cycle)
        elif action == _EV_MEMORY:
            node.counters["replies_sent"] += 1
            node.emit(MK.MEMORY_FETCH_REPLY, packet.src, packet.tag,
                      flags=packet.flags & FLAG_TRAP, data=node._l1_data())


def _directory_service(node: NodeState, packet: Packet) -> None:
    table = node.directory
    kind = packet.kind
    if kind is MK.DIRECTORY_ACCESS:
        reply = handle_directory_message(table, packet, reserve=True)
        node.counters["replies_sent"] += 1
        node.outbox.append(reply)
    elif kind is MK.DIRECTORY_UPDATE:
        dir_update(table, packet.tag, packet.src)
        node.emit(MK.DIRECTORY_UPDATE_ACK, packet.src, packet.tag, aux=packet.src)
        if packet.aux is not None and packet.aux != packet.src:
            node.emit(MK.DIRECTORY_UPDATE_ACK, packet.aux, packet.tag, aux=packet.src)
    elif kind is MK.DIRECTORY_REMOVE:
        dir_remove(table, packet.tag, holder=packet.src)
    else:  # pragma: no cover
        raise ProtocolError(f"directory got {kind.name}")


def _serve_request(node: NodeState, packet: Packet, cycle: int) -> None:
    """A remote access (or a redirected one) reached this node."""
    requester = packet.aux
    line = node.l2.find(packet.tag)
    if line is not None:
        record_access(line, requester)
        line.in_service += 1
        node.schedule(cycle + max(node.config.l2_hit_latency_cycles, 1), _EV_SERVE, packet)
    elif packet.tag in node.forward:
        node.counters["redirections"] += 1
        node.emit(MK.REQUEST_REDIRECTION, node.forward[packet.tag], packet.tag,
                  aux=requester, flags=FLAG_REDIRECT)
    else:
        node.counters["traps"] += 1
        node.emit(MK.TRAP_REPLY, requester, packet.tag)


def _finish_service(node: NodeState, packet: Packet, cycle: int) -> None:
    requester = packet.aux
    node.counters["replies_sent"] += 1
    node.emit(MK.REMOTE_L2_REPLY, requester, packet.tag, aux=node.coord, data=node._l1_data())
    line = node.l2.find(packet.tag)
    if line is None:
        return
    line.in_service -= 1
    lookup_block(node.l2, packet.tag, cycle)
    if line.migrating is not None:
        return
    target = should_migrate(line, node.coord, node.config.migration_enabled)
    if target is not None:
        line.migrating = target
        node.forward[packet.tag] = target
        node.counters["migrations_out"] += 1
        node.emit(MK.L2_BLOCK_MIGRATION, target, packet.tag,
                  flags=FLAG_WRITE if line.dirty else 0, data=line.data)


def handle_incoming_packet(node: NodeState, packet: Packet, cycle: int) -> None:
    """React to a fully reassembled packet; replies go to ``node.outbox``."""
    if packet.dst != node.coord:
        raise ProtocolError(f"{packet.kind.name} for {packet.dst} delivered at {node.coord}")
    cfg = node.config
    c = node.counters
    kind = packet.kind
    if kind in (MK.DIRECTORY_ACCESS, MK.DIRECTORY_UPDATE, MK.DIRECTORY_REMOVE):
        if node.directory is None:
            raise ProtocolError(f"{kind.name} delivered to non-directory node {node.coord}")
        node.schedule(cycle + cfg.directory_latency_cycles, _EV_DIRECTORY, packet)
    elif kind is MK.DIRECTORY_REPLY:
        _expect(node, "directory", packet)
        c["replies_received"] += 1
        c["requests_made"] += 1
        node.emit(MK.REMOTE_L2_ACCESS, packet.aux, packet.tag, aux=node.coord)
        node.wait_reason = "remote"
    elif kind is MK.NEGATIVE_DIRECTORY_REPLY:
        _expect(node, "directory", packet)
        c["replies_received"] += 1
        c["memory_requests"] += 1
        node.emit(MK.MEMORY_FETCH_REQUEST, cfg.memory_node, packet.tag)
        node.wait_reason = "memory"
    elif kind is MK.REMOTE_L2_ACCESS:
        c["requests_received"] += 1
        _serve_request(node, packet, cycle)
    elif kind is MK.REQUEST_REDIRECTION:
        _serve_request(node, packet, cycle)
    elif kind is MK.REMOTE_L2_REPLY:
        _expect(node, "remote", packet)
        c["replies_received"] += 1
        node._fill_l1(packet.aux, cycle)
        node._complete(AccessOutcome.REMOTE_HIT, cycle)
    elif kind is MK.TRAP_REPLY:
        _expect(node, "remote", packet)
        c["traps_received"] += 1
        c["memory_requests"] += 1
        node.emit(MK.MEMORY_FETCH_REQUEST, cfg.memory_node, packet.tag, flags=FLAG_TRAP)
        node.wait_reason = "memory"
    elif kind is MK.MEMORY_FETCH_REQUEST:
        if node.memory is None:
            raise ProtocolError(f"memory fetch delivered to {node.coord}")
        node.memory.fetches += 1
        node.schedule(cycle + node.memory.latency, _EV_MEMORY, packet)
    elif kind is MK.MEMORY_FETCH_REPLY:
        _expect(node, "memory", packet)
        c["replies_received"] += 1
        if packet.flags & FLAG_TRAP:
            # the block may still be on chip elsewhere: keep it out of L2
            node._fill_l1(None, cycle)
            node._complete(AccessOutcome.TRAPPED, cycle)
        else:
            node._install_l2(packet.tag, cycle, dirty=False)
            record_access(node.l2.find(packet.tag), node.coord)
            node._fill_l1(node.coord, cycle)
            node._complete(AccessOutcome.MEMORY_FILL, cycle)
    elif kind is MK.L2_BLOCK_MIGRATION:
        line = node._install_l2(packet.tag, cycle, dirty=bool(packet.flags & FLAG_WRITE))
        line.dir_pending = True
        c["migrations_in"] += 1
        if node.migration_log is not None:
            node.migration_log.append((packet.tag, cycle, packet.src))
        node.emit(MK.DIRECTORY_UPDATE, cfg.directory_node, packet.tag, aux=packet.src)
        node.emit(MK.MIGRATION_ARRIVED, packet.src, packet.tag)
    elif kind is MK.MIGRATION_ARRIVED:
        line = node.l2.find(packet.tag)
        if line is not None and line.migrating == packet.src:
            line.valid = False
    elif kind is MK.DIRECTORY_UPDATE_ACK:
        holder = packet.aux
        if holder == node.coord:
            line = node.l2.find(packet.tag)
            if line is not None:
                line.dir_pending = False
            if packet.tag in node.deferred_removes:
                node.deferred_removes.discard(packet.tag)
                node.emit(MK.DIRECTORY_REMOVE, cfg.directory_node, packet.tag)
        elif node.forward.get(packet.tag) == holder:
            del node.forward[packet.tag]
    elif kind is MK.L1_VICTIM_WRITEBACK:
        line = node.l2.find(packet.tag)
        if line is not None and packet.flags & FLAG_WRITE:
            line.dirty = True
    elif kind is MK.L2_BLOCK_WRITEBACK:
        if node.memory is None:
            raise ProtocolError(f"L2 writeback delivered to {node.coord}")
        node.memory.writebacks += 1
    else:  # pragma: no cover
        raise ProtocolError(f"unhandled kind {kind}")


def _expect(node: NodeState, reason: str, packet: Packet) -> None:
    if not node.wait or node.wait_reason != reason:
        raise ProtocolError(f"{packet.kind.name} at {node.coord} while waiting for {node.wait_reason}")


def reorder_insert(node: NodeState, flit: Flit, cycle: int = 0) -> Optional[Packet]:
    """Stage an ejected flit; return the packet once all its flits are in."""
    if flit.dst != node.coord:
        raise ProtocolError(f"flit for {flit.dst} ejected at {node.coord}")
    if flit.total_flits == 1:
        pkt = reassemble((flit,))
        _delivered(node, pkt, cycle, flit.inject_cycle)
        return pkt
    entry = node.reorder.get(flit.packet_id)
    if entry is None:
        entry = node.reorder[flit.packet_id] = [{}, flit.inject_cycle]
    flits, first_inject = entry
    if flit.flit_id in flits:
        raise IncompletePacketError(f"duplicate flit {flit.flit_id} of packet {flit.packet_id}")
    flits[flit.flit_id] = flit
    if flit.inject_cycle < first_inject:
        entry[1] = flit.inject_cycle
    if len(flits) < flit.total_flits:
        return None
    del node.reorder[flit.packet_id]
    pkt = reassemble(flits.values())
    _delivered(node, pkt, cycle, entry[1])
    return pkt


def _delivered(node: NodeState, pkt: Packet, cycle: int, inject_cycle: int) -> None:
    c = node.counters
    c["packets_delivered"] += 1
    c["latency_sum"] += cycle - inject_cycle
    if node.msg_log is not None:
        node.msg_log.append((cycle, 1, pkt.packet_id, "recv", pkt.kind.short, pkt.src, pkt.dst, pkt.tag))
