"""Three-phase cycle driver with serial and barrier-parallel executors.

Per cycle:
  1. every node advances its memory-access state machine,
  2. every router arbitrates its input flits onto output ports,
  3. every router pulls flits from its neighbours, ejects to its core
     (reassembly and packet handling) and injects from the send queue.

Packets created during a phase are numbered by the driver after the phase
barrier, in row-major node order, so ids (and therefore arbitration ties)
never depend on how work was spread over threads.  Only routers and nodes
with something to do are visited; the active sets are derived from state
after each barrier, so they are identical for every worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .node import NodeState, handle_incoming_packet, phase1_step, reorder_insert
from .router import RouterState, arbitrate, inject, mesh_neighbors, pull_inputs
from .types import SimConfig, emission_class, fragment

log = logging.getLogger(__name__)


class InvariantViolation(AssertionError):
    pass


class Simulation:
    def __init__(self, config: SimConfig, traces: Sequence[Sequence] = (),
                 record_accesses: bool = False, record_messages: bool = False,
                 check_invariants: bool = False):
        self.config = config
        n = config.num_nodes
        traces = list(traces)
        if len(traces) > n:
            raise ValueError(f"{len(traces)} traces for {n} nodes")
        traces += [()] * (n - len(traces))
        neigh = mesh_neighbors(config.mesh_rows, config.mesh_cols)
        self.nodes = [NodeState(config.coord_of(i), i, config, _normalise(traces[i]),
                                record_accesses, record_messages) for i in range(n)]
        self.routers = [RouterState(config.coord_of(i), neigh[i]) for i in range(n)]
        self.cycle = 0
        self.next_packet_id = 0
        self.termination_reason: Optional[str] = None
        self.check_invariants = check_invariants
        self.record_messages = record_messages
        self.send_log: list = []
        self.flits_in_network = 0
        # active sets (sorted index lists)
        self._awake = set(i for i, nd in enumerate(self.nodes) if nd.needs_phase1())
        self._route = set()       # routers holding input flits
        self._stale = set()       # routers whose outputs must be cleared
        self._sending = set()     # nodes with a non-empty send queue
        self.executor: Optional[ThreadPoolExecutor] = None
        self.workers = 1
        self._blocks: list[range] = [range(n)]

    # -- convenience accessors ------------------------------------------

    @property
    def directory(self):
        return self.node_at(self.config.directory_node).directory

    @property
    def memory(self):
        return self.node_at(self.config.memory_node).memory

    def node_at(self, coord) -> NodeState:
        return self.nodes[self.config.node_index(coord)]

    def router_at(self, coord) -> RouterState:
        return self.routers[self.config.node_index(coord)]

    def add_accesses(self, index: int, accesses) -> None:
        """Append accesses to a node's trace mid-run (for scripted scenarios)."""
        node = self.nodes[index]
        node.trace.extend(_normalise(accesses))
        if node.needs_phase1():
            self._awake.add(index)

    # -- parallel plumbing -----------------------------------------------

    def set_workers(self, workers: int) -> None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if self.executor is not None:
            self.executor.shutdown()
            self.executor = None
        self.workers = workers
        n = len(self.nodes)
        size = -(-n // workers)
        self._blocks = [range(s, min(s + size, n)) for s in range(0, n, size)]
        if workers > 1:
            self.executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="lspdsim")

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()
            self.executor = None

    def _map(self, fn, indices: list[int]) -> list:
        """Apply ``fn`` to every index; returns per-block results.  Acts as a barrier."""
        if self.executor is None or len(indices) < 2:
            return [fn(indices)]
        parts = []
        lo = 0
        for block in self._blocks:
            hi = lo
            while hi < len(indices) and indices[hi] < block.stop:
                hi += 1
            if hi > lo:
                parts.append(indices[lo:hi])
            lo = hi
        return list(self.executor.map(fn, parts))

    # -- phases ------------------------------------------------------------

    def _phase1(self, idx: list[int]) -> None:
        nodes = self.nodes
        cycle = self.cycle
        for i in idx:
            phase1_step(nodes[i], cycle)

    def _phase2(self, idx: list[int]) -> tuple[list[int], list[int]]:
        """Arbitrate; returns (phase-3 targets, routers left holding outputs)."""
        routers = self.routers
        targets = []
        stale = []
        for i in idx:
            r = routers[i]
            moved = arbitrate(r)
            if not moved:
                continue
            if r.eject_slot is not None:
                targets.append(i)
            outs = r.outputs
            nb = r.neighbors
            has_out = False
            for d in (0, 1, 2, 3):
                if outs[d] is not None:
                    targets.append(nb[d])
                    has_out = True
            if has_out:
                stale.append(i)
        return targets, stale

    def _phase3(self, idx: list[int]) -> tuple[int, int, list[int]]:
        """Pull, eject, inject; returns (injected, ejected, routers now holding flits)."""
        routers = self.routers
        nodes = self.nodes
        cycle = self.cycle
        injected = ejected = 0
        loaded = []
        for i in idx:
            r = routers[i]
            n = pull_inputs(r, routers)
            f = r.eject_slot
            node = nodes[i]
            if f is not None:
                r.eject_slot = None
                r.ejected += 1
                ejected += 1
                pkt = reorder_insert(node, f, cycle)
                if pkt is not None:
                    handle_incoming_packet(node, pkt, cycle)
            if node.send_queue:
                k = inject(r, node.send_queue, cycle)
                injected += k
                n += k
            if n:
                loaded.append(i)
        return injected, ejected, loaded

    def _dispatch_outboxes(self, indices, rank: int) -> None:
        """Number and fragment packets staged by the given nodes, row-major."""
        cfg = self.config
        for i in sorted(indices):
            node = self.nodes[i]
            if not node.outbox:
                continue
            box = node.outbox
            node.outbox = []
            if len(box) > 1:
                box.sort(key=lambda p: emission_class(p.kind))
            for p in box:
                p.packet_id = self.next_packet_id
                self.next_packet_id += 1
                p.created = self.cycle
                node.counters["packets_sent"] += 1
                node.send_queue.extend(fragment(p, cfg))
                if self.record_messages:
                    self.send_log.append((self.cycle, rank, p.packet_id, "send", p.kind.short,
                                          p.src, p.dst, p.tag))
            self._sending.add(i)

    def step(self) -> None:
        cycle = self.cycle
        # phase 1
        awake = sorted(self._awake)
        self._map(self._phase1, awake)
        self._dispatch_outboxes(awake, 0)
        # phase 2
        p2 = sorted(self._route | self._stale)
        targets = set()
        stale = set()
        for t, st in self._map(self._phase2, p2):
            targets.update(t)
            stale.update(st)
        self._stale = stale
        # phase 3
        p3 = sorted(targets | self._sending)
        injected = ejected = 0
        route = set()
        for inj, ej, loaded in self._map(self._phase3, p3):
            injected += inj
            ejected += ej
            route.update(loaded)
        self._dispatch_outboxes(p3, 2)
        self._route = route
        nodes = self.nodes
        self._sending = set(i for i in self._sending if nodes[i].send_queue)
        awake = self._awake
        awake.update(p3)
        self._awake = set(i for i in awake if nodes[i].needs_phase1())
        before = self.flits_in_network
        self.flits_in_network = before + injected - ejected
        if self.check_invariants:
            self._check(before, injected, ejected)
        self.cycle = cycle + 1

    # -- termination -----------------------------------------------------

    def is_finished(self) -> bool:
        if self.flits_in_network or self._sending or self._awake:
            return False
        return all(nd.is_quiet() for nd in self.nodes) and not any(
            r.eject_slot is not None for r in self.routers)

    def run(self, workers: int = 1):
        from .stats import build_report
        self.set_workers(workers)
        try:
            while True:
                if self.is_finished():
                    self.termination_reason = "drained"
                    break
                if self.cycle >= self.config.max_sim_cycles:
                    self.termination_reason = "cycle-cap"
                    break
                self.step()
        finally:
            self.close()
        log.info("simulation ended after %d cycles (%s)", self.cycle, self.termination_reason)
        return build_report(self)

    # -- instrumentation ---------------------------------------------------

    def count_flits(self) -> int:
        n = 0
        for r in self.routers:
            n += sum(f is not None for f in r.inputs) + (r.eject_slot is not None)
        return n

    def _check(self, before: int, injected: int, ejected: int) -> None:
        actual = self.count_flits()
        if actual != self.flits_in_network:
            raise InvariantViolation(
                f"cycle {self.cycle}: {actual} flits in routers, expected "
                f"{before} + {injected} - {ejected}")
        holders: dict[int, int] = {}
        for i, node in enumerate(self.nodes):
            for block, line in node.l2.valid_lines():
                if line.migrating is not None:
                    continue
                if block in holders:
                    raise InvariantViolation(
                        f"cycle {self.cycle}: block {block} resident at nodes {holders[block]} and {i}")
                holders[block] = i

    def resident_blocks(self) -> dict[int, object]:
        out = {}
        for node in self.nodes:
            for block, line in node.l2.valid_lines():
                if line.migrating is None:
                    out[block] = node.coord
        return out

    def check_directory_agreement(self) -> list[str]:
        """Mismatches between the directory and the L2 contents (call when drained)."""
        problems = []
        resident = self.resident_blocks()
        entries = dict(self.directory.entries())
        for block, holder in resident.items():
            if entries.get(block) != holder:
                problems.append(f"block {block} at {holder}, directory says {entries.get(block)}")
        for block, holder in entries.items():
            if block not in resident:
                problems.append(f"directory has block {block} at {holder}, not resident anywhere")
        return problems

    def message_log(self) -> list[tuple]:
        """(cycle, event, packet_id, kind, src, dst, tag) in occurrence order.

        Within a cycle: phase-one sends, then deliveries, then phase-three sends.
        """
        recv = [e for node in self.nodes for e in (node.msg_log or ())]
        merged = sorted(self.send_log + recv, key=lambda e: e[:3])
        return [(e[0],) + e[3:] for e in merged]


def _normalise(trace) -> list[tuple[int, bool]]:
    out = []
    for item in trace:
        if isinstance(item, tuple):
            out.append((int(item[0]), bool(item[1])))
        else:
            out.append((int(item), False))
    return out


def step(sim: Simulation) -> None:
    sim.step()


def is_finished(sim: Simulation) -> bool:
    return sim.is_finished()


def run(sim: Simulation):
    return sim.run(workers=1)


def run_parallel(sim: Simulation, workers: int):
    return sim.run(workers=workers)
