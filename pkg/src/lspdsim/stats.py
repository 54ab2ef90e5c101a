"""Statistics aggregation and report serialisation.

CSV layout (schema version 1), one row per node followed by one ``total`` row::

    scope,row,col,Req-made,Req-rcvd,Reply-sent,Reply-rcvd,Trap,Redirection,
    Dir-Srch,Mem-Req,Trap-rcvd,Migrations-out,Migrations-in,L1-hits,L1-misses,
    L2-hits,L2-misses,Accesses,Packets-sent,Packets-delivered,Flit-hops,
    Deflections,total_cycles,average_packet_latency,termination_reason

The last three columns are filled on the ``total`` row only.

Counter meanings:
  Req-made      remote L2 accesses (RA) issued by a requester; memory fetches excluded
  Req-rcvd      RA packets arriving at their first target (redirected copies excluded)
  Reply-sent    DR, negative DR, remote-L2 replies and memory-fetch replies emitted
  Reply-rcvd    the same four kinds, on arrival
  Trap          trap replies emitted (Trap-rcvd counts their arrival)
  Redirection   requests forwarded to a block's new holder
  Dir-Srch      directory accesses issued
  Mem-Req       memory fetch requests issued, including trap recovery
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import TextIO

SCHEMA_VERSION = 1

# (column label, node counter key)
COLUMNS = (
    ("Req-made", "requests_made"),
    ("Req-rcvd", "requests_received"),
    ("Reply-sent", "replies_sent"),
    ("Reply-rcvd", "replies_received"),
    ("Trap", "traps"),
    ("Redirection", "redirections"),
    ("Dir-Srch", "directory_searches"),
    ("Mem-Req", "memory_requests"),
    ("Trap-rcvd", "traps_received"),
    ("Migrations-out", "migrations_out"),
    ("Migrations-in", "migrations_in"),
    ("L1-hits", "l1_hits"),
    ("L1-misses", "l1_misses"),
    ("L2-hits", "l2_hits"),
    ("L2-misses", "l2_misses"),
    ("Accesses", "accesses"),
    ("Packets-sent", "packets_sent"),
    ("Packets-delivered", "packets_delivered"),
    ("Flit-hops", "flit_hops"),
    ("Deflections", "deflections"),
)
CORE_COLUMNS = ("Req-made", "Req-rcvd", "Reply-sent", "Reply-rcvd", "Trap",
                    "Redirection", "Dir-Srch", "Mem-Req")
SUMMARY_COLUMNS = ("total_cycles", "average_packet_latency", "termination_reason")


@dataclass
class StatsReport:
    rows: int
    cols: int
    per_node: list[dict]
    totals: dict
    total_cycles: int
    average_packet_latency: float
    termination_reason: str
    extra: dict = field(default_factory=dict)

    def __getattr__(self, name):
        totals = self.__dict__.get("totals")
        if totals is not None and name in totals:
            return totals[name]
        raise AttributeError(name)

    @property
    def migrations(self) -> int:
        return self.totals["migrations_in"]

    @property
    def total_flit_hops(self) -> int:
        return self.totals["flit_hops"]

    @property
    def total_deflections(self) -> int:
        return self.totals["deflections"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        emit_report(self, "csv", buf)
        return buf.getvalue()


def build_report(sim) -> StatsReport:
    cfg = sim.config
    per_node = []
    keys = [k for _, k in COLUMNS]
    for node, router in zip(sim.nodes, sim.routers):
        d = dict(node.counters)
        d["flit_hops"] = router.flit_hops
        d["deflections"] = router.deflections
        per_node.append(d)
    totals = {k: 0 for k in keys}
    for k in list(per_node[0]) if per_node else ():
        totals[k] = sum(d[k] for d in per_node)
    delivered = totals["packets_delivered"]
    avg = totals["latency_sum"] / delivered if delivered else 0.0
    extra = {}
    if sim.memory is not None:
        extra["memory_fetches"] = sim.memory.fetches
        extra["memory_writebacks"] = sim.memory.writebacks
    return StatsReport(cfg.mesh_rows, cfg.mesh_cols, per_node, totals, sim.cycle, avg,
                       sim.termination_reason or "running", extra)


def _fmt_latency(x: float) -> str:
    return repr(round(x, 6))


def emit_report(report: StatsReport, fmt: str, sink: TextIO) -> None:
    """Write ``report`` to ``sink`` as ``table``, ``csv`` or ``json``."""
    if fmt == "csv":
        w = csv.writer(sink, lineterminator="\n")
        w.writerow(["scope", "row", "col"] + [c for c, _ in COLUMNS] + list(SUMMARY_COLUMNS))
        for i, d in enumerate(report.per_node):
            r, c = divmod(i, report.cols)
            w.writerow(["node", r, c] + [d[k] for _, k in COLUMNS] + ["", "", ""])
        w.writerow(["total", "", ""] + [report.totals[k] for _, k in COLUMNS]
                   + [report.total_cycles, _fmt_latency(report.average_packet_latency),
                      report.termination_reason])
    elif fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "mesh": [report.rows, report.cols],
            "termination_reason": report.termination_reason,
            "total_cycles": report.total_cycles,
            "average_packet_latency": round(report.average_packet_latency, 6),
            "totals": {c: report.totals[k] for c, k in COLUMNS},
            "extra": report.extra,
            "per_node": [{c: d[k] for c, k in COLUMNS} for d in report.per_node],
        }
        json.dump(doc, sink, indent=1, sort_keys=False)
        sink.write("\n")
    elif fmt == "table":
        sink.write(f"mesh {report.rows}x{report.cols}  cycles {report.total_cycles}  "
                   f"termination {report.termination_reason}\n")
        width = max(len(c) for c, _ in COLUMNS)
        for c, k in COLUMNS:
            sink.write(f"  {c:<{width}}  {report.totals[k]:>12}\n")
        sink.write(f"  {'Avg-pkt-latency':<{width}}  {report.average_packet_latency:>12.3f}\n")
        for k, v in report.extra.items():
            sink.write(f"  {k:<{width}}  {v:>12}\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
