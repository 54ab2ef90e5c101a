"""Command-line front end.

Exit codes: 0 drained, 2 cycle cap reached, 3 configuration error, 4 trace error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, build_run_config, read_config_file
from .engine import Simulation
from .stats import emit_report
from .traffic import TraceError, generate_synthetic, load_trace

EXIT_DRAINED = 0
EXIT_CYCLE_CAP = 2
EXIT_CONFIG = 3
EXIT_TRACE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lspdsim",
                description="Cycle-accurate LSPD cache / bufferless mesh simulator.")
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--mesh", help="mesh size RxC, e.g. 8x8")
    p.add_argument("--memory-bytes", dest="memory_bytes")
    p.add_argument("--l1", help="L1 geometry sets,assoc,line")
    p.add_argument("--l2", help="L2 slice geometry sets,assoc,line")
    p.add_argument("--l1-hit-latency", dest="l1_hit_latency")
    p.add_argument("--l1-miss-penalty", dest="l1_miss_penalty")
    p.add_argument("--l2-hit-latency", dest="l2_hit_latency")
    p.add_argument("--memory-latency", dest="memory_latency")
    p.add_argument("--directory-latency", dest="directory_latency")
    p.add_argument("--history-depth", dest="history_depth")
    p.add_argument("--directory-node", dest="directory_node", help="row,col")
    p.add_argument("--memory-node", dest="memory_node", help="row,col")
    mig = p.add_mutually_exclusive_group()
    mig.add_argument("--migration", dest="migration", action="store_const", const="on")
    mig.add_argument("--no-migration", dest="migration", action="store_const", const="off")
    p.add_argument("--seed")
    p.add_argument("--workers")
    p.add_argument("--max-cycles", dest="max_cycles")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", help="trace file")
    src.add_argument("--synthetic", help="e.g. m=200,locality=0.5,sharing=4,ws=16")
    p.add_argument("--trace-remap", dest="trace_remap", action="store_const", const="on",
                   help="fold trace node ids modulo the node count")
    p.add_argument("--format", choices=("table", "csv", "json"))
    p.add_argument("--output", "-o")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        values = read_config_file(args.config) if args.config else {}
        for key, val in vars(args).items():
            if key in ("config", "verbose") or val is None:
                continue
            values[key] = val
        if args.trace:
            values.pop("synthetic", None)
        elif args.synthetic:
            values.pop("trace", None)
        rc = build_run_config(values)
    except ConfigError as exc:
        print(f"lspdsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if rc.trace:
            traces = load_trace(rc.trace, rc.sim, remap=rc.trace_remap)
        elif rc.synthetic is not None:
            traces = generate_synthetic(rc.synthetic, rc.sim)
        else:
            traces = []
    except TraceError as exc:
        print(f"lspdsim: trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE

    sim = Simulation(rc.sim, traces)
    report = sim.run(workers=rc.workers)
    try:
        if rc.output:
            with open(rc.output, "w", newline="") as fh:
                emit_report(report, rc.format, fh)
        else:
            emit_report(report, rc.format, sys.stdout)
    except OSError as exc:
        print(f"lspdsim: cannot write report: {exc}", file=sys.stderr)
        return 1
    return EXIT_DRAINED if report.termination_reason == "drained" else EXIT_CYCLE_CAP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
