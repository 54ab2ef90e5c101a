"""Trace files and synthetic workloads.

Trace grammar, one record per line::

    line    := blank | comment | record
    comment := '#' <anything>
    record  := node WS address [WS op] [WS comment]
    node    := decimal linear node id (row * cols + col)
    address := hexadecimal, with or without a 0x prefix
    op      := 'R' | 'W'          (default R)

Records for the same node keep their file order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .types import SimConfig


class TraceError(ValueError):
    """Malformed or out-of-range trace input."""


class TraceRecord(NamedTuple):
    node: int
    address: int
    write: bool = False


def parse_trace(lines: Iterable[str], config: SimConfig, remap: bool = False,
                source: str = "<trace>") -> list[list[tuple[int, bool]]]:
    n = config.num_nodes
    out: list[list[tuple[int, bool]]] = [[] for _ in range(n)]
    for lineno, raw in enumerate(lines, 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) not in (2, 3):
            raise TraceError(f"{source}:{lineno}: expected '<node> <hex address> [R|W]'")
        try:
            node = int(parts[0], 10)
            addr = int(parts[1], 16)
        except ValueError:
            raise TraceError(f"{source}:{lineno}: cannot parse {text!r}") from None
        write = False
        if len(parts) == 3:
            op = parts[2].upper()
            if op not in ("R", "W"):
                raise TraceError(f"{source}:{lineno}: operation must be R or W, got {parts[2]!r}")
            write = op == "W"
        if node < 0:
            raise TraceError(f"{source}:{lineno}: negative node id {node}")
        if remap:
            node %= n
        elif node >= n:
            raise TraceError(f"{source}:{lineno}: node {node} outside {n}-node mesh")
        if not 0 <= addr < config.total_memory_bytes:
            raise TraceError(f"{source}:{lineno}: address {addr:#x} outside memory")
        out[node].append((addr, write))
    return out


def load_trace(path, config: SimConfig, remap: bool = False) -> list[list[tuple[int, bool]]]:
    """Read a trace file into one ordered (address, is_write) list per node."""
    path = Path(path)
    try:
        with path.open() as fh:
            return parse_trace(fh, config, remap, source=str(path))
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc.strerror}") from exc


def write_trace(path, traces: Sequence[Sequence]) -> None:
    """Write per-node sequences, interleaved round-robin across nodes."""
    with Path(path).open("w") as fh:
        fh.write("# node address [R|W]\n")
        depth = max((len(t) for t in traces), default=0)
        for k in range(depth):
            for node, seq in enumerate(traces):
                if k < len(seq):
                    addr, write = seq[k] if isinstance(seq[k], tuple) else (seq[k], False)
                    fh.write(f"{node} {addr:#x}{' W' if write else ''}\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic address generator.

    Memory is split into one equal region per node.  Each access lands in the
    node's own region with probability ``locality_fraction``; otherwise it goes
    to the region of another node in the same sharing group (groups are runs
    of ``sharing_degree`` consecutive node ids).  Within a region, accesses
    draw uniformly from the first ``working_set_lines`` L2 lines.
    """
    accesses_per_node: int = 200
    locality_fraction: float = 0.5
    sharing_degree: int = 4
    seed: int = 0
    working_set_lines: int = 16
    write_fraction: float = 0.0

    def validate(self, config: SimConfig) -> None:
        if self.accesses_per_node < 0:
            raise ValueError("accesses_per_node must be >= 0")
        if not 0.0 <= self.locality_fraction <= 1.0:
            raise ValueError("locality_fraction must lie in [0, 1]")
        if not 1 <= self.sharing_degree <= config.num_nodes:
            raise ValueError("sharing_degree must lie in [1, node count]")
        if self.working_set_lines < 1:
            raise ValueError("working_set_lines must be >= 1")
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write_fraction must lie in [0, 1]")
        region = config.total_memory_bytes // config.num_nodes
        if self.working_set_lines * config.l2.line_size > region:
            raise ValueError("working set does not fit in a node's memory region")


def generate_synthetic(spec: SyntheticSpec, config: SimConfig) -> list[list[tuple[int, bool]]]:
    spec.validate(config)
    n = config.num_nodes
    m = spec.accesses_per_node
    line = config.l2.line_size
    region = config.total_memory_bytes // n
    region -= region % line
    rng = np.random.default_rng(spec.seed)
    g = spec.sharing_degree
    nodes = np.arange(n)
    group_start = nodes // g * g
    group_size = np.minimum(g, n - group_start)

    local = rng.random((n, m)) < spec.locality_fraction
    # partner: another member of the group, uniformly
    pick = rng.integers(0, np.maximum(group_size - 1, 1)[:, None], size=(n, m))
    offset_in_group = (nodes - group_start)[:, None]
    pick = np.where(pick >= offset_in_group, pick + 1, pick)
    pick = np.where(group_size[:, None] > 1, pick, offset_in_group)
    partner = group_start[:, None] + pick
    target = np.where(local, nodes[:, None], partner)
    lines = rng.integers(0, spec.working_set_lines, size=(n, m))
    offsets = rng.integers(0, line, size=(n, m))
    addrs = target * region + lines * line + offsets
    writes = rng.random((n, m)) < spec.write_fraction
    return [list(zip(addrs[i].tolist(), writes[i].tolist())) for i in range(n)]


def parse_synthetic(text: str, **defaults) -> SyntheticSpec:
    """Parse ``m=200,locality=0.5,sharing=4,ws=16,writes=0.1,seed=3``."""
    aliases = {
        "m": "accesses_per_node", "accesses": "accesses_per_node",
        "locality": "locality_fraction", "sharing": "sharing_degree",
        "ws": "working_set_lines", "working_set": "working_set_lines",
        "writes": "write_fraction", "seed": "seed",
    }
    kw = dict(defaults)
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValueError(f"bad synthetic parameter {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        name = aliases.get(key, key)
        if name not in SyntheticSpec.__dataclass_fields__:
            raise ValueError(f"unknown synthetic parameter {key!r}")
        kw[name] = float(value) if name in ("locality_fraction", "write_fraction") else int(value)
    return SyntheticSpec(**kw)
