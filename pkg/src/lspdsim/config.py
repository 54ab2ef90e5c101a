"""Run configuration: a flat ``key = value`` file plus command-line overrides.

Recognised keys (``#`` starts a comment, blank lines ignored)::

    mesh               RxC, e.g. 8x8 (or mesh_rows / mesh_cols)
    memory_bytes       total simulated memory in bytes
    l1, l2             sets,assoc,line_size  e.g. 128,4,32
    l1_hit_latency     cycles
    l1_miss_penalty    cycles
    l2_hit_latency     cycles
    memory_latency     cycles
    directory_latency  cycles
    history_depth      migration history length N
    migration          on | off
    directory_node     row,col
    memory_node        row,col
    max_cycles         cycle cap
    seed               seed for synthetic traffic
    workers            parallel worker count
    trace              path to a trace file
    trace_remap        on | off (fold node ids modulo the node count)
    synthetic          m=200,locality=0.5,sharing=4,ws=16,writes=0
    format             table | csv | json
    output             report path (default stdout)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .traffic import SyntheticSpec, parse_synthetic
from .types import CacheGeometry, Coord, SimConfig


class ConfigError(ValueError):
    pass


KEYS = {
    "mesh", "mesh_rows", "mesh_cols", "memory_bytes", "l1", "l2", "l1_hit_latency",
    "l1_miss_penalty", "l2_hit_latency", "memory_latency", "directory_latency",
    "history_depth", "migration", "directory_node", "memory_node", "max_cycles", "seed",
    "workers", "trace", "trace_remap", "synthetic", "format", "output",
}


@dataclass
class RunConfig:
    sim: SimConfig
    trace: Optional[str] = None
    trace_remap: bool = False
    synthetic: Optional[SyntheticSpec] = None
    workers: int = 1
    format: str = "table"
    output: Optional[str] = None
    raw: dict = field(default_factory=dict)


def read_config_file(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _bool(key, v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "on", "true", "yes"):
        return True
    if v in ("0", "off", "false", "no"):
        return False
    raise ConfigError(f"{key}: expected on/off, got {v!r}")


def _int(key, v: str) -> int:
    try:
        return int(v, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _pair(key, v: str, sep=",") -> tuple[int, int]:
    parts = v.lower().replace("x", sep).split(sep) if sep == "x" else v.split(sep)
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two values, got {v!r}")
    return _int(key, parts[0]), _int(key, parts[1])


def _geometry(key, v: str) -> CacheGeometry:
    parts = v.split(",")
    if len(parts) != 3:
        raise ConfigError(f"{key}: expected sets,assoc,line_size, got {v!r}")
    try:
        return CacheGeometry(*(_int(key, p) for p in parts))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def build_run_config(values: dict[str, str]) -> RunConfig:
    """Validate raw key/value pairs into a RunConfig."""
    kw = {}
    v = values
    if "mesh" in v:
        kw["mesh_rows"], kw["mesh_cols"] = _pair("mesh", v["mesh"], sep="x")
    for key in ("mesh_rows", "mesh_cols"):
        if key in v:
            kw[key] = _int(key, v[key])
    simple = {
        "memory_bytes": "total_memory_bytes", "l1_hit_latency": "l1_hit_latency_cycles",
        "l1_miss_penalty": "l1_miss_penalty_cycles", "l2_hit_latency": "l2_hit_latency_cycles",
        "memory_latency": "memory_latency_cycles", "directory_latency": "directory_latency_cycles",
        "history_depth": "migration_history_depth", "max_cycles": "max_sim_cycles",
        "seed": "rng_seed",
    }
    for key, name in simple.items():
        if key in v:
            kw[name] = _int(key, v[key])
    for key in ("l1", "l2"):
        if key in v:
            kw[key] = _geometry(key, v[key])
    if "migration" in v:
        kw["migration_enabled"] = _bool("migration", v["migration"])
    for key in ("directory_node", "memory_node"):
        if key in v:
            kw[key] = Coord(*_pair(key, v[key]))
    try:
        sim = SimConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    rc = RunConfig(sim=sim, raw=dict(values))
    if "trace" in v and "synthetic" in v:
        raise ConfigError("choose either a trace or synthetic traffic, not both")
    rc.trace = v.get("trace")
    if "trace_remap" in v:
        rc.trace_remap = _bool("trace_remap", v["trace_remap"])
    if "synthetic" in v:
        try:
            # default sharing degree shrinks to fit small meshes
            rc.synthetic = parse_synthetic(v["synthetic"], seed=sim.rng_seed,
                                           sharing_degree=min(4, sim.num_nodes))
            rc.synthetic.validate(sim)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"synthetic: {exc}") from None
    if "workers" in v:
        rc.workers = _int("workers", v["workers"])
        if rc.workers < 1:
            raise ConfigError("workers must be >= 1")
    if "format" in v:
        if v["format"] not in ("table", "csv", "json"):
            raise ConfigError(f"format must be table, csv or json, got {v['format']!r}")
        rc.format = v["format"]
    rc.output = v.get("output")
    return rc
