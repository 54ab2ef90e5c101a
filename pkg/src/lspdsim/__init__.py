"""Cycle-accurate simulator for a mesh of cores with locally shared,
physically distributed L2 caches (LSPD), a central block directory and
bufferless deflection routing."""

from .cache import CacheArray, install, lookup, should_migrate
from .directory import DirectoryTable, directory_size_bytes, handle_directory_message
from .engine import Simulation, is_finished, run, run_parallel, step
from .node import NodeState, handle_incoming_packet, phase1_step
from .router import RouterState, arbitrate, preferred_direction, transfer
from .stats import StatsReport, build_report, emit_report
from .traffic import SyntheticSpec, generate_synthetic, load_trace
from .types import (CacheGeometry, Coord, Direction, Flit, MessageKind, Packet, SimConfig,
                    flit_count_for, fragment, reassemble)

__version__ = "0.1.0"

__all__ = [
    "CacheArray", "CacheGeometry", "Coord", "Direction", "DirectoryTable", "Flit",
    "MessageKind", "NodeState", "Packet", "RouterState", "SimConfig", "Simulation",
    "StatsReport", "SyntheticSpec", "arbitrate", "build_report", "directory_size_bytes",
    "emit_report", "flit_count_for", "fragment", "generate_synthetic",
    "handle_directory_message", "handle_incoming_packet", "install", "is_finished",
    "load_trace", "lookup", "phase1_step", "preferred_direction", "reassemble", "run",
    "run_parallel", "should_migrate", "step", "transfer",
]
