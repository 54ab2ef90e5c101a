"""Centralised block-location directory and the memory controller model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .types import MK, Coord, Packet

ENTRY_BYTES = 4  # two signed 16-bit coordinates


def directory_size_bytes(total_memory_bytes: int, l2_line_size: int) -> int:
    """Bytes needed by a location array with one 2x16-bit entry per L2 block."""
    if total_memory_bytes % l2_line_size:
        raise ValueError("line size must divide memory size")
    return total_memory_bytes // l2_line_size * ENTRY_BYTES


class DirectoryTable:
    """Location array indexed by L2 block number.

    Each entry is an int16 (row, col) pair stored with a +1 bias so that a
    zero entry means "not on chip"; this keeps the array calloc-backed, so
    only pages that are actually touched get committed.
    """

    def __init__(self, total_memory_bytes: int, l2_line_size: int):
        self.num_entries = total_memory_bytes // l2_line_size
        self.locations = np.zeros((self.num_entries, 2), dtype=np.int16)
        self.lookups = 0
        self.updates = 0
        self.removals = 0

    @property
    def nbytes(self) -> int:
        return self.locations.nbytes

    def valid_tag(self, tag: int) -> bool:
        return 0 <= tag < self.num_entries

    def entries(self):
        """(tag, holder) for every present entry, in tag order."""
        rows = np.flatnonzero(self.locations[:, 0])
        for t in rows:
            r, c = self.locations[t]
            yield int(t), Coord(int(r) - 1, int(c) - 1)


def dir_lookup(table: DirectoryTable, tag: int) -> Optional[Coord]:
    table.lookups += 1
    r, c = table.locations[tag]
    if r == 0:
        return None
    return Coord(int(r) - 1, int(c) - 1)


def dir_update(table: DirectoryTable, tag: int, holder: Coord) -> None:
    table.updates += 1
    table.locations[tag] = (holder[0] + 1, holder[1] + 1)


def dir_remove(table: DirectoryTable, tag: int, holder: Optional[Coord] = None) -> bool:
    """Clear the entry; with ``holder`` given, only if it still points there."""
    if holder is not None:
        r, c = table.locations[tag]
        if (r, c) != (holder[0] + 1, holder[1] + 1):
            return False
    table.removals += 1
    table.locations[tag] = (0, 0)
    return True


def handle_directory_message(table: DirectoryTable, packet: Packet,
                             reserve: bool = False) -> Packet:
    """Answer a directory access with the holder, or a negative reply.

    With ``reserve`` set, a miss records the requester as the holder right
    away, since the requester is about to place the block locally after the
    memory fetch.
    """
    if packet.kind is not MK.DIRECTORY_ACCESS:
        raise ValueError(f"directory cannot answer {packet.kind.name}")
    me = packet.dst
    holder = dir_lookup(table, packet.tag) if table.valid_tag(packet.tag) else None
    if holder is None:
        if reserve and table.valid_tag(packet.tag):
            dir_update(table, packet.tag, packet.src)
        return Packet(MK.NEGATIVE_DIRECTORY_REPLY, me, packet.src, packet.tag)
    return Packet(MK.DIRECTORY_REPLY, me, packet.src, packet.tag, aux=holder)


@dataclass
class MemoryModel:
    latency: int
    fetches: int = 0
    writebacks: int = 0
