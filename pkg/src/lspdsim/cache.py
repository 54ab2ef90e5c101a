"""Set-associative caches with LRU replacement.

L1 is private and write-through; L1 lines remember which L2 slice they were
filled from so the victim can be written back there.  L2 lines optionally
carry a bounded history of recent accessors, which drives migration.
"""

from __future__ import annotations

from collections import Counter, deque
from typing import NamedTuple, Optional

from .types import CacheGeometry, Coord


class CacheLine:
    __slots__ = ("tag", "valid", "dirty", "lru_stamp", "owner", "data", "written")

    def __init__(self):
        self.tag = -1
        self.valid = False
        self.dirty = False
        self.lru_stamp = -1
        self.owner: Optional[Coord] = None
        self.data = b""
        self.written = False   # L1 only: stored to since fill, pending at a remote owner


class L2Line(CacheLine):
    __slots__ = ("history", "in_service", "migrating", "dir_pending")

    def __init__(self, history_depth: Optional[int]):
        super().__init__()
        self.history = deque(maxlen=history_depth) if history_depth else None
        self.in_service = 0        # remote requests currently being served
        self.migrating: Optional[Coord] = None
        self.dir_pending = False   # arrived by migration, directory not yet confirmed

    @property
    def resident(self) -> bool:
        """Valid and not the source half of an in-flight migration."""
        return self.valid and self.migrating is None


class Evicted(NamedTuple):
    block: int
    dirty: bool
    owner: Optional[Coord]
    data: bytes
    written: bool
    line: CacheLine


class CacheArray:
    """``lines[set][way]``; sets are materialised on first touch."""

    def __init__(self, geometry: CacheGeometry, history_depth: Optional[int] = None, l2: bool = False):
        self.geometry = geometry
        self.history_depth = history_depth
        self.l2 = l2
        self._sets: list = [None] * geometry.sets

    def _new_line(self) -> CacheLine:
        return L2Line(self.history_depth) if self.l2 else CacheLine()

    def ways(self, index: int) -> list:
        s = self._sets[index]
        if s is None:
            s = self._sets[index] = [self._new_line() for _ in range(self.geometry.assoc)]
        return s

    def touched_sets(self):
        for index, s in enumerate(self._sets):
            if s is not None:
                yield index, s

    def valid_lines(self):
        for index, s in self.touched_sets():
            for line in s:
                if line.valid:
                    yield self.block_of(index, line.tag), line

    def block_of(self, index: int, tag: int) -> int:
        return tag * self.geometry.sets + index

    def locate(self, block: int) -> tuple[int, int]:
        tag, index = divmod(block, self.geometry.sets)
        return tag, index

    def find(self, block: int) -> Optional[CacheLine]:
        """Valid line holding ``block`` (no LRU update)."""
        tag, index = divmod(block, self.geometry.sets)
        s = self._sets[index]
        if s is None:
            return None
        for line in s:
            if line.valid and line.tag == tag:
                return line
        return None


def block_number(addr: int, geometry: CacheGeometry) -> int:
    return addr // geometry.line_size


def lookup(array: CacheArray, addr: int, cycle: int) -> Optional[int]:
    """Way index on hit (LRU stamp refreshed), ``None`` on miss."""
    return lookup_block(array, addr // array.geometry.line_size, cycle)


def lookup_block(array: CacheArray, block: int, cycle: int) -> Optional[int]:
    tag, index = divmod(block, array.geometry.sets)
    s = array._sets[index]
    if s is None:
        return None
    for way, line in enumerate(s):
        if line.valid and line.tag == tag:
            line.lru_stamp = cycle
            return way
    return None


def select_victim(array: CacheArray, index: int) -> int:
    """First invalid way, else the least recently used (lowest way on ties)."""
    s = array.ways(index)
    best = 0
    best_stamp = None
    for way, line in enumerate(s):
        if not line.valid:
            return way
        if best_stamp is None or line.lru_stamp < best_stamp:
            best, best_stamp = way, line.lru_stamp
    return best


def install(array: CacheArray, addr: int, data: bytes, cycle: int, **attrs) -> Optional[Evicted]:
    return install_block(array, addr // array.geometry.line_size, data, cycle, **attrs)


def install_block(array: CacheArray, block: int, data: bytes, cycle: int,
                  owner: Optional[Coord] = None, dirty: bool = False) -> Optional[Evicted]:
    """Place ``block`` in its set, returning the evicted valid line if any."""
    tag, index = divmod(block, array.geometry.sets)
    s = array.ways(index)
    way = select_victim(array, index)
    old = s[way]
    evicted = None
    if old.valid:
        evicted = Evicted(array.block_of(index, old.tag), old.dirty, old.owner, old.data,
                          old.written, old)
    line = array._new_line()
    line.tag = tag
    line.valid = True
    line.dirty = dirty
    line.lru_stamp = cycle
    line.owner = owner
    line.data = data
    s[way] = line
    return evicted


def invalidate(array: CacheArray, block: int) -> Optional[CacheLine]:
    line = array.find(block)
    if line is not None:
        line.valid = False
    return line


def record_access(line: L2Line, requester: Coord) -> None:
    if line.history is not None:
        line.history.append(requester)


def should_migrate(line: L2Line, local: Coord, enabled: bool = True) -> Optional[Coord]:
    """Remote node that strictly out-accesses ``local`` in the history, if any.

    Ties among remote nodes go to the first in row-major order; a tie with
    the local node keeps the block where it is.
    """
    if not enabled or line.history is None or not line.valid:
        return None
    if line.in_service or line.migrating is not None or line.dir_pending:
        return None
    counts = Counter(line.history)
    local_count = counts.pop(local, 0)
    if not counts:
        return None
    best = min(counts, key=lambda c: (-counts[c], c))
    if counts[best] > local_count:
        return best
    return None
