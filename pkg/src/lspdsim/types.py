"""Value types shared across the simulator: coordinates, message kinds,
flits, packets and the global configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import NamedTuple, Optional


class Coord(NamedTuple):
    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


class Direction(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    EJECT = 4
    UNSET = -1


# scan order used for deflection and injection
PORTS = (Direction.NORTH, Direction.EAST, Direction.SOUTH, Direction.WEST)
OPPOSITE = {
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
}
STEP = {
    Direction.NORTH: (-1, 0),
    Direction.EAST: (0, 1),
    Direction.SOUTH: (1, 0),
    Direction.WEST: (0, -1),
}


class MessageKind(Enum):
    DIRECTORY_ACCESS = "DA"
    DIRECTORY_REPLY = "DR"
    NEGATIVE_DIRECTORY_REPLY = "NDR"
    REQUEST_REDIRECTION = "RR"
    REMOTE_L2_ACCESS = "RA"
    REMOTE_L2_REPLY = "RAR"
    L2_BLOCK_WRITEBACK = "B2R"
    L2_BLOCK_MIGRATION = "B2M"
    TRAP_REPLY = "TRAP"
    MEMORY_FETCH_REQUEST = "MFQ"
    MEMORY_FETCH_REPLY = "MFR"
    # protocol plumbing for keeping the directory in step with placement
    L1_VICTIM_WRITEBACK = "L1WB"
    DIRECTORY_UPDATE = "DU"
    DIRECTORY_UPDATE_ACK = "DUA"
    DIRECTORY_REMOVE = "DRM"
    MIGRATION_ARRIVED = "MIGA"

    @property
    def short(self) -> str:
        return self.value


MK = MessageKind

# flit counts fixed by the message format
FIXED_FLITS = {
    MK.DIRECTORY_ACCESS: 1,
    MK.DIRECTORY_REPLY: 1,
    MK.REQUEST_REDIRECTION: 1,
    MK.L2_BLOCK_WRITEBACK: 16,
    MK.L2_BLOCK_MIGRATION: 16,
    MK.REMOTE_L2_ACCESS: 4,
}

# emission order when a node sends several packets in one cycle
_DIRECTORY_TRAFFIC = {MK.DIRECTORY_ACCESS, MK.DIRECTORY_REPLY, MK.NEGATIVE_DIRECTORY_REPLY,
                      MK.DIRECTORY_UPDATE, MK.DIRECTORY_UPDATE_ACK, MK.DIRECTORY_REMOVE}
_MIGRATION = {MK.L2_BLOCK_MIGRATION}
_WRITEBACK = {MK.L1_VICTIM_WRITEBACK, MK.L2_BLOCK_WRITEBACK}


def emission_class(kind: MessageKind) -> int:
    if kind in _DIRECTORY_TRAFFIC:
        return 0
    if kind in _MIGRATION:
        return 2
    if kind in _WRITEBACK:
        return 3
    return 1


@dataclass(frozen=True)
class CacheGeometry:
    sets: int
    assoc: int
    line_size: int

    def __post_init__(self):
        for name in ("sets", "assoc", "line_size"):
            v = getattr(self, name)
            if v <= 0:
                raise ValueError(f"cache {name} must be positive, got {v}")

    @property
    def size_bytes(self) -> int:
        return self.sets * self.assoc * self.line_size

    def decompose(self, addr: int) -> tuple[int, int, int]:
        """Split an address into (tag, set index, offset)."""
        line, offset = divmod(addr, self.line_size)
        tag, index = divmod(line, self.sets)
        return tag, index, offset

    def compose(self, tag: int, index: int, offset: int = 0) -> int:
        return (tag * self.sets + index) * self.line_size + offset


@dataclass(frozen=True)
class SimConfig:
    mesh_rows: int = 4
    mesh_cols: int = 4
    total_memory_bytes: int = 1 << 30
    l1: CacheGeometry = CacheGeometry(128, 4, 32)
    l2: CacheGeometry = CacheGeometry(128, 4, 64)
    l1_hit_latency_cycles: int = 1
    l1_miss_penalty_cycles: int = 2
    l2_hit_latency_cycles: int = 1
    memory_latency_cycles: int = 50
    directory_latency_cycles: int = 1
    migration_history_depth: int = 10
    migration_enabled: bool = True
    directory_node: Optional[Coord] = None
    memory_node: Optional[Coord] = None
    max_sim_cycles: int = 10_000_000
    flit_counts: dict = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        # frozen dataclass: fill derived defaults via object.__setattr__
        if self.directory_node is None:
            object.__setattr__(self, "directory_node", Coord(self.mesh_rows // 2, self.mesh_cols // 2))
        else:
            object.__setattr__(self, "directory_node", Coord(*self.directory_node))
        if self.memory_node is None:
            object.__setattr__(self, "memory_node", self.directory_node)
        else:
            object.__setattr__(self, "memory_node", Coord(*self.memory_node))
        self.validate()

    def validate(self) -> None:
        if self.mesh_rows <= 0 or self.mesh_cols <= 0:
            raise ValueError("mesh dimensions must be positive")
        if self.mesh_rows * self.mesh_cols < 2:
            raise ValueError("mesh needs at least two nodes (a lone router has no links)")
        if max(self.mesh_rows, self.mesh_cols) >= 1 << 15:
            raise ValueError("mesh dimension exceeds 16-bit coordinate range")
        if self.l1.line_size > self.l2.line_size:
            raise ValueError("L1 line size must not exceed L2 line size")
        mig = self.flit_count(MK.L2_BLOCK_MIGRATION)
        if self.l2.line_size % mig:
            raise ValueError("L2 line size must be divisible by the migration flit count")
        if self.total_memory_bytes <= 0 or self.total_memory_bytes % self.l2.line_size:
            raise ValueError("total memory must be a positive multiple of the L2 line size")
        for name in ("directory_node", "memory_node"):
            c = getattr(self, name)
            if not self.in_mesh(c):
                raise ValueError(f"{name} {c} outside the {self.mesh_rows}x{self.mesh_cols} mesh")
        for kind, n in self.flit_counts.items():
            if not 1 <= n < 256:
                raise ValueError(f"flit count for {kind} must lie in [1, 255]")
        if self.migration_history_depth < 1:
            raise ValueError("migration history depth must be >= 1")
        for name in ("l1_hit_latency_cycles", "l1_miss_penalty_cycles", "memory_latency_cycles",
                     "directory_latency_cycles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.l2_hit_latency_cycles < 0:
            raise ValueError("l2_hit_latency_cycles must be >= 0")
        if self.max_sim_cycles < 0:
            raise ValueError("max_sim_cycles must be >= 0")

    @property
    def num_nodes(self) -> int:
        return self.mesh_rows * self.mesh_cols

    @property
    def flit_payload_bytes(self) -> int:
        return self.l2.line_size // self.flit_count(MK.L2_BLOCK_MIGRATION)

    def in_mesh(self, c: Coord) -> bool:
        return 0 <= c[0] < self.mesh_rows and 0 <= c[1] < self.mesh_cols

    def node_index(self, c: Coord) -> int:
        return c[0] * self.mesh_cols + c[1]

    def coord_of(self, index: int) -> Coord:
        return Coord(*divmod(index, self.mesh_cols))

    def flit_count(self, kind: MessageKind) -> int:
        return flit_count_for(kind, self)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def flit_count_for(kind: MessageKind, config: SimConfig) -> int:
    """Number of flits a packet of ``kind`` is divided into."""
    n = config.flit_counts.get(kind)
    if n is not None:
        return n
    if kind in FIXED_FLITS:
        return FIXED_FLITS[kind]
    if kind in (MK.REMOTE_L2_REPLY, MK.MEMORY_FETCH_REPLY, MK.L1_VICTIM_WRITEBACK):
        # one L1 line of data at l2_line/16 bytes per flit
        per_flit = config.l2.line_size // config.flit_counts.get(MK.L2_BLOCK_MIGRATION, 16)
        return -(-config.l1.line_size // per_flit)
    return 1


class Flit:
    __slots__ = ("flit_id", "packet_id", "total_flits", "age", "src", "dst", "kind",
                 "payload", "header", "direction", "deflected", "inject_cycle", "hops", "key")

    def __init__(self, flit_id, packet_id, total_flits, src, dst, kind, payload=b"", header=None):
        self.flit_id = flit_id
        self.packet_id = packet_id
        self.total_flits = total_flits
        self.age = 0
        self.src = src
        self.dst = dst
        self.kind = kind
        self.payload = payload
        self.header = header
        self.direction = Direction.UNSET
        self.deflected = False
        self.inject_cycle = -1
        self.hops = 0
        self.key = 0
        self.set_age(0)

    def set_age(self, age: int) -> None:
        # arbitration sort key, smaller first: oldest, then packet id, then flit id
        self.age = age
        self.key = ((self.packet_id << 8) | self.flit_id) - (age << 56)

    def priority(self) -> tuple[int, int, int]:
        return (-self.age, self.packet_id, self.flit_id)

    def __repr__(self):
        return (f"Flit({self.kind.short} p{self.packet_id}.{self.flit_id}/{self.total_flits} "
                f"{self.src}->{self.dst} age={self.age} dir={self.direction.name})")


@dataclass
class Packet:
    kind: MessageKind
    src: Coord
    dst: Coord
    tag: int = -1               # L2 block number (address // l2 line size)
    aux: Optional[Coord] = None  # holder / requester / previous holder, by kind
    flags: int = 0
    data: bytes = b""
    packet_id: int = -1
    created: int = -1

    def header(self) -> tuple:
        return (self.tag, self.aux, self.flags, self.created)


# Packet.flags bits
FLAG_WRITE = 1     # block has been written (dirty)
FLAG_TRAP = 2      # memory fetch issued as trap recovery
FLAG_REDIRECT = 4  # request already counted at its first target


class IncompletePacketError(ValueError):
    """Raised when a flit set cannot be reassembled into a packet."""


def fragment(packet: Packet, config: SimConfig) -> list[Flit]:
    """Split ``packet`` into its routable flits, partitioning the body in order."""
    n = flit_count_for(packet.kind, config)
    width = config.flit_payload_bytes
    data = packet.data
    if len(data) > n * width:
        raise ValueError(f"{packet.kind.name} body of {len(data)} B exceeds {n} flits x {width} B")
    hdr = packet.header()
    pid = packet.packet_id
    return [Flit(i, pid, n, packet.src, packet.dst, packet.kind, data[i * width:(i + 1) * width], hdr)
            for i in range(n)]


def reassemble(flits) -> Packet:
    flits = list(flits)
    if not flits:
        raise IncompletePacketError("empty flit set")
    first = flits[0]
    n = first.total_flits
    by_id = {}
    for f in flits:
        if f.packet_id != first.packet_id:
            raise IncompletePacketError("flits from different packets")
        if f.flit_id in by_id:
            raise IncompletePacketError(f"duplicate flit {f.flit_id} of packet {f.packet_id}")
        by_id[f.flit_id] = f
    if len(by_id) != n or set(by_id) != set(range(n)):
        raise IncompletePacketError(f"packet {first.packet_id}: have {len(by_id)} of {n} flits")
    tag, aux, flags, created = first.header
    data = b"".join(by_id[i].payload for i in range(n))
    return Packet(first.kind, first.src, first.dst, tag, aux, flags, data, first.packet_id, created)
