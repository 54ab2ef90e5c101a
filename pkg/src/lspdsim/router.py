"""Bufferless deflection router.

Each router has one input and one output register per mesh direction, an
inject link from its core and a single eject link to it.  Arbitration ranks
the input flits by age (oldest first) and hands every flit its XY-preferred
output if still free; losers are deflected to the first free port in N,E,S,W
order.  Transfer is pull-style: a router only writes its own inputs while
reading its neighbours' outputs, so both phases are safe to run concurrently
across routers once separated by a barrier.
"""

from __future__ import annotations

from operator import attrgetter
from typing import Optional, Sequence

from .types import PORTS, Coord, Direction, Flit

N, E, S, W, EJECT = (Direction.NORTH, Direction.EAST, Direction.SOUTH,
                     Direction.WEST, Direction.EJECT)


def preferred_direction(current: Coord, dst: Coord) -> Direction:
    """XY (column first) direction from ``current`` toward ``dst``."""
    if dst[1] > current[1]:
        return E
    if dst[1] < current[1]:
        return W
    if dst[0] > current[0]:
        return S
    if dst[0] < current[0]:
        return N
    return EJECT


class RouterState:
    __slots__ = ("coord", "inputs", "outputs", "eject_slot", "neighbors",
                 "deflections", "flit_hops", "injected", "ejected")

    def __init__(self, coord: Coord, neighbors: Sequence[int]):
        self.coord = coord
        # neighbour router index per direction, -1 at a mesh edge
        self.neighbors = tuple(neighbors)
        self.inputs: list[Optional[Flit]] = [None, None, None, None]
        self.outputs: list[Optional[Flit]] = [None, None, None, None]
        self.eject_slot: Optional[Flit] = None
        self.deflections = 0
        self.flit_hops = 0
        self.injected = 0
        self.ejected = 0

    @property
    def in_active(self) -> list[bool]:
        return [f is not None for f in self.inputs]

    @property
    def out_signal(self) -> list[bool]:
        return [f is not None for f in self.outputs]

    def free_inputs(self) -> list[int]:
        """Input slots that exist (have a link) and are empty."""
        return [d for d in PORTS if self.neighbors[d] >= 0 and self.inputs[d] is None]

    def occupancy(self) -> int:
        return (sum(f is not None for f in self.inputs)
                + sum(f is not None for f in self.outputs)
                + (self.eject_slot is not None))


def arbitrate(router: RouterState) -> list[tuple[Flit, Direction]]:
    """Assign every input flit an output port or the eject link.

    Returns the (flit, direction) assignments in priority order.  Outputs are
    cleared first; ports toward a missing neighbour count as taken.  Each
    flit's ``direction`` must already hold its preferred direction (set when
    it entered this router).
    """
    outputs = router.outputs
    outputs[0] = outputs[1] = outputs[2] = outputs[3] = None
    inputs = router.inputs
    flits = [f for f in inputs if f is not None]
    if not flits:
        return []
    inputs[0] = inputs[1] = inputs[2] = inputs[3] = None
    if len(flits) > 1:
        flits.sort(key=_by_key)
    neighbors = router.neighbors
    taken = [neighbors[0] < 0, neighbors[1] < 0, neighbors[2] < 0, neighbors[3] < 0]
    ejected = False
    result = []
    for f in flits:
        want = f.direction
        if want < 0:
            want = f.direction = preferred_direction(router.coord, f.dst)
        if want == 4:
            if not ejected:
                ejected = True
                router.eject_slot = f
                result.append((f, EJECT))
                continue
        elif not taken[want]:
            taken[want] = True
            outputs[want] = f
            result.append((f, want))
            continue
        # deflect to the first free port
        for d in PORTS:
            if not taken[d]:
                break
        else:  # pragma: no cover - pigeonhole makes this unreachable
            raise AssertionError(f"no free port at {router.coord} for {f!r}")
        taken[d] = True
        outputs[d] = f
        f.direction = d
        f.deflected = True
        router.deflections += 1
        result.append((f, d))
    return result


_by_key = attrgetter("key")


def pull_inputs(router: RouterState, routers: Sequence[RouterState]) -> int:
    """Move flits from the neighbours' outputs that face ``router`` into its inputs.

    Deflected flits age by one on the way; every arriving flit gets its
    direction recomputed with this router as the source.
    """
    row, col = router.coord
    inputs = router.inputs
    n = 0
    for d, j in enumerate(router.neighbors):
        if j < 0:
            continue
        f = routers[j].outputs[_OPP[d]]
        if f is None:
            continue
        if f.deflected:
            f.set_age(f.age + 1)
            f.deflected = False
        f.hops += 1
        dr, dc = f.dst
        if dc > col:
            f.direction = E
        elif dc < col:
            f.direction = W
        elif dr > row:
            f.direction = S
        elif dr < row:
            f.direction = N
        else:
            f.direction = EJECT
        inputs[d] = f
        n += 1
    router.flit_hops += n
    return n


_OPP = (S, W, N, E)


def receive(router: RouterState, port: int, flit: Flit) -> None:
    """Place ``flit`` on an input port with its preferred direction set."""
    flit.direction = preferred_direction(router.coord, flit.dst)
    router.inputs[port] = flit


def take_ejected(router: RouterState) -> Optional[Flit]:
    f = router.eject_slot
    if f is not None:
        router.eject_slot = None
        router.ejected += 1
    return f


def inject(router: RouterState, queue, cycle: int) -> int:
    """Fill free input slots from the head of ``queue`` (a deque of flits)."""
    if not queue:
        return 0
    n = 0
    inputs = router.inputs
    for d in PORTS:
        if router.neighbors[d] < 0 or inputs[d] is not None:
            continue
        f = queue.popleft()
        f.set_age(0)
        f.inject_cycle = cycle
        f.direction = preferred_direction(router.coord, f.dst)
        inputs[d] = f
        n += 1
        if not queue:
            break
    router.injected += n
    return n


def transfer(router: RouterState, routers: Sequence[RouterState], queue, cycle: int):
    """Phase three for one router: pull, eject, then inject into free slots.

    Returns the ejected flit (or None) so the caller can hand it to the core.
    """
    pull_inputs(router, routers)
    f = take_ejected(router)
    inject(router, queue, cycle)
    return f


def mesh_neighbors(rows: int, cols: int) -> list[tuple[int, int, int, int]]:
    """Neighbour index per direction (N,E,S,W) for each router, row-major."""
    out = []
    for r in range(rows):
        for c in range(cols):
            out.append((
                (r - 1) * cols + c if r > 0 else -1,
                r * cols + c + 1 if c < cols - 1 else -1,
                (r + 1) * cols + c if r < rows - 1 else -1,
                r * cols + c - 1 if c > 0 else -1,
            ))
    return out
