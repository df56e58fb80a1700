"""Triangular grid geometry, amoebot structures and portal decompositions.

Nodes use axial coordinates (a, b). The Euclidean embedding is
x = a + b/2, y = b*sqrt(3)/2, so comparisons along x are done exactly on
2a + b and comparisons along y on b.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage


class Direction(IntEnum):
    E = 0
    NE = 1
    NW = 2
    W = 3
    SW = 4
    SE = 5

    def opposite(self) -> "Direction":
        return Direction((self + 3) % 6)

    def axis(self) -> "Axis":
        return Axis(self % 3)

    @property
    def offset(self) -> tuple[int, int]:
        return OFFSETS[self]


class Axis(IntEnum):
    X = 0
    Y = 1
    Z = 2

    def directions(self) -> tuple[Direction, Direction]:
        return Direction(self.value), Direction(self.value + 3)


OFFSETS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
OFFSET_ARRAY = np.array(OFFSETS, dtype=np.int64)
DIRECTIONS = tuple(Direction)


class Node(NamedTuple):
    a: int
    b: int

    @property
    def z(self) -> int:
        return -self.a - self.b

    def step(self, d: int) -> "Node":
        da, db = OFFSETS[d]
        return Node(self.a + da, self.b + db)

    def euclid(self) -> tuple[float, float]:
        return self.a + self.b / 2, self.b * 3 ** 0.5 / 2

    def lexkey(self) -> tuple[int, int]:
        """Exact (x, y) ordering key, scaled to integers."""
        return 2 * self.a + self.b, self.b


def neighbors(u: Node) -> list[tuple[Direction, Node]]:
    u = Node(*u)
    return [(d, u.step(d)) for d in DIRECTIONS]


def grid_distance(u: Node, v: Node) -> int:
    da, db = v[0] - u[0], v[1] - u[1]
    return max(abs(da), abs(db), abs(da + db))


@dataclass(frozen=True)
class AmoebotStructure:
    occupied: frozenset
    sources: frozenset = frozenset()
    destinations: frozenset = frozenset()
    leader: Node | None = None

    @classmethod
    def build(cls, occupied: Iterable, sources=(), destinations=(), leader=None):
        occ = frozenset(Node(*u) for u in occupied)
        if leader is None and occ:
            leader = min(occ)
        return cls(
            occ,
            frozenset(Node(*u) for u in sources),
            frozenset(Node(*u) for u in destinations),
            Node(*leader) if leader is not None else None,
        )

    def with_annotations(self, sources=None, destinations=None, leader=None):
        return AmoebotStructure.build(
            self.occupied,
            self.sources if sources is None else sources,
            self.destinations if destinations is None else destinations,
            self.leader if leader is None else leader,
        )

    @property
    def n(self) -> int:
        return len(self.occupied)

    def nodes(self) -> list[Node]:
        """Occupied nodes in the canonical (sorted) order used for indexing."""
        return sorted(self.occupied)

    def index(self) -> "Indexed":
        return Indexed.of(self)


@dataclass(frozen=True)
class Indexed:
    """Array view of a structure: nodes sorted by (a, b), neighbor table."""

    nodes: tuple
    coords: np.ndarray
    nbr: np.ndarray
    pos: dict = field(repr=False)

    @classmethod
    def of(cls, s: AmoebotStructure) -> "Indexed":
        nodes = tuple(s.nodes())
        coords = np.array(nodes, dtype=np.int64).reshape(-1, 2)
        pos = {u: i for i, u in enumerate(nodes)}
        nbr = np.full((len(nodes), 6), -1, dtype=np.int64)
        for i, u in enumerate(nodes):
            for d in range(6):
                j = pos.get(u.step(d))
                if j is not None:
                    nbr[i, d] = j
        return cls(nodes, coords, nbr, pos)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def occ(self) -> np.ndarray:
        return self.nbr >= 0

    def mask(self, members: Iterable) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        for u in members:
            m[self.pos[Node(*u)]] = True
        return m


# --- validation -------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


# a pair (da, db) is adjacent iff it is one of the six offsets; in an (a, b)
# raster that is the 3x3 block without the (+1,+1) and (-1,-1) corners
_TRI = np.array([[0, 1, 1], [1, 1, 1], [1, 1, 0]], dtype=bool)


def components(nodes: Iterable) -> list[set]:
    """Connected components of the subgraph induced by `nodes`."""
    rest = {Node(*u) for u in nodes}
    comps = []
    while rest:
        start = rest.pop()
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for d in range(6):
                v = u.step(d)
                if v in rest:
                    rest.remove(v)
                    comp.add(v)
                    queue.append(v)
        comps.append(comp)
    return comps


def enclosed_nodes(occupied: Iterable) -> set:
    """Unoccupied nodes that cannot reach the outside through unoccupied nodes."""
    occ = np.array(sorted(occupied), dtype=np.int64).reshape(-1, 2)
    if len(occ) == 0:
        return set()
    lo = occ.min(axis=0) - 1
    hi = occ.max(axis=0) + 1
    grid = np.ones(tuple(hi - lo + 1), dtype=bool)
    grid[occ[:, 0] - lo[0], occ[:, 1] - lo[1]] = False
    labels, _ = ndimage.label(grid, structure=_TRI)
    outside = labels[0, 0]
    holes = np.argwhere(grid & (labels != outside))
    return {Node(int(a + lo[0]), int(b + lo[1])) for a, b in holes}


def validate_structure(s: AmoebotStructure) -> ValidationReport:
    rep = ValidationReport()
    if not s.occupied:
        rep.violations.append("empty structure")
        return rep
    comps = components(s.occupied)
    if len(comps) > 1:
        rep.violations.append(f"disconnected: {len(comps)} components")
    holes = enclosed_nodes(s.occupied)
    if holes:
        rep.violations.append(f"holes: {len(holes)} enclosed nodes, e.g. {tuple(min(holes))}")
    if not s.sources:
        rep.violations.append("no sources")
    if not s.destinations:
        rep.violations.append("no destinations")
    if not s.sources <= s.occupied:
        rep.violations.append("source outside structure")
    if not s.destinations <= s.occupied:
        rep.violations.append("destination outside structure")
    if s.leader is None or s.leader not in s.occupied:
        rep.violations.append("leader missing or outside structure")
    return rep


def is_hole_free(occupied: Iterable) -> bool:
    return not enclosed_nodes(occupied)


# --- portals ----------------------------------------------------------------

@dataclass(frozen=True)
class Portal:
    axis: Axis
    members: tuple

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, u) -> bool:
        return Node(*u) in self.members

    @property
    def representative(self) -> Node:
        """Lexicographically minimal member in the Euclidean (x, y) order."""
        return min(self.members, key=Node.lexkey)


def portals(s: AmoebotStructure | Iterable, axis: Axis) -> list[Portal]:
    occ = s.occupied if isinstance(s, AmoebotStructure) else {Node(*u) for u in s}
    fwd, back = Axis(axis).directions()
    out = []
    for u in sorted(occ):
        if u.step(back) in occ:
            continue
        run = [u]
        while run[-1].step(fwd) in occ:
            run.append(run[-1].step(fwd))
        out.append(Portal(Axis(axis), tuple(run)))
    out.sort(key=lambda p: p.representative.lexkey())
    return out


def portal_index(s: AmoebotStructure, axis: Axis) -> dict:
    return {u: i for i, p in enumerate(portals(s, axis)) for u in p.members}


# rotation taking the X frame onto each axis frame
_ROT = (0, 1, -1)


def rel_dir(d: int, axis: int) -> int:
    return (d + _ROT[axis]) % 6


def implicit_tree_dirs(occ: np.ndarray, axis: int) -> np.ndarray:
    """Local rule: which incident edges belong to the implicit portal tree.

    `occ` is an (n, 6) boolean table of neighbor occupancy. Returns an (n, 6)
    boolean table. Only the amoebot's own neighborhood is consulted.
    """
    r = lambda d: rel_dir(d, axis)
    t = np.zeros_like(occ)
    E, NE, NW, W, SW, SE = (r(d) for d in range(6))
    t[:, E] = occ[:, E]
    t[:, W] = occ[:, W]
    t[:, NW] = occ[:, NW] & ~occ[:, W]
    t[:, NE] = occ[:, NE] & ~occ[:, NW]
    t[:, SW] = occ[:, SW] & ~occ[:, W]
    t[:, SE] = occ[:, SE] & ~occ[:, SW]
    return t


def implicit_portal_graph(s: AmoebotStructure, axis: Axis) -> set:
    ix = s.index() if isinstance(s, AmoebotStructure) else s
    t = implicit_tree_dirs(ix.occ, axis)
    edges = set()
    for i, d in zip(*np.nonzero(t)):
        u, v = ix.nodes[i], ix.nodes[ix.nbr[i, d]]
        edges.add(frozenset((u, v)))
    return edges


def portal_distance(s: AmoebotStructure, axis: Axis, u, v) -> int:
    return portal_distances(s, axis, Node(*u))[Node(*v)]


def portal_distances(s: AmoebotStructure, axis: Axis, u) -> dict:
    """Portal-graph distance from portal(u) to every portal, per amoebot."""
    ps = portals(s, axis)
    pid = {w: i for i, p in enumerate(ps) for w in p.members}
    adj = [set() for _ in ps]
    for w, i in pid.items():
        for d in range(6):
            j = pid.get(w.step(d))
            if j is not None and j != i:
                adj[i].add(j)
    dist = [-1] * len(ps)
    src = pid[Node(*u)]
    dist[src] = 0
    queue = deque([src])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if dist[j] < 0:
                dist[j] = dist[i] + 1
                queue.append(j)
    return {w: dist[i] for w, i in pid.items()}


# --- generation -------------------------------------------------------------

def random_blob(rng: np.random.Generator, n: int) -> set:
    """Grow a connected hole-free blob of at least n nodes."""
    occ = {Node(0, 0)}
    # frontier kept as parallel arrays with swap-remove so each step is O(1) python work
    cap = 6 * n + 16
    fa = np.zeros(cap, dtype=np.int64)
    fb = np.zeros(cap, dtype=np.int64)
    cnt = np.zeros(cap)
    where: dict = {}
    size = 0

    def add(v):
        nonlocal size
        if v in occ:
            return
        i = where.get(v)
        if i is None:
            i = size
            where[v] = i
            fa[i], fb[i] = v
            cnt[i] = 0
            size += 1
        cnt[i] += 1

    for d in range(6):
        add(Node(*OFFSETS[d]))
    # low compactness favors thin, branching shapes with concavities
    compact = rng.uniform(0.0, 3.0)
    heading = rng.uniform(0, 2 * np.pi)
    drift = rng.uniform(0.0, 0.6)
    while len(occ) < n:
        x = fa[:size] + fb[:size] / 2
        y = fb[:size] * (3 ** 0.5 / 2)
        bias = drift * (x * np.cos(heading) + y * np.sin(heading)) / (1 + len(occ) ** 0.5)
        w = np.exp(compact * cnt[:size] + bias)
        i = int(rng.choice(size, p=w / w.sum()))
        pick = Node(int(fa[i]), int(fb[i]))
        last = size - 1
        if i != last:
            moved = Node(int(fa[last]), int(fb[last]))
            fa[i], fb[i], cnt[i] = fa[last], fb[last], cnt[last]
            where[moved] = i
        del where[pick]
        size -= 1
        occ.add(pick)
        for d in range(6):
            add(pick.step(d))
        if rng.random() < 0.02:
            heading = rng.uniform(0, 2 * np.pi)
    occ |= enclosed_nodes(occ)
    return _trim(rng, occ, n)


def _removable(occ: set, u: Node) -> bool:
    """Occupied neighbors form one nonempty arc short of the full ring."""
    ring = [u.step(d) in occ for d in range(6)]
    runs = sum(ring[d] and not ring[d - 1] for d in range(6))
    return runs == 1


def _trim(rng: np.random.Generator, occ: set, n: int) -> set:
    """Drop boundary nodes until n remain; connectivity and hole-freeness are kept."""
    occ = set(occ)
    while len(occ) > n:
        cand = sorted(u for u in occ if _removable(occ, u))
        occ.discard(cand[int(rng.integers(len(cand)))])
    return occ


def generate_random_structure(seed: int, n: int, k: int = 1, ell: int = 1) -> AmoebotStructure:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    occ = random_blob(rng, n)
    nodes = sorted(occ)
    k = min(k, len(nodes))
    ell = min(ell, len(nodes))
    src = rng.choice(len(nodes), size=k, replace=False)
    dst = rng.choice(len(nodes), size=ell, replace=False)
    lead = int(rng.integers(len(nodes)))
    return AmoebotStructure.build(
        nodes, [nodes[i] for i in src], [nodes[i] for i in dst], nodes[lead]
    )


def line(n: int, axis: Axis = Axis.X, start=(0, 0)) -> list[Node]:
    d = Axis(axis).directions()[0]
    u = Node(*start)
    out = [u]
    for _ in range(n - 1):
        u = u.step(d)
        out.append(u)
    return out


def parallelogram(w: int, h: int) -> list[Node]:
    return [Node(a, b) for b in range(h) for a in range(w)]


def hexagon(radius: int) -> list[Node]:
    return [
        Node(a, b)
        for a in range(-radius, radius + 1)
        for b in range(-radius, radius + 1)
        if abs(a + b) <= radius
    ]


# --- file format ------------------------------------------------------------

class StructureParseError(ValueError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


def parse_structure(text: str) -> AmoebotStructure:
    occ, src, dst, leaders = [], [], [], []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        toks = []
        col = 0
        for part in body.split():
            col = body.index(part, col)
            toks.append((part, col + 1))
            col += len(part)
        if len(toks) < 2:
            raise StructureParseError("expected 'a b [S] [D] [L]'", lineno, toks[0][1])
        try:
            u = Node(int(toks[0][0]), int(toks[1][0]))
        except ValueError:
            bad = next(t for t in toks[:2] if not t[0].lstrip("-").isdigit())
            raise StructureParseError(f"bad coordinate {bad[0]!r}", lineno, bad[1]) from None
        if u in seen:
            raise StructureParseError(f"duplicate node {tuple(u)}", lineno, toks[0][1])
        seen.add(u)
        occ.append(u)
        for flag, c in toks[2:]:
            if flag == "S":
                src.append(u)
            elif flag == "D":
                dst.append(u)
            elif flag == "L":
                leaders.append((u, lineno, c))
            else:
                raise StructureParseError(f"unknown flag {flag!r}", lineno, c)
    if len(leaders) != 1:
        where = leaders[1] if len(leaders) > 1 else (None, max(1, len(text.splitlines())), 1)
        raise StructureParseError(f"expected exactly one L record, got {len(leaders)}", where[1], where[2])
    return AmoebotStructure.build(occ, src, dst, leaders[0][0])


def format_structure(s: AmoebotStructure) -> str:
    lines = []
    for u in s.nodes():
        flags = [f for f, on in (("S", u in s.sources), ("D", u in s.destinations), ("L", u == s.leader)) if on]
        lines.append(" ".join([str(u.a), str(u.b), *flags]))
    return "\n".join(lines) + "\n"


def read_structure(path) -> AmoebotStructure:
    with open(path) as fh:
        return parse_structure(fh.read())


def write_structure(s: AmoebotStructure, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_structure(s))
