"""Single-source shortest path trees from rooted portal graphs.

Each axis' portal tree is rooted at the source portal and pruned to the
portals meeting D. A neighbor v is a feasible parent of u iff, for both axes
along which u and v lie in different portals, v's portal is the parent of
u's portal. A last root-and-prune on the chosen parents removes subtrees
and components without destinations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit_engine import CircuitEngine, ContractFault, RoundStats, beep_round
from .forest import ParentForest
from .triangular_grid import Node
from .tree_primitives import (
    PARENT,
    EulerTour,
    PortalTreeView,
    axis_dirs,
    euler_tour,
    induced_occ,
    portal_beeps,
    rap_from_sign,
    run_tours,
    spread_portal_raps,
)

MIN_PINS = 4
CONCURRENT_PINS = 12


@dataclass
class SptResult:
    forest: ParentForest
    member: np.ndarray
    parent: np.ndarray
    stats: RoundStats

    @property
    def rounds(self) -> int:
        return self.stats.rounds_total


def side_of(d: int, axis: int) -> str:
    return "north" if d in axis_dirs(axis)[1] else "south"


def choose_parents(occ: np.ndarray, raps: list, src: np.ndarray) -> np.ndarray:
    """Smallest direction whose neighbor's portals are parents on the two other axes."""
    n = len(occ)
    parent = np.full(n, -1, dtype=np.int64)
    for d in range(5, -1, -1):
        ok = occ[:, d].copy()
        for axis in range(3):
            if axis == d % 3:
                continue
            ok &= raps[axis].side(side_of(d, axis)) == PARENT
        parent[ok] = d
    parent[src] = -1
    return parent


def learn_children(engine: CircuitEngine, parent: np.ndarray, phase: str) -> np.ndarray:
    """One round: every amoebot beeps toward its parent; returns tree directions."""
    v = engine.view()
    c = engine.c
    sends = v.no_sends()
    rows = np.nonzero(parent >= 0)[0]
    sends[rows, parent[rows] * c] = True
    recv = beep_round(engine, None, sends, phase)
    tdirs = np.zeros((engine.n, 6), dtype=bool)
    for d in range(6):
        tdirs[:, d] = recv[:, d * c] & engine.occ[:, d]
    tdirs[rows, parent[rows]] = True
    return tdirs


def spt_arrays(engine: CircuitEngine, src, D, region=None, concurrent: bool | None = None, phase: str = "spt"):
    """Shortest path trees inside each region component holding one source.

    Returns (member, parent direction or -1). Components are processed in
    lockstep; components without a source drop out.
    """
    n = engine.n
    src = np.asarray(src, dtype=bool)
    D = np.asarray(D, dtype=bool)
    member = np.ones(n, dtype=bool) if region is None else np.asarray(region, dtype=bool)
    occ = induced_occ(engine, member)
    if concurrent is None:
        concurrent = engine.c >= CONCURRENT_PINS
    views = [PortalTreeView.of(occ, axis, member) for axis in range(3)]
    heard = portal_beeps(engine, [(v, lane, who) for v in views for lane, who in ((0, src), (1, D))], phase)
    isR = heard[0::2]
    inQ = heard[1::2]
    tours = [EulerTour(v.tdirs, v.rep & r, v.rep & q, 4 * k if concurrent else 0) for k, (v, r, q) in enumerate(zip(views, isR, inQ))]
    if concurrent:
        signs = [cs.sign for cs in run_tours(engine, tours, phase=phase)]
    else:
        signs = [run_tours(engine, [t], phase=phase)[0].sign for t in tours]
    raps = spread_portal_raps(engine, list(zip(views, isR, signs)), phase)
    parent = choose_parents(occ, raps, src & member)
    tdirs = learn_children(engine, parent, phase)
    cs = euler_tour(engine, tdirs, src & member, D & member, phase=phase)
    rap = rap_from_sign(tdirs, src & member, cs.sign)
    keep = rap.in_vq & member
    return keep, np.where(keep, rap.parent, -1)


def single_source(s) -> Node:
    if len(s) == 2 and all(isinstance(x, (int, np.integer)) for x in s):
        return Node(*s)
    items = list(s)
    if len(items) != 1:
        raise ContractFault(f"single source expected, got {len(items)}; use spf")
    return Node(*items[0])


def compute_spt(structure, s, D, pins: int = MIN_PINS, concurrent: bool | None = None, round_limit=None, trace=None) -> SptResult:
    """({s}, D)-shortest path forest. Passing an engine accumulates its stats."""
    s = single_source(s)
    engine = structure if isinstance(structure, CircuitEngine) else CircuitEngine(structure, pins, trace, round_limit)
    if engine.c < MIN_PINS:
        raise ContractFault(f"shortest path trees need at least {MIN_PINS} pins, got {engine.c}")
    ix = engine.ix
    src = np.zeros(ix.n, dtype=bool)
    src[ix.pos[s]] = True
    dm = np.zeros(ix.n, dtype=bool)
    for u in D:
        dm[ix.pos[Node(*u)]] = True
    member, parent = spt_arrays(engine, src, dm, concurrent=concurrent)
    return SptResult(ParentForest.from_arrays(ix.nodes, member, parent), member, parent, engine.stats)
