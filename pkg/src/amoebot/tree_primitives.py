"""Euler tour technique and the tree primitives built on it.

Trees are given per amoebot as a boolean (n, 6) table of incident tree
directions; a forest is fine as long as every tree has exactly one root.
The tour element e(u, d) is the directed edge from u toward direction d and
is hosted by u. Arriving at v from direction d, the tour leaves through the
next tree direction of v in counterclockwise order, so e(u, d) has its
predecessor port at the previous tree direction of u. The two tour links on
one edge use lanes {base, base+1} for the crossing toward E, NE, NW and
{base+2, base+3} for the other way.

Each tree root cuts its first element loose from its predecessor; that
element becomes the PASC reference and a terminal instance takes over the
predecessor port. Marked amoebots put their unit weight on the element
toward their smallest tree direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit_engine import (
    Activation,
    CircuitEngine,
    EngineError,
    OneRound,
    Program,
    StateField,
    beep_round,
    group_pins,
)
from .pasc import Consumer, InstanceForest, run_pasc
from .triangular_grid import Axis, Indexed, Node, rel_dir, implicit_tree_dirs


class ElectionFault(EngineError):
    pass


LANES = 4


def cyclic_order(tdirs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First tree direction and next/previous tree direction tables."""
    n = len(tdirs)
    nxt = np.full((n, 6), -1, dtype=np.int64)
    prv = np.full((n, 6), -1, dtype=np.int64)
    for d in range(6):
        for k in range(6, 0, -1):
            cn = (d + k) % 6
            cp = (d - k) % 6
            nxt[tdirs[:, cn], d] = cn
            prv[tdirs[:, cp], d] = cp
    first = np.where(tdirs.any(1), np.argmax(tdirs, axis=1), -1)
    return first, nxt, prv


def _succ_lane(d):
    return np.where(np.asarray(d) < 3, 0, 2)


def _pred_lane(p):
    return np.where(np.asarray(p) >= 3, 0, 2)


@dataclass
class EulerTour:
    tdirs: np.ndarray
    root: np.ndarray
    marks: np.ndarray
    lane: int = 0
    forest: InstanceForest = field(init=False)

    def __post_init__(self):
        tdirs = np.asarray(self.tdirs, dtype=bool)
        n = len(tdirs)
        self.tdirs = tdirs
        self.root = np.asarray(self.root, dtype=bool) & (tdirs.any(1) | np.asarray(self.root, dtype=bool))
        first, nxt, prv = cyclic_order(tdirs)
        self.first = first
        self.prv = prv
        has = first >= 0
        us, ds = np.nonzero(tdirs)
        E = len(us)
        elem = np.full((n, 6), -1, dtype=np.int64)
        elem[us, ds] = np.arange(E)
        troots = np.nonzero(self.root & has)[0]
        term = np.full(n, -1, dtype=np.int64)
        term[troots] = E + np.arange(len(troots))
        last = np.where(has, prv[np.arange(n), np.maximum(first, 0)], -1)
        inst_amo = np.concatenate([us, troots])
        active = np.zeros(E + len(troots), dtype=bool)
        active[:E] = (ds == first[us]) & np.asarray(self.marks, dtype=bool)[us]
        is_ref = self.root[us] & (ds == first[us])
        pd = prv[us, ds]
        keep = ~is_ref
        port_inst = np.concatenate([np.arange(E), np.arange(E)[keep], term[troots]])
        port_dir = np.concatenate([ds, pd[keep], last[troots]])
        port_pred = np.concatenate([np.zeros(E, dtype=bool), np.ones(keep.sum() + len(troots), dtype=bool)])
        port_lane = self.lane + np.where(port_pred, _pred_lane(port_dir), _succ_lane(port_dir))
        self.forest = InstanceForest(inst_amo, active, port_inst, port_dir, port_lane, port_pred)
        predinst = np.full((n, 6), -1, dtype=np.int64)
        predinst[us[keep], pd[keep]] = np.arange(E)[keep]
        predinst[troots, last[troots]] = term[troots]
        self.elem, self.predinst, self.term, self.last = elem, predinst, term, last
        self.is_ref_elem = is_ref
        self.us, self.ds = us, ds
        self.pd = np.where(is_ref, -1, pd)

    @property
    def n(self) -> int:
        return len(self.tdirs)


def _sub(x, y, br):
    """One bit of x - y with borrow."""
    bit = x ^ y ^ br
    nbr = (~x & y) | (~(x ^ y) & br)
    return bit, nbr


class TourConsumer(Consumer):
    """Streams a = prefix(u, v) and b = prefix(v, u) per tree direction.

    Tracks sign(a - b). With `with_w`, roots broadcast W bit by bit on lane
    base+1 of the tree and every direction also decides whether the Q-count
    beyond it is at most W/2, reading it as a child side (b - a) when a <= b
    and as a parent side (W - (a - b)) otherwise.
    """

    def __init__(self, tour: EulerTour, with_w: bool = False, c: int = 4, observer=None):
        self.t = tour
        self.with_w = with_w
        self.c = c
        self.observer = observer
        n = tour.n
        z = lambda: np.zeros((n, 6), dtype=bool)
        self.brD, self.nz = z(), z()
        self.abuf, self.bbuf, self.Dbuf = z(), z(), z()
        self.br1, self.br2, self.prev1, self.prev2, self.gt1, self.gt2 = z(), z(), z(), z(), z(), z()
        self.wbit = np.zeros(n, dtype=bool)
        self.bname = None
        self.sign = np.zeros((n, 6), dtype=np.int8)

    def on_bits(self, j, inbit, outbit, alive):
        t = self.t
        a = np.zeros(t.tdirs.shape, dtype=bool)
        b = np.zeros(t.tdirs.shape, dtype=bool)
        m = t.elem >= 0
        a[m] = outbit[t.elem[m]]
        mp = t.predinst >= 0
        b[mp] = inbit[t.predinst[mp]]
        if self.observer is not None:
            self.observer.append((a.copy(), b.copy()))
        D, self.brD = _sub(a, b, self.brD)
        self.nz |= D
        self.abuf, self.bbuf, self.Dbuf = a, b, D
        r = t.term >= 0
        self.wbit[:] = False
        self.wbit[r] = inbit[t.term[r]]

    def round_b(self, j, lab, sends):
        if not self.with_w:
            return
        t = self.t
        name = group_pins(lab, self.c, t.tdirs, t.lane + 1)
        self.bname = name
        r = (t.term >= 0) & self.wbit
        sends[np.nonzero(r)[0], name[r]] = True

    def on_bcast(self, j, recv):
        if not self.with_w:
            return
        t = self.t
        n = t.n
        w = np.zeros(n, dtype=bool)
        m = self.bname >= 0
        w[m] = recv[np.nonzero(m)[0], self.bname[m]]
        W = np.broadcast_to(w[:, None], (n, 6))
        self._compare(self.abuf, self.bbuf, self.Dbuf, W)

    def _compare(self, a, b, D, W):
        x1, self.br1 = _sub(b, a, self.br1)
        x2, self.br2 = _sub(W, D, self.br2)
        y1, y2 = self.prev1, self.prev2
        self.gt1 = np.where(y1 != W, y1 & ~W, self.gt1)
        self.gt2 = np.where(y2 != W, y2 & ~W, self.gt2)
        self.prev1, self.prev2 = x1, x2

    def finish(self):
        neg = self.brD
        self.sign = np.where(self.nz, np.where(neg, -1, 1), 0).astype(np.int8) * self.t.tdirs
        if self.with_w:
            z = np.zeros_like(self.abuf)
            self._compare(z, z, z, z)
            self.bad = np.where(self.sign > 0, self.gt2, self.gt1) & self.t.tdirs


def run_tours(engine: CircuitEngine, tours: list, with_w: bool = False, phase: str = "euler_tour", observers=None) -> list:
    observers = observers or [None] * len(tours)
    forest, offs = InstanceForest.concat([t.forest for t in tours])
    cons = [TourConsumer(t, with_w, engine.c, ob) for t, ob in zip(tours, observers)]

    class Multi(Consumer):
        def on_bits(self, j, inbit, outbit, alive):
            for t, o, cs in zip(tours, offs, cons):
                k = t.forest.size
                cs.on_bits(j, inbit[o:o + k], outbit[o:o + k], alive[o:o + k])

        def round_b(self, j, lab, sends):
            for cs in cons:
                cs.round_b(j, lab, sends)

        def on_bcast(self, j, recv):
            for cs in cons:
                cs.on_bcast(j, recv)

        def finish(self):
            for cs in cons:
                cs.finish()

    if engine.c < max(t.lane for t in tours) + LANES:
        raise EngineError(f"tour needs {max(t.lane for t in tours) + LANES} pins, engine has {engine.c}")
    run_pasc(engine, forest, Multi(), phase=phase)
    return cons


def euler_tour(engine: CircuitEngine, tdirs, root, marks, with_w=False, lane=0, phase="euler_tour", observer=None) -> TourConsumer:
    t = EulerTour(tdirs, root, marks, lane)
    return run_tours(engine, [t], with_w, phase, [observer])[0]


# --- root and prune -----------------------------------------------------------

@dataclass
class RapResult:
    in_vq: np.ndarray
    parent: np.ndarray
    sign: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return (self.sign != 0).sum(1)


def rap_from_sign(tdirs, root, sign) -> RapResult:
    pos = sign > 0
    in_tree = np.asarray(tdirs).any(1) | np.asarray(root)
    in_vq = np.asarray(root, dtype=bool) | (pos.any(1) & in_tree)
    parent = np.where(pos.any(1) & ~np.asarray(root, dtype=bool), np.argmax(pos, axis=1), -1)
    return RapResult(in_vq, parent, sign)


def root_and_prune(engine: CircuitEngine, tdirs, root, Q, lane=0, phase="root_and_prune") -> RapResult:
    cs = euler_tour(engine, tdirs, root, Q, lane=lane, phase=phase)
    return rap_from_sign(tdirs, root, cs.sign)


def augmentation(engine: CircuitEngine, tdirs, root, Q, lane=0, phase="augmentation") -> np.ndarray:
    rap = root_and_prune(engine, tdirs, root, Q, lane, phase)
    return rap.in_vq & (rap.degree >= 3)


def centroids(engine: CircuitEngine, tdirs, root, Q, lane=0, phase="centroids") -> np.ndarray:
    tdirs = np.asarray(tdirs, dtype=bool)
    cs = euler_tour(engine, tdirs, root, Q, with_w=True, lane=lane, phase=phase)
    in_tree = tdirs.any(1) | np.asarray(root, dtype=bool)
    return np.asarray(Q, dtype=bool) & in_tree & ~cs.bad.any(1)


# --- election -------------------------------------------------------------------

class ElectionProgram(Program):
    """One round: the tour circuit is cut at marked elements and the root beeps.

    The owner of the marked element whose predecessor side hears the beep
    is elected. A root whose own first element is marked elects itself.
    """

    phase = "election"
    fields = (StateField("marked", 1), StateField("elected", 1))

    def __init__(self, tour: EulerTour):
        self.t = tour

    def start(self, view):
        super().start(view)
        t = self.t
        self.marked = np.asarray(t.marks, dtype=bool).copy()
        self.elected = np.zeros(t.n, dtype=bool)

    def activate(self, recv):
        v = self.view
        t = self.t
        c = v.pins
        lab = v.default_labels()
        us, ds = t.us, t.ds
        own_mark = self.marked[us] & (ds == t.first[us])
        succ_pin = ds * c + t.lane + _succ_lane(ds)
        pd = t.pd
        has_pred = pd >= 0
        pred_lane = t.lane + _pred_lane(np.maximum(pd, 0))
        join = has_pred & ~own_mark
        lab[us, ds, t.lane + _succ_lane(ds)] = succ_pin
        lab[us[has_pred], pd[has_pred], pred_lane[has_pred]] = np.where(join[has_pred], succ_pin[has_pred], (pd * c + pred_lane)[has_pred])
        r = np.nonzero(t.term >= 0)[0]
        tl = t.last[r]
        self.term_name = tl * c + t.lane + _pred_lane(tl)
        lab[r, tl, t.lane + _pred_lane(tl)] = self.term_name
        self.pred_name = np.where(has_pred, pd * c + pred_lane, -1)
        sends = v.no_sends()
        ref = t.is_ref_elem & ~own_mark
        sends[us[ref], succ_pin[ref]] = True
        self.own_mark = own_mark
        return Activation(lab, sends, True)

    def finish(self, recv):
        t = self.t
        us = t.us
        hit = self.own_mark & (self.pred_name >= 0)
        got = np.zeros(len(us), dtype=bool)
        got[hit] = recv[us[hit], self.pred_name[hit]]
        self.elected[us[got]] = True
        self.elected[us[self.own_mark & t.is_ref_elem]] = True
        single = np.asarray(t.root) & ~t.tdirs.any(1) & self.marked
        self.elected |= single
        r = np.nonzero(t.term >= 0)[0]
        self.fault = np.zeros(t.n, dtype=bool)
        self.fault[r] = recv[r, self.term_name]
        self.fault |= np.asarray(t.root) & ~t.tdirs.any(1) & ~self.marked


def election(engine: CircuitEngine, tdirs, root, Q, lane=0, phase="election", strict=True) -> np.ndarray:
    t = EulerTour(tdirs, root, Q, lane)
    prog = ElectionProgram(t)
    engine.run(prog, phase=phase)
    if strict and prog.fault.any():
        u = engine.ix.nodes[int(np.nonzero(prog.fault)[0][0])]
        raise ElectionFault(f"no marked amoebot in the tree rooted at {tuple(u)}")
    return prog.elected


# --- decomposition --------------------------------------------------------------

class SplitRound(Program):
    """Elected centroids beep on their tree pins (lane 0); the rest of each
    subtree forms a component circuit on lane 1 where unelected Q' members
    beep; a global circuit on lane 2 carries whether any of them remain."""

    phase = "decomposition_split"
    fields = (StateField("tdirs", 1), StateField("flags", 3))

    def __init__(self, tdirs, elected_now, pending):
        self.tdirs = np.asarray(tdirs, dtype=bool)
        self.cent = np.asarray(elected_now, dtype=bool)
        self.pending = np.asarray(pending, dtype=bool)

    def start(self, view):
        super().start(view)
        self.flags = self.cent.astype(np.int8) + 2 * self.pending.astype(np.int8)

    def activate(self, recv):
        v = self.view
        c = v.pins
        lab = v.default_labels()
        sends = v.no_sends()
        rows, ds = np.nonzero(self.tdirs & self.cent[:, None])
        sends[rows, ds * c + 0] = True
        keep = self.tdirs & ~self.cent[:, None]
        self.cname = group_pins(lab, c, keep, 1)
        m = self.pending & (self.cname >= 0)
        sends[np.nonzero(m)[0], self.cname[m]] = True
        self.gname = group_pins(lab, c, v.occ, 2)
        g = self.pending & (self.gname >= 0)
        sends[np.nonzero(g)[0], self.gname[g]] = True
        return Activation(lab, sends, True)

    def finish(self, recv):
        c = self.view.pins
        n = self.view.n
        self.heard_cut = np.zeros((n, 6), dtype=bool)
        for d in range(6):
            self.heard_cut[:, d] = recv[:, d * c] & self.tdirs[:, d] & ~self.cent
        self.comp_has = np.zeros(n, dtype=bool)
        m = self.cname >= 0
        self.comp_has[m] = recv[np.nonzero(m)[0], self.cname[m]]
        self.comp_has |= self.pending & (self.cname < 0)
        self.more = np.zeros(n, dtype=bool)
        m = self.gname >= 0
        self.more[m] = recv[np.nonzero(m)[0], self.gname[m]]
        self.more |= self.pending


@dataclass
class Decomposition:
    levels: list
    level_of: np.ndarray
    rounds: int = 0


def decomposition(engine: CircuitEngine, tdirs, root, Qp, lane=0, phase="decomposition") -> Decomposition:
    """Level-by-level centroid decomposition; level numbers are observed by the host."""
    n = engine.n
    tdirs = np.asarray(tdirs, dtype=bool).copy()
    root = np.asarray(root, dtype=bool).copy()
    pending = np.asarray(Qp, dtype=bool).copy()
    live = tdirs.any(1) | root
    level_of = np.full(n, -1, dtype=np.int64)
    levels = []
    before = engine.stats.rounds_total
    while True:
        cent = centroids(engine, tdirs, root, pending & live, lane, phase=phase)
        elected = election(engine, tdirs, root, cent, lane, phase=phase)
        level_of[elected] = len(levels)
        levels.append([engine.ix.nodes[i] for i in np.nonzero(elected)[0]])
        pending &= ~elected
        sp = SplitRound(tdirs, elected, pending)
        engine.run(sp, phase=phase)
        cut = sp.heard_cut
        new_root = cut.any(1)
        tdirs &= ~cut
        tdirs[elected] = False
        root = new_root
        # subtrees whose component circuit stayed silent drop out
        dead = ~sp.comp_has
        tdirs[dead] = False
        root &= ~dead
        live &= ~elected & ~dead
        if not sp.more.any():
            break
    return Decomposition(levels, level_of, engine.stats.rounds_total - before)


# --- portal trees -----------------------------------------------------------------

def axis_dirs(axis: int):
    """(along, north, south) direction pairs of an axis in its rotated frame.

    `along` is (forward, back); the representative has no back neighbor.
    """
    a = rel_dir(0, int(axis))
    return (a, (a + 3) % 6), ((a + 1) % 6, (a + 2) % 6), ((a + 4) % 6, (a + 5) % 6)


def portal_masks(occ: np.ndarray, axis: int) -> dict:
    along, north, south = axis_dirs(axis)
    fwd, back = along
    ne, nw = north
    sw, se = south
    z = lambda: np.zeros_like(occ)
    m = {"along": z(), "north": z(), "south": z(), "north_contact": z(), "south_contact": z()}
    m["along"][:, [fwd, back]] = occ[:, [fwd, back]]
    m["north"][:, [ne, nw]] = occ[:, [ne, nw]]
    m["south"][:, [sw, se]] = occ[:, [sw, se]]
    # neighbors along the axis touching the same side portal
    m["north_contact"][:, fwd] = occ[:, fwd] & occ[:, ne]
    m["north_contact"][:, back] = occ[:, back] & occ[:, nw]
    m["south_contact"][:, fwd] = occ[:, fwd] & occ[:, se]
    m["south_contact"][:, back] = occ[:, back] & occ[:, sw]
    m["rep"] = ~occ[:, back]
    m["east"] = ~occ[:, fwd]
    return m


@dataclass
class PortalTreeView:
    """What each amoebot knows locally about its portal for one axis.

    `occ` is the occupancy restricted to the current region; amoebots
    outside the region have an all-false row and take no part.
    """

    axis: int
    occ: np.ndarray
    member: np.ndarray
    masks: dict
    tdirs: np.ndarray
    inter: np.ndarray

    @classmethod
    def of(cls, occ: np.ndarray, axis: int, member=None) -> "PortalTreeView":
        occ = np.asarray(occ, dtype=bool)
        member = np.ones(len(occ), dtype=bool) if member is None else np.asarray(member, dtype=bool)
        occ = occ & member[:, None]
        m = portal_masks(occ, axis)
        m["rep"] &= member
        m["east"] &= member
        t = implicit_tree_dirs(occ, axis)
        return cls(int(axis), occ, member, m, t, t & ~m["along"])

    @property
    def rep(self) -> np.ndarray:
        return self.masks["rep"]


def portal_sets(lab: np.ndarray, c: int, view: PortalTreeView, lane: int) -> np.ndarray:
    """Portal circuit on one lane; a lone member gets a private set on an unlinked pin."""
    name = group_pins(lab, c, view.masks["along"], lane)
    back = axis_dirs(view.axis)[0][1]
    return np.where(name >= 0, name, back * c + lane)


def portal_beeps(engine: CircuitEngine, items, phase="portal_beep") -> list:
    """One round on portal circuits of several (view, lane, senders) items.

    Portal circuits of different axes use disjoint pins, so items may share
    lanes as long as their axes differ.
    """
    v = engine.view()
    lab = v.default_labels()
    sends = v.no_sends()
    rows = np.arange(engine.n)
    names = []
    for view, lane, who in items:
        name = portal_sets(lab, engine.c, view, lane)
        names.append(name)
        w = np.asarray(who, dtype=bool) & view.member
        sends[rows[w], name[w]] = True
    recv = beep_round(engine, lab, sends, phase)
    return [recv[rows, name] & view.member for name, (view, _, _) in zip(names, items)]


def portal_beep(engine: CircuitEngine, view: PortalTreeView, sends_by_lane: dict, phase="portal_beep") -> dict:
    """One round on portal circuits; per lane, whether each amoebot's portal heard a beep."""
    heard = portal_beeps(engine, [(view, lane, who) for lane, who in sends_by_lane.items()], phase)
    return dict(zip(sends_by_lane, heard))


@dataclass
class PortalRap:
    in_vq: np.ndarray
    north: np.ndarray
    south: np.ndarray
    sign: np.ndarray

    def side(self, name: str) -> np.ndarray:
        return self.north if name == "north" else self.south


# relation of a side portal to one's own portal
NONE, PARENT, CHILD = 0, 1, 2


def contact_sets(lab, c, view: PortalTreeView, side: str, lane: int) -> np.ndarray:
    """Contact circuit toward one side portal, -1 where a member has no contact links.

    Members touching the same side portal form a contiguous run, so a member
    without contact links is the only one and holds the connecting edge itself.
    """
    return group_pins(lab, c, view.masks[f"{side}_contact"], lane)


def spread_portal_raps(engine: CircuitEngine, items, phase="portal_rap") -> list:
    """Two rounds for any number of (view, isR, sign) items of distinct axes:
    contact circuits tell members about their side portals, then the portal
    circuit tells whether the portal survived."""
    c = engine.c
    v = engine.view()
    lab = v.default_labels()
    sends = v.no_sends()
    rows = np.arange(engine.n)
    names = []
    for view, _, sign in items:
        nm = {}
        s_inter = sign * view.inter
        for side, base in (("north", 0), ("south", 2)):
            for k, what in enumerate((1, -1)):
                name = contact_sets(lab, c, view, side, base + k)
                nm[(side, what)] = name
                who = ((s_inter == what) & view.masks[side]).any(1) & (name >= 0)
                sends[rows[who], name[who]] = True
        names.append(nm)
    recv = beep_round(engine, lab, sends, phase)
    rels = []
    for (view, _, sign), nm in zip(items, names):
        rel = {}
        for side in ("north", "south"):
            r = np.zeros(engine.n, dtype=np.int8)
            touch = view.masks[side].any(1)
            own = (sign * view.inter * view.masks[side]).sum(1)
            for what, code in ((1, PARENT), (-1, CHILD)):
                name = nm[(side, what)]
                lone = name < 0
                got = np.where(lone, own == what, recv[rows, np.maximum(name, 0)])
                r[touch & got] = code
            rel[side] = r
        rels.append(rel)
    ups = []
    for view, isR, sign in items:
        up = ((sign * view.inter) > 0).any(1) | (np.asarray(isR, dtype=bool) & view.member)
        ups.append((view, 0, up))
    heard = portal_beeps(engine, ups, phase)
    return [PortalRap(h, r["north"], r["south"], it[2]) for h, r, it in zip(heard, rels, items)]


def spread_portal_rap(engine: CircuitEngine, view: PortalTreeView, isR, sign, phase="portal_rap") -> PortalRap:
    return spread_portal_raps(engine, [(view, isR, sign)], phase)[0]


def portal_tour_inputs(view: PortalTreeView, isR, inQ):
    root = view.rep & np.asarray(isR, dtype=bool)
    marks = view.rep & np.asarray(inQ, dtype=bool)
    return root, marks


def induced_occ(engine: CircuitEngine, member, occ=None) -> np.ndarray:
    """Occupancy of the region formed by `member`; each amoebot knows its neighbors' membership."""
    occ = engine.occ if occ is None else np.asarray(occ, dtype=bool)
    member = np.asarray(member, dtype=bool)
    nbr = engine.ix.nbr
    return occ & member[:, None] & (nbr >= 0) & member[np.maximum(nbr, 0)]


def _view(engine, axis, occ, member):
    if member is not None:
        occ = induced_occ(engine, member, occ)
    return PortalTreeView.of(engine.occ if occ is None else occ, axis, member)


def portal_root_and_prune(engine: CircuitEngine, axis: int, isR, inQ, occ=None, member=None, phase="portal_rap") -> PortalRap:
    view = _view(engine, axis, occ, member)
    root, marks = portal_tour_inputs(view, isR, inQ)
    cs = euler_tour(engine, view.tdirs, root, marks, phase=phase)
    return spread_portal_rap(engine, view, isR, cs.sign, phase)


def portal_election(engine: CircuitEngine, axis: int, isR, inQ, occ=None, member=None, phase="portal_election") -> np.ndarray:
    view = _view(engine, axis, occ, member)
    root, marks = portal_tour_inputs(view, isR, inQ)
    rep_elected = election(engine, view.tdirs, root, marks, phase=phase)
    return portal_beep(engine, view, {0: rep_elected}, phase)[0]


def portal_centroids(engine: CircuitEngine, axis: int, isR, inQ, occ=None, member=None, phase="portal_centroids") -> np.ndarray:
    view = _view(engine, axis, occ, member)
    root, marks = portal_tour_inputs(view, isR, inQ)
    inQ = np.asarray(inQ, dtype=bool) & view.member
    cs = euler_tour(engine, view.tdirs, root, marks, with_w=True, phase=phase)
    # reading a positive difference as the parent side needs the portal's own unit
    # inside the subtree, which holds for members of Q-portals
    bad = (cs.bad & view.inter).any(1) & inQ
    heard = portal_beep(engine, view, {0: bad}, phase)[0]
    return inQ & ~heard


class _AtLeastThree(Consumer):
    """Streams two per-amoebot counts and keeps only whether their sum is >= 3."""

    def __init__(self, n):
        self.n = n
        self.carry = np.zeros(n, dtype=bool)
        self.b0 = np.zeros(n, dtype=bool)
        self.ge = np.zeros(n, dtype=bool)
        self.j = 0

    def on_bits(self, j, inbit, outbit, alive):
        n = self.n
        x, y = outbit[:n], outbit[n:]
        bit = x ^ y ^ self.carry
        self.carry = (x & y) | (self.carry & (x ^ y))
        if j == 0:
            self.b0 = bit
        elif j == 1:
            self.ge |= self.b0 & bit
        else:
            self.ge |= bit
        self.j = j + 1

    def finish(self):
        if self.j >= 2:
            self.ge |= self.carry
        elif self.j == 1:
            self.ge |= self.b0 & self.carry


def portal_degree_at_least_three(engine: CircuitEngine, view: PortalTreeView, sign, phase) -> np.ndarray:
    """Every member counts its surviving north and south portal-tree edges
    (at most one each); two prefix sums along the portal on separate lanes
    bring the totals to the east end, which beeps on the portal circuit."""
    n = engine.n
    fwd, back = axis_dirs(view.axis)[0]
    m = view.masks
    live = (sign != 0) & view.inter
    parts = []
    has_f = np.nonzero(m["along"][:, fwd])[0]
    has_b = np.nonzero(m["along"][:, back])[0]
    for lane, w in ((0, (live & m["north"]).any(1)), (2, (live & m["south"]).any(1))):
        pi = np.concatenate([has_f, has_b])
        pd = np.concatenate([np.full(len(has_f), fwd), np.full(len(has_b), back)])
        pp = np.concatenate([np.zeros(len(has_f), dtype=bool), np.ones(len(has_b), dtype=bool)])
        parts.append(InstanceForest(np.arange(n), w & view.member, pi, pd, np.full(len(pi), lane), pp))
    forest, _ = InstanceForest.concat(parts)
    cons = _AtLeastThree(n)
    run_pasc(engine, forest, cons, phase=phase)
    hit = m["east"] & cons.ge
    return portal_beep(engine, view, {0: hit}, phase)[0]


def portal_augmentation(engine: CircuitEngine, axis: int, isR, inQ, occ=None, member=None, phase="portal_augmentation") -> np.ndarray:
    view = _view(engine, axis, occ, member)
    root, marks = portal_tour_inputs(view, isR, inQ)
    cs = euler_tour(engine, view.tdirs, root, marks, phase=phase)
    rap = spread_portal_rap(engine, view, isR, cs.sign, phase)
    return rap.in_vq & portal_degree_at_least_three(engine, view, cs.sign, phase)


class PortalSplitRound(Program):
    """Members of elected portals beep toward every neighbor (lane 0); the
    remaining region forms component circuits over its implicit tree (lane 1)
    where members of unelected Q' portals beep; lane 2 is global."""

    phase = "portal_decomposition_split"
    fields = (StateField("occ", 1), StateField("flags", 2))

    def __init__(self, view: PortalTreeView, elected, pending):
        self.pv = view
        self.occ = view.occ
        self.cent = np.asarray(elected, dtype=bool)
        self.pending = np.asarray(pending, dtype=bool) & view.member
        self.flags = self.cent.astype(np.int8) + 2 * self.pending.astype(np.int8)

    def activate(self, recv):
        v = self.view
        c = v.pins
        lab = v.default_labels()
        sends = v.no_sends()
        rows, ds = np.nonzero(self.pv.occ & self.cent[:, None])
        sends[rows, ds * c] = True
        keep = self.pv.tdirs & ~self.cent[:, None]
        self.cname = group_pins(lab, c, keep, 1)
        self.cname = np.where(self.cname >= 0, self.cname, 1)
        m = self.pending & ~self.cent
        sends[np.nonzero(m)[0], self.cname[m]] = True
        self.gname = group_pins(lab, c, v.occ, 2)
        self.gname = np.where(self.gname >= 0, self.gname, 2)
        sends[np.nonzero(self.pending)[0], self.gname[self.pending]] = True
        return Activation(lab, sends, True)

    def finish(self, recv):
        c = self.view.pins
        n = self.view.n
        rows = np.arange(n)
        cut = np.zeros((n, 6), dtype=bool)
        for d in range(6):
            cut[:, d] = recv[:, d * c] & self.pv.occ[:, d]
        self.cut = cut & ~self.cent[:, None]
        self.comp_has = recv[rows, self.cname] & self.pv.member
        self.more = recv[rows, self.gname]


def portal_decomposition(engine: CircuitEngine, axis: int, isR, inQp, occ=None, member=None, phase="portal_decomposition", until=None) -> Decomposition:
    """Centroid levels of the portal tree. `until(level, elected)` may stop
    the computation right after a level's election."""
    n = engine.n
    occ = (engine.occ if occ is None else np.asarray(occ, dtype=bool)).copy()
    member = np.ones(n, dtype=bool) if member is None else np.asarray(member, dtype=bool).copy()
    isR = np.asarray(isR, dtype=bool) & member
    pending = np.asarray(inQp, dtype=bool) & member
    level_of = np.full(n, -1, dtype=np.int64)
    levels = []
    before = engine.stats.rounds_total
    while True:
        cent = portal_centroids(engine, axis, isR, pending, occ, member, phase)
        elected = portal_election(engine, axis, isR, cent, occ, member, phase)
        level_of[elected] = len(levels)
        levels.append([engine.ix.nodes[i] for i in np.nonzero(elected)[0]])
        if until is not None and until(len(levels) - 1, elected):
            break
        pending &= ~elected
        view = PortalTreeView.of(occ, axis, member)
        sp = PortalSplitRound(view, elected, pending)
        engine.run(sp, phase=phase)
        # members that lost a neighbor tell their whole portal it roots a new part
        touched = sp.cut.any(1)
        member &= ~elected & sp.comp_has
        occ &= ~sp.cut
        occ &= member[:, None]
        nv = PortalTreeView.of(occ, axis, member)
        isR = portal_beep(engine, nv, {0: touched & member}, phase)[0]
        if not sp.more.any():
            break
    return Decomposition(levels, level_of, engine.stats.rounds_total - before)
