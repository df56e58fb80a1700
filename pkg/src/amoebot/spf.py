"""Shortest path forests with several sources: divide and conquer over X-portals.

Building blocks (line algorithm, forest merging, propagation across a portal)
run on any engine. The driver splits the structure into regions at portals
of Q' and at marked connector amoebots, solves each region, and merges the
regions back along the levels of the Q'-centroid decomposition.

An amoebot belonging to several regions keeps one copy of its state per
region. Each step lays the regions it needs side by side as disjoint copies
in one engine, which stands in for giving every region its own pin lanes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit_engine import Activation, CircuitEngine, ContractFault, Program, RoundStats, StateField, ValidationFault, beep_round, group_pins
from .forest import ParentForest
from .pasc import Consumer, InstanceForest, run_pasc
from .spt import MIN_PINS, learn_children, spt_arrays
from .tree_primitives import (
    EulerTour,
    PortalTreeView,
    _pred_lane,
    _succ_lane,
    euler_tour,
    induced_occ,
    portal_augmentation,
    portal_beep,
    portal_beeps,
    portal_decomposition,
    portal_election,
    portal_tour_inputs,
    rap_from_sign,
)
from .triangular_grid import implicit_tree_dirs, validate_structure

E, NE, NW, W, SW, SE = range(6)


@dataclass
class Forest:
    """Per-amoebot membership and parent direction (-1 for roots and non-members).

    Within a region a forest either covers everything or nothing.
    """

    member: np.ndarray
    parent: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "Forest":
        return cls(np.zeros(n, dtype=bool), np.full(n, -1, dtype=np.int64))

    @property
    def roots(self) -> np.ndarray:
        return self.member & (self.parent < 0)

    def copy(self) -> "Forest":
        return Forest(self.member.copy(), self.parent.copy())


def check_forest(engine: CircuitEngine, f: Forest, what: str) -> None:
    """Local consistency: every parent pointer leads to a neighboring member."""
    if (~f.member & (f.parent >= 0)).any():
        raise ContractFault(f"{what}: parent pointer on a non-member")
    kids = np.nonzero(f.member & (f.parent >= 0))[0]
    tgt = engine.ix.nbr[kids, f.parent[kids]]
    if (tgt < 0).any() or not f.member[tgt].all():
        raise ContractFault(f"{what}: parent outside the forest")


# --- streaming comparisons --------------------------------------------------------

class Compare(Consumer):
    """sign(x - y) of two bit streams per row; higher bits override lower ones."""

    def __init__(self, n: int):
        self.cmp = np.zeros(n, dtype=np.int8)

    def feed(self, x, y):
        self.cmp = np.where(x & ~y, 1, np.where(~x & y, -1, self.cmp)).astype(np.int8)


def forest_instances(engine: CircuitEngine, f: Forest, lane: int) -> InstanceForest:
    """One instance per member; roots are references, everyone else weighs 1."""
    amo = np.nonzero(f.member)[0]
    k = np.full(engine.n, -1, dtype=np.int64)
    k[amo] = np.arange(len(amo))
    child = amo[f.parent[amo] >= 0]
    d = f.parent[child]
    par = engine.ix.nbr[child, d]
    pi = np.concatenate([k[child], k[par]])
    pd = np.concatenate([d, (d + 3) % 6])
    pp = np.concatenate([np.ones(len(child), dtype=bool), np.zeros(len(child), dtype=bool)])
    return InstanceForest(amo, f.parent[amo] >= 0, pi, pd, np.full(len(pi), lane, dtype=np.int64), pp)


class _TwoValues(Compare):
    """Distances of every amoebot in two instance sets, compared bit by bit."""

    def __init__(self, n, amo1, amo2, k1):
        super().__init__(n)
        self.n = n
        self.amo1, self.amo2, self.k1 = amo1, amo2, k1
        self.alive1 = np.zeros(n, dtype=bool)
        self.alive2 = np.zeros(n, dtype=bool)

    def on_bits(self, j, inbit, outbit, alive):
        x = np.zeros(self.n, dtype=bool)
        y = np.zeros(self.n, dtype=bool)
        x[self.amo1] = outbit[: self.k1]
        y[self.amo2] = outbit[self.k1:]
        if j == 0:
            self.alive1[self.amo1] = alive[: self.k1]
            self.alive2[self.amo2] = alive[self.k1:]
        self.feed(x, y)


def compare_two(engine: CircuitEngine, f1: InstanceForest, f2: InstanceForest, phase: str):
    """Runs both instance sets at once; returns (alive1, alive2, sign(d1 - d2))."""
    forest, _ = InstanceForest.concat([f1, f2])
    cons = _TwoValues(engine.n, f1.inst_amo, f2.inst_amo, f1.size)
    run_pasc(engine, forest, cons, phase=phase)
    return cons.alive1, cons.alive2, cons.cmp


# --- line algorithm ----------------------------------------------------------------

def _chain(engine, row, start, fwd: int, lane: int, active) -> InstanceForest:
    """Chains along `fwd` inside `row`, each beginning at a `start` amoebot and
    ending before the next one; chain pieces without a start stay mute."""
    nbr = engine.ix.nbr
    back = (fwd + 3) % 6
    amo = np.nonzero(row)[0]
    k = np.full(engine.n, -1, dtype=np.int64)
    k[amo] = np.arange(len(amo))
    nb = nbr[amo, back]
    has_back = (nb >= 0) & row[np.maximum(nb, 0)] & ~start[amo]
    u = amo[has_back]
    v = nbr[u, back]
    pi = np.concatenate([k[u], k[v]])
    pd = np.concatenate([np.full(len(u), back), np.full(len(u), fwd)])
    pp = np.concatenate([np.ones(len(u), dtype=bool), np.zeros(len(u), dtype=bool)])
    mute = ~has_back & ~start[amo]
    return InstanceForest(amo, np.asarray(active, dtype=bool)[amo], pi, pd, np.full(len(pi), lane, dtype=np.int64), pp, mute)


def _line_chain(engine, row, src, fwd: int, lane: int) -> InstanceForest:
    return _chain(engine, row, src, fwd, lane, ~src)


def line_algorithm(engine: CircuitEngine, row, src, phase: str = "line") -> Forest:
    """Nearest source along each X-row segment in `row`; ties go west."""
    row = np.asarray(row, dtype=bool)
    src = np.asarray(src, dtype=bool) & row
    from_w = _line_chain(engine, row, src, E, 0)
    from_e = _line_chain(engine, row, src, W, 2)
    aw, ae, cmp = compare_two(engine, from_w, from_e, phase)
    f = Forest.empty(engine.n)
    west = aw & (~ae | (cmp <= 0)) & ~src
    east = ae & ~west & ~src
    f.parent[west] = W
    f.parent[east] = E
    f.member = src | west | east
    return f


# --- merging -----------------------------------------------------------------------

def merge_forests(engine: CircuitEngine, f1: Forest, f2: Forest, phase: str = "merge") -> Forest:
    """Per amoebot the parent of the forest with the smaller distance; ties keep f1."""
    check_forest(engine, f1, "first forest")
    check_forest(engine, f2, "second forest")
    a1, a2, cmp = compare_two(engine, forest_instances(engine, f1, 0), forest_instances(engine, f2, 2), phase)
    first = a1 & (~a2 | (cmp <= 0))
    second = a2 & ~first
    out = Forest.empty(engine.n)
    out.member = first | second
    out.parent = np.where(first, f1.parent, np.where(second, f2.parent, -1))
    return out


# --- propagation across a portal -------------------------------------------------

# toward the portal, seen from the far side: (y-neighbor, z-neighbor)
TOWARD = {0: (NE, NW), 1: (SW, SE)}
# rows gained per direction when moving north
ROW_STEP = np.array([0, 1, 1, 0, -1, -1])


class _Forward(Compare):
    """PASC over the source forest; portal members forward their bits along
    their Y- and Z-portals so doubly visible amoebots compare the two."""

    def __init__(self, engine, amo, P, views, both):
        super().__init__(engine.n)
        self.n = engine.n
        self.c = engine.c
        self.amo = amo
        self.P = P
        self.views = views
        self.both = both
        self.bit = np.zeros(engine.n, dtype=bool)

    def on_bits(self, j, inbit, outbit, alive):
        self.bit[:] = False
        self.bit[self.amo] = outbit

    def round_b(self, j, lab, sends):
        rows = np.arange(self.n)
        self.names = []
        for view in self.views:
            name = group_pins(lab, self.c, view.masks["along"], 1)
            name = np.where(name >= 0, name, -1)
            self.names.append(name)
            w = self.P & self.bit & (name >= 0)
            sends[rows[w], name[w]] = True

    def on_bcast(self, j, recv):
        rows = np.arange(self.n)
        got = []
        for name in self.names:
            got.append(np.where(name >= 0, recv[rows, np.maximum(name, 0)], False))
        x, y = got
        self.feed(x & self.both, y & self.both)


def _neighbor_beep(engine: CircuitEngine, who_by_channel: dict, phase: str) -> dict:
    """One round on bare links: per channel, an (n, 6) table of which neighbors beeped.

    Channel k uses lanes 2k and 2k+1; each end of a link sends on its own lane
    so no amoebot hears itself.
    """
    c = engine.c
    up = np.arange(6) >= 3
    sends = engine.view().no_sends()
    for k, who in who_by_channel.items():
        rows = np.nonzero(who)[0]
        for d in range(6):
            sends[rows, d * c + 2 * k + up[d]] = True
    recv = beep_round(engine, None, sends, phase)
    return {k: recv[:, np.arange(6) * c + 2 * k + ~up] & engine.occ for k in who_by_channel}


def propagate(engine: CircuitEngine, P, AP, region, f: Forest, phase: str = "propagate") -> Forest:
    """Extends a forest on A+P across the X-portal pieces P into the rest of the region."""
    n = engine.n
    P = np.asarray(P, dtype=bool)
    AP = np.asarray(AP, dtype=bool)
    region = np.asarray(region, dtype=bool)
    B = region & ~AP
    check_forest(engine, f, "forest")
    if (f.roots & B).any():
        raise ContractFault("sources must lie on the near side or the portal")
    PB = P | B
    nbr = engine.ix.nbr
    inB = lambda d: (nbr[:, d] >= 0) & B[np.maximum(nbr[:, d], 0)]
    occ = induced_occ(engine, PB)
    xview = PortalTreeView.of(occ, 0, P)
    # each portal piece agrees on which side the far region lies (lane 0: south)
    south, north = portal_beeps(engine, [(xview, 0, P & (inB(SW) | inB(SE))), (xview, 1, P & (inB(NE) | inB(NW)))], phase)
    live = P & f.member
    views = [PortalTreeView.of(occ, axis, PB) for axis in (1, 2)]
    heard = portal_beeps(engine, [(v, lane, live & side) for v in views for lane, side in ((0, south), (1, north))], phase)
    vis_y = (heard[0] | heard[1]) & B
    vis_z = (heard[2] | heard[3]) & B
    p_north = (heard[0] | heard[2]) & B
    ny = np.where(p_north, TOWARD[0][0], TOWARD[1][0])
    nz = np.where(p_north, TOWARD[0][1], TOWARD[1][1])
    out = f.copy()
    one = vis_y ^ vis_z
    out.parent[one] = np.where(vis_y, ny, nz)[one]
    both = vis_y & vis_z
    fi = forest_instances(engine, f, 0)
    cons = _Forward(engine, fi.inst_amo, P, views, both)
    run_pasc(engine, fi, cons, phase=phase)
    out.parent[both] = np.where(cons.cmp <= 0, ny, nz)[both]
    Bp = vis_y | vis_z
    out.member |= Bp
    # second phase: components of the shadowed rest enter through one amoebot each
    Bpp = B & ~Bp
    near = _neighbor_beep(engine, {0: Bp & ~p_north, 1: Bp & p_north}, phase)
    zb = Bpp & (near[0] | near[1]).any(1)
    z_north = Bpp & near[1].any(1)
    zb_nb = _neighbor_beep(engine, {0: zb}, phase)[0]
    ty = np.where(z_north, TOWARD[0][0], TOWARD[1][0])
    tz = np.where(z_north, TOWARD[0][1], TOWARD[1][1])
    rows = np.arange(n)
    s_z = zb & ~zb_nb[rows, ty] & ~zb_nb[rows, tz]
    bp_dirs = near[0] | near[1]
    gain = np.where(z_north[:, None], ROW_STEP[None, :], -ROW_STEP[None, :])
    score = np.where(bp_dirs, gain * 8 - np.arange(6)[None, :], -100)
    entry = np.argmax(score, axis=1)
    member, parent = spt_arrays(engine, s_z, Bpp, region=Bpp, phase=phase)
    out.parent[Bpp] = np.where(s_z, entry, parent)[Bpp]
    out.member |= member & Bpp
    out.parent[~out.member] = -1
    return out


# --- global beeps and the level counter ------------------------------------------

def global_beeps(engine: CircuitEngine, who_by_lane: dict, phase: str) -> dict:
    """One round on per-lane circuits spanning each connected part of the engine."""
    v = engine.view()
    lab = v.default_labels()
    sends = v.no_sends()
    for lane, who in who_by_lane.items():
        lab[:, :, lane] = lane
        sends[np.asarray(who, dtype=bool), lane] = True
    recv = beep_round(engine, lab, sends, phase)
    return {lane: recv[:, lane] for lane in who_by_lane}


class _Parity(Consumer):
    def on_bits(self, j, inbit, outbit, alive):
        self.bit = outbit.copy()


class _ChainRound(Program):
    """One round on the counter chain: passing elements join their pred and
    succ pins, injectors beep on their succ set."""

    phase = "counter"
    fields = (StateField("bits", 1, counter=True), StateField("role", 1))

    def __init__(self, counter: "LevelCounter", passing, inject, phase):
        self.ctr = counter
        self.bits = counter.bits
        self.role = counter.role_amo
        self.passing = passing
        self.inject = inject
        self.phase = phase

    def activate(self, recv):
        v = self.view
        t = self.ctr
        lab = v.default_labels()
        e = self.passing & t.has_pred
        lab[t.us[e], t.pd[e], t.pl[e]] = t.succ[e]
        sends = v.no_sends()
        sends[t.us[self.inject], t.succ[self.inject]] = True
        return Activation(lab, sends, True)

    def finish(self, recv):
        t = self.ctr
        pred_name = np.where(self.passing, t.succ, t.pd * self.view.pins + t.pl)
        self.heard_pred = t.has_pred & recv[t.us, pred_name]
        self.heard_succ = recv[t.us, t.succ]


class LevelCounter:
    """Two binary counters, A and B, kept one bit per amoebot.

    Bits live on the first visits of an Euler tour of X's implicit X-portal
    tree rooted at the leader; odd visits hold A, even visits B, least
    significant bit first. Increments and decrements ripple a carry along
    the tour in one round.
    """

    def __init__(self, engine: CircuitEngine, leader, phase: str = "counter"):
        self.engine = engine
        self.phase = phase
        n, c = engine.n, engine.c
        tour = EulerTour(implicit_tree_dirs(engine.occ, 0), leader, np.ones(n, dtype=bool))
        E = len(tour.us)
        self.us, self.ds = tour.us, tour.ds
        self.pd = np.maximum(tour.pd, 0)
        self.has_pred = tour.pd >= 0
        self.pl = _pred_lane(self.pd)
        self.succ = self.ds * c + _succ_lane(self.ds)
        self.holder = tour.forest.active[:E].copy()
        self.start = tour.is_ref_elem & self.holder
        self.role = np.zeros(E, dtype=np.int8)
        if E:
            cons = _Parity()
            run_pasc(engine, tour.forest, cons, iterations=1, phase=phase)
            # odd positions hold counter A
            self.role = np.where(self.holder & ~cons.bit[:E], 1, 0).astype(np.int8)
        self.role_amo = np.zeros(n, dtype=np.int8)
        self.role_amo[self.us[self.holder]] = self.role[self.holder]
        self.bits = np.zeros(n, dtype=np.int8)
        self.capacity = [int((self.holder & (self.role == r)).sum()) for r in (0, 1)]

    def _ebit(self):
        return self.bits[self.us].astype(bool)

    def _ripple(self, which: int, carry_on: int):
        """Adds (carry_on=1) or subtracts (carry_on=0) one."""
        mine = self.holder & (self.role == which)
        b = self._ebit()
        if (b[mine] == bool(carry_on)).all():
            raise ContractFault("level counter out of range")
        passing = ~mine | (b == bool(carry_on))
        if which == 0:
            first = self.start
            inject = first & (b == bool(carry_on))
            passing &= ~first
        else:
            inject = self.start.copy()
        prog = _ChainRound(self, passing, inject, self.phase)
        self.engine.run(prog)
        flip = mine & prog.heard_pred
        if which == 0:
            flip |= self.start
        self.bits[self.us[flip]] ^= 1

    def increment(self, which: int):
        self._ripple(which, 1)

    def decrement(self, which: int):
        self._ripple(which, 0)

    def reset(self, which: int):
        self.bits[self.us[self.holder & (self.role == which)]] = 0

    def is_zero(self, which: int) -> bool:
        who = np.zeros(self.engine.n, dtype=bool)
        who[self.us[self.holder & (self.role == which)]] = True
        return not global_beeps(self.engine, {0: who & (self.bits == 1)}, self.phase)[0].any()

    def equal(self) -> bool:
        """B holders send their bit back to the A holder before them, which beeps on mismatch."""
        b = self._ebit()
        passing = ~self.holder
        inject = self.holder & (self.role == 1) & b
        # the B bit travels backwards: send on pred sets instead
        prog = _BackRound(self, passing, inject, self.phase)
        self.engine.run(prog)
        a_mine = self.holder & (self.role == 0)
        other = prog.heard_succ
        who = np.zeros(self.engine.n, dtype=bool)
        who[self.us[a_mine & (other != b)]] = True
        return not global_beeps(self.engine, {0: who}, self.phase)[0].any()

    def value(self, which: int) -> int:
        """Host-side readout for tests and reports."""
        order = np.argsort(_tour_position(self), kind="stable")
        mine = [i for i in order if self.holder[i] and self.role[i] == which]
        return sum(int(self.bits[self.us[i]]) << k for k, i in enumerate(mine))


class _BackRound(_ChainRound):
    def activate(self, recv):
        v = self.view
        t = self.ctr
        lab = v.default_labels()
        e = self.passing & t.has_pred
        lab[t.us[e], t.pd[e], t.pl[e]] = t.succ[e]
        sends = v.no_sends()
        i = self.inject & t.has_pred
        sends[t.us[i], t.pd[i] * v.pins + t.pl[i]] = True
        return Activation(lab, sends, True)


def _tour_position(ctr: LevelCounter) -> np.ndarray:
    """Position of each tour element, following successor links from the start."""
    E = len(ctr.us)
    pos = np.full(E, -1, dtype=np.int64)
    if not E:
        return pos
    nbr = ctr.engine.ix.nbr
    key = {(int(u), int(d)): i for i, (u, d) in enumerate(zip(ctr.us, ctr.pd)) if ctr.has_pred[i]}
    cur = int(np.nonzero(ctr.start)[0][0])
    for k in range(E):
        pos[cur] = k
        v = int(nbr[ctr.us[cur], ctr.ds[cur]])
        nxt = key.get((v, (int(ctr.ds[cur]) + 3) % 6))
        if nxt is None:
            break
        cur = nxt
    return pos


# --- regions -----------------------------------------------------------------------

# slots of an amoebot on a split portal: 0 north, 1 north west of a cut,
# 2 south, 3 south west of a cut; other amoebots only use slot 0
NORTH_MAIN, NORTH_WEST, SOUTH_MAIN, SOUTH_WEST = range(4)
SIDE_SLOTS = ((NORTH_MAIN, NORTH_WEST), (SOUTH_MAIN, SOUTH_WEST))


def slot_dirs(occ: np.ndarray, split: np.ndarray, cut: np.ndarray) -> np.ndarray:
    """(n, 4, 6) table: which incident edges each slot owns.

    `cut[:, side]` separates the west edge of a split amoebot's side into its own slot.
    """
    n = len(occ)
    sd = np.zeros((n, 4, 6), dtype=bool)
    whole = ~split
    sd[whole, NORTH_MAIN] = occ[whole]
    for side, (main, west), dirs in ((0, SIDE_SLOTS[0], (E, NE, NW)), (1, SIDE_SLOTS[1], (E, SW, SE))):
        c = cut[:, side]
        for d in dirs:
            sd[split, main, d] = occ[split, d]
        sd[split, main, W] = occ[split, W] & ~c[split]
        sd[split, west, W] = occ[split, W] & c[split]
    return sd


def active_slots(split: np.ndarray, cut: np.ndarray) -> np.ndarray:
    act = np.zeros((len(split), 4), dtype=bool)
    act[:, NORTH_MAIN] = True
    act[:, SOUTH_MAIN] = split
    act[:, NORTH_WEST] = split & cut[:, 0]
    act[:, SOUTH_WEST] = split & cut[:, 1]
    return act


@dataclass
class Layout:
    """Every region laid out as a separate copy in one engine.

    Node i of the engine stands for slot `slot[i]` of amoebot `orig[i]`.
    """

    engine: CircuitEngine
    orig: np.ndarray
    slot: np.ndarray
    region: np.ndarray
    node_of: np.ndarray

    @property
    def n(self) -> int:
        return len(self.orig)

    def read(self, store: "SlotForest") -> Forest:
        return Forest(store.member[self.orig, self.slot].copy(), store.parent[self.orig, self.slot].copy())

    def write(self, store: "SlotForest", f: Forest) -> None:
        store.member[self.orig, self.slot] = f.member
        store.parent[self.orig, self.slot] = np.where(f.member, f.parent, -1)

    def lift(self, amo_mask) -> np.ndarray:
        return np.asarray(amo_mask, dtype=bool)[self.orig]


@dataclass
class SlotForest:
    member: np.ndarray
    parent: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "SlotForest":
        return cls(np.zeros((n, 4), dtype=bool), np.full((n, 4), -1, dtype=np.int64))


def build_layout(base: CircuitEngine, split, cut) -> Layout:
    """Regions are the connected components of slots linked by their edges."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    from .triangular_grid import Indexed, Node

    ix = base.ix
    n = ix.n
    occ = base.occ
    split = np.asarray(split, dtype=bool)
    cut = np.asarray(cut, dtype=bool) & split[:, None]
    sd = slot_dirs(occ, split, cut)
    act = active_slots(split, cut)
    u, s, d = np.nonzero(sd & act[:, :, None])
    v = ix.nbr[u, d]
    od = (d + 3) % 6
    cand = sd[v, :, od] & act[v]
    along = (d == E) | (d == W)
    north_side = s <= NORTH_WEST
    side_ok = np.ones_like(cand)
    side_ok[:, 2:] = ~north_side[:, None]
    side_ok[:, :2] = north_side[:, None]
    cand &= np.where((along & split[u] & split[v])[:, None], side_ok, True)
    if not cand.any(1).all():
        raise ContractFault("region tags disagree across an edge")
    t = np.argmax(cand, axis=1)
    a_id = u * 4 + s
    b_id = v * 4 + t
    g = coo_matrix((np.ones(len(a_id), dtype=np.int8), (a_id, b_id)), shape=(4 * n, 4 * n))
    _, comp = connected_components(g, directed=False)
    au, aslot = np.nonzero(act)
    ids = au * 4 + aslot
    _, region = np.unique(comp[ids], return_inverse=True)
    if len(np.unique(region * n + au)) != len(au):
        raise ContractFault("a region holds two slots of one amoebot")
    coords = ix.coords
    span = int(coords[:, 0].max() - coords[:, 0].min()) + 3
    pos = coords[au] + np.stack([region * span, np.zeros_like(region)], axis=1)
    order = np.lexsort((pos[:, 1], pos[:, 0]))
    au, aslot, region, pos = au[order], aslot[order], region[order], pos[order]
    m = len(au)
    node_of = np.full((n, 4), -1, dtype=np.int64)
    node_of[au, aslot] = np.arange(m)
    nbr = np.full((m, 6), -1, dtype=np.int64)
    nbr[node_of[u, s], d] = node_of[v, t]
    # the copies must look exactly like their slot graphs
    key = pos[:, 0] * (1 << 32) + pos[:, 1]
    step = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)])
    for k in range(6):
        q = pos + step[k]
        qk = q[:, 0] * (1 << 32) + q[:, 1]
        j = np.searchsorted(key, qk)
        j = np.minimum(j, m - 1)
        geo = np.where(key[j] == qk, j, -1)
        if not (geo == nbr[:, k]).all():
            raise ContractFault("region copy does not match its slot edges")
    nodes = tuple(Node(int(a), int(b)) for a, b in pos)
    lix = Indexed(nodes, pos, nbr, {x: i for i, x in enumerate(nodes)})
    eng = CircuitEngine(lix, base.c, base.trace, base.round_limit, base.stats)
    return Layout(eng, au, aslot, region, node_of)


# --- dividing step -----------------------------------------------------------------

@dataclass
class Division:
    q: np.ndarray
    qp: np.ndarray
    root: np.ndarray
    sign: np.ndarray
    cut: np.ndarray


def compute_qprime(engine: CircuitEngine, src, leader, phase: str = "dividing"):
    """X-portals meeting S, closed under the augmentation; returns (Q, Q', root portal of Q')."""
    view = PortalTreeView.of(engine.occ, 0)
    inQ, isR = portal_beeps(engine, [(view, 0, src), (view, 1, leader)], phase)
    aug = portal_augmentation(engine, 0, isR, inQ, phase=phase)
    qp = inQ | aug
    root = portal_election(engine, 0, isR, qp, phase=phase)
    return inQ, qp, root


def unmark_westernmost(engine: CircuitEngine, qp, marks, phase: str) -> np.ndarray:
    """One round: per side, the portal circuit is cut at marks and the west end
    beeps eastward; the mark that hears it is the westernmost and drops out."""
    c = engine.c
    v = engine.view()
    lab = v.default_labels()
    sends = v.no_sends()
    view = PortalTreeView.of(engine.occ, 0, qp)
    rows = np.arange(engine.n)
    out = marks.copy()
    for side in (0, 1):
        lane = side
        m = marks[:, side] & qp
        group_pins(lab, c, view.masks["along"] & (qp & ~m)[:, None], lane)
        west = view.rep & qp
        out[west, side] = False
        w = west & ~m & view.occ[:, E]
        sends[rows[w], lab[rows[w], E, lane]] = True
    recv = beep_round(engine, lab, sends, phase)
    for side in (0, 1):
        heard = recv[:, W * c + side] & engine.occ[:, W]
        out[heard & marks[:, side], side] = False
    return out


def divide(engine: CircuitEngine, src, leader, phase: str = "dividing") -> Division:
    q, qp, root = compute_qprime(engine, src, leader, phase)
    view = PortalTreeView.of(engine.occ, 0)
    r, marks = portal_tour_inputs(view, root, qp)
    cs = euler_tour(engine, view.tdirs, r, marks, phase=phase)
    kept = (cs.sign * view.inter) != 0
    marks = np.stack([qp & (kept & view.masks["north"]).any(1), qp & (kept & view.masks["south"]).any(1)], axis=1)
    cut = unmark_westernmost(engine, qp, marks, phase)
    return Division(q, qp, root, cs.sign * view.inter, cut)


# --- base case and merging steps ---------------------------------------------------

def _restrict(f: Forest, mask) -> Forest:
    return Forest(f.member & mask, np.where(mask, f.parent, -1))


def _any(base: CircuitEngine, who, phase: str) -> bool:
    return bool(global_beeps(base, {0: who}, phase)[0].any())


class _Solver:
    """Host-side bookkeeping for one run: region tags, per-slot forests and the current layout."""

    def __init__(self, base: CircuitEngine, src, dst, leader):
        self.base = base
        self.src, self.dst, self.leader = src, dst, leader
        self.n = base.n

    def relayout(self):
        self.layout = build_layout(self.base, self.split, self.cut)

    def divide(self):
        self.div = divide(self.base, self.src, self.leader)
        self.split = self.div.qp.copy()
        self.cut = self.div.cut.copy()
        self.store = SlotForest.empty(self.n)
        self.relayout()

    def base_case(self, phase: str = "base_case"):
        L = self.layout
        eng = L.engine
        piece = L.lift(self.div.qp)
        up = ((self.div.sign[L.orig] > 0) & eng.occ).any(1) & piece
        view = PortalTreeView.of(induced_occ(eng, piece), 0, piece)
        dsc = portal_beep(eng, view, {0: up}, phase)[0]
        lca = piece & ~dsc
        everything = np.ones(L.n, dtype=bool)
        line = line_algorithm(eng, piece, L.lift(self.src) & piece, phase)
        f = propagate(eng, lca, lca, everything, _restrict(line, lca), phase)
        some = np.zeros(self.n, dtype=bool)
        some[L.orig[dsc]] = True
        if _any(self.base, some, phase):
            g = propagate(eng, dsc, dsc, everything, _restrict(line, dsc), phase)
            f = merge_forests(eng, f, g, phase)
        L.write(self.store, f)

    def _roles(self, west_nodes, east_nodes):
        """Per slot: 1 if its region is a west part, 2 if an east part, else 0."""
        L = self.layout
        role_r = np.zeros(L.region.max(initial=-1) + 1, dtype=np.int8)
        role_r[L.region[west_nodes]] = 1
        role_r[L.region[east_nodes]] = 2
        roles = np.zeros((self.n, 4), dtype=np.int8)
        roles[L.orig, L.slot] = role_r[L.region]
        return roles

    def pair_step(self, C, phase: str = "merge_step") -> bool:
        """One pairing iteration over the marks left on the portals C; False when none remain."""
        base = self.base
        rem = self.cut & C[:, None]
        if not _any(base, rem.any(1), phase):
            return False
        view = PortalTreeView.of(induced_occ(base, C), 0, C)
        start = view.rep & C
        fn = _chain(base, C, start, E, 0, rem[:, 0])
        fs = _chain(base, C, start, E, 2, rem[:, 1])
        both, _ = InstanceForest.concat([fn, fs])
        cons = _Parity()
        run_pasc(base, both, cons, iterations=1, phase=phase)
        odd = np.zeros((self.n, 2), dtype=bool)
        odd[fn.inst_amo, 0] = cons.bit[: fn.size]
        odd[fs.inst_amo, 1] = cons.bit[fn.size:]
        chosen = rem & odd
        L = self.layout
        eng = L.engine
        mu, side = np.nonzero(chosen)
        main = np.where(side == 0, NORTH_MAIN, SOUTH_MAIN)
        west = np.where(side == 0, NORTH_WEST, SOUTH_WEST)
        nm = L.node_of[mu, main]
        nw = L.node_of[mu, west]
        src = np.zeros(L.n, dtype=bool)
        src[nm] = src[nw] = True
        tm, tp = spt_arrays(eng, src, np.ones(L.n, dtype=bool), phase=phase)
        F = L.read(self.store)
        # each separator tells both parts whether the other part has a forest
        to_east = np.zeros(L.n, dtype=bool)
        to_west = np.zeros(L.n, dtype=bool)
        to_east[nm] = F.member[nw]
        to_west[nw] = F.member[nm]
        heard = global_beeps(eng, {0: to_east, 1: to_west}, phase)
        roles = self._roles(nw, nm)
        ext = np.zeros((self.n, 4), dtype=bool)
        ext[L.orig, L.slot] = np.where(roles[L.orig, L.slot] == 2, heard[0], heard[1])
        tree = SlotForest.empty(self.n)
        L.write(tree, Forest(tm, tp))
        west_copy = Forest(self.store.member[mu, west].copy(), self.store.parent[mu, west].copy())
        self.cut[mu, side] = False
        self.store.member[mu, west] = False
        self.store.parent[mu, west] = -1
        self.relayout()
        L2 = self.layout
        r = roles[L2.orig, L2.slot]
        x = ext[L2.orig, L2.slot]
        Fd = L2.read(self.store)
        Td = L2.read(tree)
        tx = _restrict(Td, x)
        g1 = Forest(np.where(r == 2, tx.member, Fd.member), np.where(r == 2, tx.parent, Fd.parent))
        g2 = Forest(np.where(r == 1, tx.member, np.where(r == 2, Fd.member, False)), np.where(r == 1, tx.parent, np.where(r == 2, Fd.parent, -1)))
        k = L2.node_of[mu, main]
        g1.member[k] = west_copy.member
        g1.parent[k] = west_copy.parent
        f = merge_forests(L2.engine, g1, g2, phase)
        L2.write(self.store, f)
        return True

    def join_step(self, C, phase: str = "merge_step"):
        """Unsplits the portals C and merges the forests of their two sides."""
        L = self.layout
        nn = L.node_of[C, NORTH_MAIN]
        ns = L.node_of[C, SOUTH_MAIN]
        roles = self._roles(nn, ns)
        south_copy = Forest(self.store.member[C, SOUTH_MAIN].copy(), self.store.parent[C, SOUTH_MAIN].copy())
        cidx = np.nonzero(C)[0]
        self.split &= ~C
        self.store.member[C, SOUTH_MAIN] = False
        self.store.parent[C, SOUTH_MAIN] = -1
        self.relayout()
        L2 = self.layout
        eng = L2.engine
        r = roles[L2.orig, L2.slot]
        P = L2.lift(C)
        Fd = L2.read(self.store)
        f1 = _restrict(Fd, r != 2)
        f2 = _restrict(Fd, r == 2)
        k = L2.node_of[cidx, NORTH_MAIN]
        f2.member[k] = south_copy.member
        f2.parent[k] = south_copy.parent
        involved = (r != 0) | P
        g1 = propagate(eng, P, (r == 1) | P, involved, f1, phase)
        g2 = propagate(eng, P, (r == 2) | P, involved, f2, phase)
        L2.write(self.store, merge_forests(eng, g1, g2, phase))

    def merge_step(self, C):
        while self.pair_step(C):
            pass
        self.join_step(C)

    def levels(self):
        base = self.base
        ctr = LevelCounter(base, self.leader)
        self.counter = ctr

        def count(j, elected):
            if j > 0:
                ctr.increment(0)
            return False

        portal_decomposition(base, 0, self.div.root, self.div.qp, phase="levels", until=count)
        while True:
            ctr.reset(1)

            def reached(j, elected):
                if j > 0:
                    ctr.increment(1)
                return ctr.equal()

            dec = portal_decomposition(base, 0, self.div.root, self.div.qp, phase="levels", until=reached)
            self.merge_step(dec.level_of == len(dec.levels) - 1)
            if ctr.is_zero(0):
                break
            ctr.decrement(0)

    def prune(self, phase: str = "prune"):
        base = self.base
        if self.split.any() or self.cut.any():
            raise ContractFault("regions left unmerged")
        parent = self.store.parent[:, NORTH_MAIN]
        tdirs = learn_children(base, parent, phase)
        cs = euler_tour(base, tdirs, self.src, self.dst, phase=phase)
        rap = rap_from_sign(tdirs, self.src, cs.sign)
        member = rap.in_vq & self.store.member[:, NORTH_MAIN]
        return member, np.where(member, rap.parent, -1)


@dataclass
class SpfResult:
    forest: ParentForest
    member: np.ndarray
    parent: np.ndarray
    stats: RoundStats

    @property
    def rounds(self) -> int:
        return self.stats.rounds_total


def compute_spf(structure, S=None, D=None, pins: int = MIN_PINS, round_limit=None, trace=None) -> SpfResult:
    """(S, D)-shortest path forest. S, D default to the structure's annotations."""
    s = structure.with_annotations(S, D)
    rep = validate_structure(s)
    if not rep.ok:
        raise ValidationFault(rep.violations)
    if pins < MIN_PINS:
        raise ContractFault(f"shortest path forests need at least {MIN_PINS} pins, got {pins}")
    base = CircuitEngine(s, pins, trace, round_limit)
    ix = base.ix
    solver = _Solver(base, ix.mask(s.sources), ix.mask(s.destinations), ix.mask([s.leader]))
    solver.divide()
    solver.base_case()
    solver.levels()
    member, parent = solver.prune()
    return SpfResult(ParentForest.from_arrays(ix.nodes, member, parent), member, parent, base.stats)
