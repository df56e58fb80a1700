"""PASC: primary and secondary circuits computing distances and prefix sums bit by bit.

A run is described by an instance forest. Each instance lives on one amoebot
and owns ports; a port is a (direction, lane base) pair using the two lanes
base and base+1, either toward the instance's predecessor or toward one of
its successors. Instances without a predecessor port are references; they
inject the beep. Every instance owns two partition sets:

    side t = {pred pin lane t} + {succ pins lane t ^ active}

so an active instance swaps lanes and a passive one passes them straight.
The side on which an instance hears the reference beep is the parity of the
active instances before it; xor with its own activity gives the parity up to
and including it. That output bit is the current bit of its prefix count, and
active instances that output 1 turn passive. One iteration is two rounds: the
chain round, then an evaluation round that also runs a global circuit on lane
0 where amoebots with remaining active instances beep. The round after the
last evaluation hears silence and terminates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit_engine import Activation, CircuitEngine, Program, SetupFault, StateField, global_labels
from .triangular_grid import Indexed, Node


@dataclass
class InstanceForest:
    inst_amo: np.ndarray
    active: np.ndarray
    port_inst: np.ndarray
    port_dir: np.ndarray
    port_lane: np.ndarray
    port_pred: np.ndarray
    # instances without a predecessor that must stay silent instead of acting as references
    mute: np.ndarray | None = None

    @classmethod
    def empty(cls) -> "InstanceForest":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.astype(bool), z, z, z, z.astype(bool))

    @property
    def size(self) -> int:
        return len(self.inst_amo)

    @property
    def ref(self) -> np.ndarray:
        has_pred = np.zeros(self.size, dtype=bool)
        has_pred[self.port_inst[self.port_pred]] = True
        if self.mute is not None:
            has_pred |= self.mute
        return ~has_pred

    @staticmethod
    def concat(parts: list) -> tuple["InstanceForest", list]:
        """Join forests; returns the joined forest and each part's instance offset."""
        offs, k = [], 0
        for p in parts:
            offs.append(k)
            k += p.size
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts]) if parts else np.zeros(0, dtype=np.int64)
        return (
            InstanceForest(
                cat("inst_amo"),
                cat("active").astype(bool),
                np.concatenate([p.port_inst + o for p, o in zip(parts, offs)]) if parts else np.zeros(0, dtype=np.int64),
                cat("port_dir"),
                cat("port_lane"),
                cat("port_pred").astype(bool),
                np.concatenate([np.zeros(p.size, dtype=bool) if p.mute is None else p.mute for p in parts]) if parts else None,
            ),
            offs,
        )


def check_ports(engine: CircuitEngine, f: InstanceForest) -> None:
    """Every port must face a neighbor port on the same lanes with the opposite role."""
    nbr = engine._nbr
    amo = f.inst_amo[f.port_inst]
    far = nbr[amo, f.port_dir]
    if (far < 0).any():
        i = int(np.nonzero(far < 0)[0][0])
        raise SetupFault(f"broken chain: port of {engine.ix.nodes[amo[i]]} faces an empty node")
    if f.port_lane.max(initial=0) + 2 > engine.c:
        raise SetupFault(f"PASC needs {f.port_lane.max() + 2} pins")
    key_here = (amo * 6 + f.port_dir) * engine.c + f.port_lane
    key_far = (far * 6 + (f.port_dir + 3) % 6) * engine.c + f.port_lane
    order = np.argsort(key_here)
    sk = key_here[order]
    if len(sk) and (np.diff(sk) == 0).any():
        raise SetupFault("two ports share the same lanes")
    pos = np.searchsorted(sk, key_far)
    pos = np.minimum(pos, len(sk) - 1)
    hit = sk[pos] == key_far
    if not hit.all():
        i = int(np.nonzero(~hit)[0][0])
        raise SetupFault(f"broken chain: port of {engine.ix.nodes[amo[i]]} has no partner")
    partner = order[pos]
    if (f.port_pred[partner] == f.port_pred).any():
        raise SetupFault("broken chain: port partners must be predecessor and successor")


class Consumer:
    """Streaming reader of PASC output bits; all methods act row-wise."""

    def on_bits(self, j: int, inbit: np.ndarray, outbit: np.ndarray, alive: np.ndarray) -> None:
        pass

    def round_b(self, j: int, lab: np.ndarray, sends: np.ndarray) -> None:
        pass

    def on_bcast(self, j: int, recv: np.ndarray) -> None:
        pass

    def finish(self) -> None:
        pass


class PascProgram(Program):
    min_pins = 2
    phase = "pasc"

    def __init__(self, forest: InstanceForest, consumer: Consumer | None = None, iterations: int | None = None, phase: str | None = None):
        self.f = forest
        self.consumer = consumer or Consumer()
        self.max_iterations = iterations
        if phase:
            self.phase = phase

    def start(self, view):
        super().start(view)
        f = self.f
        n, c = view.n, view.pins
        I = f.size
        self.active_inst = f.active.astype(bool).copy()
        self.alive_inst = np.ones(I, dtype=bool)
        self.is_ref = f.ref
        first = np.full(I, -1, dtype=np.int64)
        order = np.argsort(f.port_inst, kind="stable")
        pi = f.port_inst[order]
        starts = np.ones(len(pi), dtype=bool)
        starts[1:] = pi[1:] != pi[:-1]
        first[pi[starts]] = order[starts]
        self.first = first
        self.has_port = first >= 0
        self.p_amo = f.inst_amo[f.port_inst]
        self.p_succ = ~f.port_pred.astype(bool)
        self.j = 0
        self.stage_a = True
        # each amoebot packs activity and liveness of its own instances
        order = np.argsort(f.inst_amo, kind="stable")
        slot = np.zeros(I, dtype=np.int64)
        if I:
            sa = f.inst_amo[order]
            newgrp = np.ones(I, dtype=bool)
            newgrp[1:] = sa[1:] != sa[:-1]
            grp_start = np.maximum.accumulate(np.where(newgrp, np.arange(I), 0))
            slot[order] = np.arange(I) - grp_start
        self.slot = slot
        self.K = int(slot.max(initial=-1)) + 1
        self.fields = (StateField("packed", 2 * self.K + 1),)
        self._refresh()

    def _refresh(self):
        n = self.view.n
        packed = np.zeros(n, dtype=np.int64)
        np.add.at(packed, self.f.inst_amo, (self.active_inst.astype(np.int64) << self.slot) + (self.alive_inst.astype(np.int64) << (self.slot + self.K)))
        packed |= np.int64(not self.stage_a) << (2 * self.K)
        self.packed = packed
        act = np.zeros(n, dtype=bool)
        act[self.f.inst_amo[self.active_inst]] = True
        self.active = act

    def _rep(self, side: np.ndarray) -> np.ndarray:
        """Set name of each instance's side as the index of one member pin."""
        f, c = self.f, self.view.pins
        if len(f.port_inst) == 0:
            return np.zeros(f.size, dtype=np.int64)
        p0 = np.maximum(self.first, 0)
        lane = f.port_lane[p0] + (side ^ (self.active_inst & self.p_succ[p0]))
        return f.port_dir[p0] * c + lane

    def activate(self, recv):
        v = self.view
        f = self.f
        cons = self.consumer
        if self.stage_a:
            if self.j > 0:
                cons.on_bcast(self.j - 1, recv)
                # disjoint structures batched in one engine run in lockstep:
                # a part that heard silence just idles until all are silent
                if not recv[:, 0].any():
                    return Activation(None, None, True)
            lab = v.default_labels()
            c = v.pins
            self.rep0 = self._rep(np.zeros(f.size, dtype=bool))
            self.rep1 = self._rep(np.ones(f.size, dtype=bool))
            act_p = self.active_inst[f.port_inst]
            for t in (0, 1):
                side = t ^ (act_p & self.p_succ)
                name = np.where(side, self.rep1[f.port_inst], self.rep0[f.port_inst])
                lab[self.p_amo, f.port_dir, f.port_lane + t] = name
            sends = v.no_sends()
            r = self.is_ref & self.has_port
            sends[f.inst_amo[r], self.rep0[r]] = True
            self.stage_a = False
            self._refresh()
            return Activation(lab, sends, False)
        # evaluation round
        amo = f.inst_amo
        g0 = recv[amo, self.rep0] & self.has_port
        g1 = recv[amo, self.rep1] & self.has_port
        if (g0 & g1).any():
            raise SetupFault("instance heard both sides of its circuit")
        inbit = g1 & ~self.is_ref
        if self.j == 0:
            self.alive_inst = self.is_ref | g0 | g1
            self.active_inst &= self.alive_inst
        heard = self.alive_inst
        outbit = inbit ^ self.active_inst
        cons.on_bits(self.j, inbit & heard, outbit & heard, heard)
        self.active_inst &= ~outbit
        self.j += 1
        self.stage_a = True
        self._refresh()
        lab = global_labels(v, 0)
        sends = v.no_sends()
        sends[:, 0] = self.active.astype(bool)
        cons.round_b(self.j - 1, lab, sends)
        last = self.max_iterations is not None and self.j >= self.max_iterations
        if last:
            self.stage_a = False
        return Activation(lab, sends, last)

    def finish(self, recv):
        if self.max_iterations is not None and self.j >= self.max_iterations and not self.stage_a:
            self.consumer.on_bcast(self.j - 1, recv)
        self.consumer.finish()

    @property
    def iterations(self) -> int:
        return self.j


def run_pasc(engine: CircuitEngine, forest: InstanceForest, consumer: Consumer | None = None, iterations: int | None = None, phase: str = "pasc") -> PascProgram:
    check_ports(engine, forest)
    prog = PascProgram(forest, consumer, iterations, phase)
    engine.run(prog, phase=phase)
    return prog


class BitRecorder(Consumer):
    """Test harness observer: keeps every output bit (not amoebot state)."""

    def __init__(self, size: int):
        self.out = []
        self.inb = []
        self.alive = np.ones(size, dtype=bool)

    def on_bits(self, j, inbit, outbit, alive):
        self.out.append(outbit.copy())
        self.inb.append(inbit.copy())
        self.alive &= alive

    def values(self, which: str = "out") -> np.ndarray:
        bits = self.out if which == "out" else self.inb
        if not bits:
            return np.zeros(len(self.alive), dtype=np.int64)
        m = np.array(bits, dtype=np.int64)
        return (m << np.arange(len(bits))[:, None]).sum(axis=0)


@dataclass
class PascOutput:
    bits: dict
    iterations: int
    rounds: int = 0

    def value(self, u) -> int:
        return sum(b << j for j, b in enumerate(self.bits[Node(*u)]))

    def values(self) -> dict:
        return {u: self.value(u) for u in self.bits}


def _dir_between(u: Node, v: Node) -> int:
    from .triangular_grid import OFFSETS

    try:
        return OFFSETS.index((v[0] - u[0], v[1] - u[1]))
    except ValueError:
        raise SetupFault(f"broken chain: {tuple(u)} and {tuple(v)} are not adjacent") from None


def chain_forest(ix: Indexed, chain: list, weights=None, lane: int = 0) -> InstanceForest:
    m = len(chain)
    w = np.ones(m, dtype=bool) if weights is None else np.asarray(weights, dtype=bool)
    if weights is None:
        w[0] = False
    try:
        amo = np.array([ix.pos[Node(*u)] for u in chain], dtype=np.int64)
    except KeyError as e:
        raise SetupFault(f"broken chain: {e.args[0]} is not occupied") from None
    pi, pd, pp = [], [], []
    for i in range(m - 1):
        d = _dir_between(chain[i], chain[i + 1])
        pi += [i, i + 1]
        pd += [d, (d + 3) % 6]
        pp += [False, True]
    n = len(pi)
    return InstanceForest(amo, w, np.array(pi, dtype=np.int64), np.array(pd, dtype=np.int64), np.full(n, lane, dtype=np.int64), np.array(pp, dtype=bool))


def tree_forest(ix: Indexed, parent: dict, weights=None, lane: int = 0) -> InstanceForest:
    """One instance per node; `parent` maps node -> parent node (None for roots)."""
    nodes = sorted(Node(*u) for u in parent)
    k = {u: i for i, u in enumerate(nodes)}
    amo = np.array([ix.pos[u] for u in nodes], dtype=np.int64)
    if weights is None:
        w = np.array([parent[u] is not None for u in nodes], dtype=bool)
    else:
        w = np.array([bool(weights.get(u, 0)) for u in nodes], dtype=bool)
    pi, pd, pp = [], [], []
    for u in nodes:
        p = parent[u]
        if p is None:
            continue
        p = Node(*p)
        if p not in k:
            raise SetupFault(f"parent {tuple(p)} of {tuple(u)} is not in the tree")
        d = _dir_between(u, p)
        pi += [k[u], k[p]]
        pd += [d, (d + 3) % 6]
        pp += [True, False]
    n = len(pi)
    return InstanceForest(amo, w, np.array(pi, dtype=np.int64), np.array(pd, dtype=np.int64), np.full(n, lane, dtype=np.int64), np.array(pp, dtype=bool))


def _collect(ix, forest, rec, prog, rounds) -> PascOutput:
    bits = {}
    m = np.array(rec.out, dtype=np.int64).reshape(len(rec.out), forest.size)
    for i, a in enumerate(forest.inst_amo):
        bits[ix.nodes[a]] = [int(b) for b in m[:, i]]
    return PascOutput(bits, prog.iterations, rounds)


def _run(engine, forest, phase):
    rec = BitRecorder(forest.size)
    before = engine.stats.rounds_total
    prog = run_pasc(engine, forest, rec, phase=phase)
    return rec, prog, engine.stats.rounds_total - before


def pasc_chain(engine: CircuitEngine, chain: list) -> PascOutput:
    """Each chain amoebot learns its index, least significant bit first."""
    f = chain_forest(engine.ix, chain)
    rec, prog, rounds = _run(engine, f, "pasc_chain")
    return _collect(engine.ix, f, rec, prog, rounds)


def pasc_prefix_sum(engine: CircuitEngine, chain: list, weights) -> PascOutput:
    f = chain_forest(engine.ix, chain, weights)
    rec, prog, rounds = _run(engine, f, "pasc_prefix_sum")
    return _collect(engine.ix, f, rec, prog, rounds)


def pasc_tree(engine: CircuitEngine, parent: dict) -> PascOutput:
    """Each tree amoebot learns its depth; cycles leave amoebots unreached."""
    f = tree_forest(engine.ix, parent)
    rec, prog, rounds = _run(engine, f, "pasc_tree")
    if not rec.alive.all():
        bad = engine.ix.nodes[f.inst_amo[np.nonzero(~rec.alive)[0][0]]]
        raise SetupFault(f"cycle in parent pointers: {tuple(bad)} never hears its root")
    return _collect(engine.ix, f, rec, prog, rounds)
