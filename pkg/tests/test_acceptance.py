"""Acceptance criteria 1 to 8; the terminal summary prints one line per criterion."""
import io
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from amoebot import bench, oracle
from amoebot import tree_primitives as tp
from amoebot.circuit_engine import Activation, CircuitEngine, Program
from amoebot.pasc import pasc_chain, pasc_tree
from amoebot.spf import compute_spf
from amoebot.spt import compute_spt
from amoebot.triangular_grid import AmoebotStructure, Axis, Indexed, generate_random_structure, implicit_portal_graph, line, portals

from support import comb, nodes_of, random_spanning_tree, tree_adjacency

BASELINE = Path(__file__).parent / "baselines" / "bench.json"


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s, budget {self.seconds}s"


# --- 1: portal identities ----------------------------------------------------------

@pytest.mark.criterion(1)
def test_portal_graphs_trees_and_distance_identity():
    rng = random.Random(1)
    with Budget(60):
        for it in range(200):
            n = int(round(2000 ** rng.random())) if it % 4 else rng.randint(1500, 2000)
            s = generate_random_structure(10_000 + it, n)
            for axis in Axis:
                g = implicit_portal_graph(s, axis)
                assert oracle.is_spanning_tree(s.occupied, g)
                assert g == oracle.canonical_implicit_tree(s, axis)
            nodes = s.nodes()
            pairs = [(rng.choice(nodes), rng.choice(nodes)) for _ in range(1000)]
            d = oracle.pair_distances(s, pairs)
            per_axis = sum(oracle.portal_tree_distances(s, axis, pairs) for axis in Axis)
            assert (2 * d == per_axis).all(), f"instance {it}"


# --- 2: PASC -----------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_pasc_chains_and_trees():
    rng = random.Random(2)
    with Budget(30):
        for m in [1, 2, 3, 5, 64, 100, 255, 256, 257, 1000, 2047, 2048]:
            e = CircuitEngine(AmoebotStructure.build(line(m)), pins=2)
            out = pasc_chain(e, line(m))
            assert [out.value(u) for u in line(m)] == list(range(m))
            assert out.iterations <= math.ceil(math.log2(m)) + 1 if m > 1 else out.iterations == 1
        for it in range(12):
            n = rng.choice([10, 100, 600, 2048])
            s = generate_random_structure(30_000 + it, n)
            ix = Indexed.of(s)
            t = random_spanning_tree(ix, rng)
            root = ix.nodes[rng.randrange(ix.n)]
            adj = tree_adjacency(ix, t)
            depth = _tree_depths(adj, root)
            parent = {u: None for u in ix.nodes}
            for u, nb in adj.items():
                for v in nb.values():
                    if depth[v] == depth[u] - 1:
                        parent[u] = v
            out = pasc_tree(CircuitEngine(ix, pins=2), parent)
            assert out.values() == depth
            h = max(depth.values())
            assert out.iterations <= math.ceil(math.log2(h + 1)) + 1


def _tree_depths(adj, root):
    depth = {root: 0}
    stack = [root]
    while stack:
        u = stack.pop()
        for v in adj[u].values():
            if v not in depth:
                depth[v] = depth[u] + 1
                stack.append(v)
    return depth


# --- 3: tree primitives ------------------------------------------------------------

def _size(rng):
    return max(1, int(round(512 ** rng.random())))


def _random_subtree(rng, ix, t, keep):
    """A connected piece of the tree obtained by cutting one random edge, containing a kept node."""
    us, ds = np.nonzero(t)
    if len(us) == 0:
        return np.ones(ix.n, dtype=bool)
    k = rng.randrange(len(us))
    cut = t.copy()
    u, d = us[k], ds[k]
    v = ix.nbr[u, d]
    cut[u, d] = cut[v, (d + 3) % 6] = False
    seed_node = int(rng.choice(list(np.nonzero(keep)[0])))
    comp = np.zeros(ix.n, dtype=bool)
    comp[seed_node] = True
    stack = [seed_node]
    while stack:
        a = stack.pop()
        for e in np.nonzero(cut[a])[0]:
            b = ix.nbr[a, e]
            if not comp[b]:
                comp[b] = True
                stack.append(b)
    return comp


@pytest.mark.criterion(3)
def test_plain_tree_primitives():
    rng = random.Random(3)
    with Budget(60):
        for it in range(500):
            s = generate_random_structure(40_000 + it, _size(rng))
            ix = Indexed.of(s)
            t = random_spanning_tree(ix, rng)
            adj = tree_adjacency(ix, t)
            r = rng.randrange(ix.n)
            root = np.zeros(ix.n, dtype=bool)
            root[r] = True
            Q = np.array([rng.random() < rng.choice([0.02, 0.2, 0.7]) for _ in range(ix.n)])
            Qs, R = nodes_of(ix, Q), ix.nodes[r]
            e = CircuitEngine(ix, pins=4)
            rap = tp.root_and_prune(e, t, root, Q)
            got = {ix.nodes[i]: (None if rap.parent[i] < 0 else ix.nodes[ix.nbr[i, rap.parent[i]]]) for i in np.nonzero(rap.in_vq)[0]}
            assert got == oracle.brute_prune(adj, R, Qs), f"rap {it}"
            aug = tp.augmentation(e, t, root, Q)
            assert nodes_of(ix, aug) == oracle.brute_augmentation(adj, R, Qs), f"augmentation {it}"
            if not Qs:
                continue
            assert aug.sum() <= len(Qs) - 1
            cen = nodes_of(ix, tp.centroids(e, t, root, Q))
            assert cen == oracle.brute_centroids(adj, Qs) and len(cen) <= 2, f"centroids {it}"
            assert nodes_of(ix, tp.election(e, t, root, Q)) == {oracle.brute_election(adj, R, Qs)}, f"election {it}"
            Qp = Q | aug
            Qps = nodes_of(ix, Qp)
            assert 1 <= len(nodes_of(ix, tp.centroids(e, t, root, Qp))) <= 2
            sub = _random_subtree(rng, ix, t, Qp)
            st = t & sub[:, None] & np.where(ix.nbr >= 0, sub[np.maximum(ix.nbr, 0)], False)
            sroot = np.zeros(ix.n, dtype=bool)
            sroot[np.argmax(sub)] = True
            sc = nodes_of(ix, tp.centroids(CircuitEngine(ix, pins=4), st, sroot, Qp & sub))
            assert sc == oracle.brute_centroids(oracle.restrict(adj, nodes_of(ix, sub)), Qps & nodes_of(ix, sub))
            assert 1 <= len(sc) <= 2, f"subtree centroids {it}"
            dec = tp.decomposition(CircuitEngine(ix, pins=4), t, root, Qp)
            assert [sorted(lvl) for lvl in dec.levels] == oracle.brute_decomposition(adj, R, Qps), f"decomposition {it}"
            assert len(dec.levels) <= math.ceil(math.log2(len(Qps))) + 1


@pytest.mark.criterion(3)
def test_portal_tree_primitives():
    rng = random.Random(33)
    with Budget(60):
        for it in range(500):
            s = generate_random_structure(50_000 + it, _size(rng))
            ix = Indexed.of(s)
            axis = Axis(rng.randrange(3))
            ps = portals(s, axis)
            pid = {u: i for i, p in enumerate(ps) for u in p.members}
            R = rng.randrange(len(ps))
            chosen = {i for i in range(len(ps)) if rng.random() < rng.choice([0.05, 0.3, 0.8])}
            Q = np.array([pid[u] in chosen for u in ix.nodes])
            isR = np.array([pid[u] == R for u in ix.nodes])
            Rn, Qn = ps[R].representative, [ps[i].representative for i in chosen]
            region = set(ix.nodes)
            e = CircuitEngine(ix, pins=4)
            rap = tp.portal_root_and_prune(e, axis, isR, Q)
            got = {u: (bool(rap.in_vq[i]), int(rap.north[i]), int(rap.south[i])) for i, u in enumerate(ix.nodes)}
            assert got == oracle.portal_relations(region, axis, Rn, Qn), f"portal rap {it}"
            aug = tp.portal_augmentation(e, axis, isR, Q)
            assert nodes_of(ix, aug) == oracle.portal_augmentation(region, axis, Rn, Qn), f"portal augmentation {it}"
            if not chosen:
                continue
            aug_portals = {pid[u] for u in nodes_of(ix, aug)}
            assert len(aug_portals) <= len(chosen) - 1
            cen = nodes_of(ix, tp.portal_centroids(e, axis, isR, Q))
            assert cen == oracle.portal_centroids(region, axis, Qn), f"portal centroids {it}"
            assert len({pid[u] for u in cen}) <= 2
            assert nodes_of(ix, tp.portal_election(e, axis, isR, Q)) == oracle.portal_election(region, axis, Rn, Qn)
            Qp = Q | aug
            qp_portals = {pid[u] for u in nodes_of(ix, Qp)}
            cp = {pid[u] for u in nodes_of(ix, tp.portal_centroids(e, axis, isR, Qp))}
            assert 1 <= len(cp) <= 2
            dec = tp.portal_decomposition(CircuitEngine(ix, pins=4), axis, isR, Qp)
            assert [set(lvl) for lvl in dec.levels] == oracle.portal_decomposition(region, axis, Rn, nodes_of(ix, Qp))
            assert len(dec.levels) <= math.ceil(math.log2(len(qp_portals))) + 1


# --- 4: SPT ------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_spt_correct_on_random_instances():
    rng = random.Random(4)
    with Budget(90):
        for it in range(100):
            n = rng.choice([10, 50, 200, 500, 1000, 1500])
            s = generate_random_structure(60_000 + it, n)
            nodes = s.nodes()
            src = rng.choice(nodes)
            ell = rng.choice([1, 4, 16, len(nodes)])
            D = rng.sample(nodes, min(ell, len(nodes)))
            res = compute_spt(s, src, D)
            v = oracle.validate_forest(s, [src], D, res.forest)
            assert v.ok, (it, v.violations[:3])


@pytest.mark.criterion(4)
def test_spsp_rounds_identical_across_n():
    rows = bench.run_suite("spsp")
    assert {r.n for r in rows} == {50, 200, 800}
    assert len({r.rounds for r in rows}) == 1


@pytest.mark.criterion(4)
def test_sssp_rounds_replay_baseline():
    ref = bench.load_baseline(BASELINE)
    rows = bench.run_suite("sssp")
    assert bench.compare({"sssp": rows}, ref) == []
    env = bench.Envelope(**ref["sssp"]["envelope"])
    assert env.a > 0


# --- 5: SPF correctness ------------------------------------------------------------

@pytest.mark.criterion(5)
def test_spf_correct_on_random_instances():
    rng = random.Random(5)
    with Budget(300):
        for it in range(100):
            n = rng.choice([20, 100, 400, 800, 1500])
            k = rng.choice([2, 4, 8, 16])
            ell = rng.choice([1, max(1, n // 4), n])
            s = generate_random_structure(70_000 + it, n, k=k, ell=ell)
            res = compute_spf(s)
            v = oracle.validate_forest(s, s.sources, s.destinations, res.forest)
            assert v.ok, (it, v.violations[:3])


@pytest.mark.criterion(5)
def test_spf_correct_on_combs():
    rng = random.Random(55)
    for it in range(40):
        s = comb(rng)
        v = oracle.validate_forest(s, s.sources, s.destinations, compute_spf(s).forest)
        assert v.ok, (it, v.violations[:3])


# --- 6: SPF envelope and replay -----------------------------------------------------

@pytest.mark.criterion(6)
def test_spf_round_envelope():
    ref = bench.load_baseline(BASELINE)
    with Budget(300):
        rows = bench.run_suite("spf")
    env = bench.Envelope(**ref["spf"]["envelope"])
    assert all(env.holds("spf", r) for r in rows)
    assert bench.compare({"spf": rows}, ref) == []


@pytest.mark.criterion(6)
def test_spf_replay_bit_identical():
    for seed in (1, 2):
        s = generate_random_structure(seed, 250, k=8, ell=60)
        runs = []
        for _ in range(2):
            buf = io.StringIO()
            res = compute_spf(s, trace=buf)
            runs.append((buf.getvalue(), res.forest, res.stats))
        assert runs[0] == runs[1]


# --- 7: engine semantics ------------------------------------------------------------

class RandomCircuits(Program):
    """Each round: random labels and sends; records what it sees and what it did."""

    phase = "probe"

    def __init__(self, rounds, seed):
        self.rounds = rounds
        self.rng = np.random.default_rng(seed)
        self.log = []

    def activate(self, recv):
        v = self.view
        lab = v.default_labels().reshape(v.n, v.sets)
        for i in range(v.n):
            lab[i] = self.rng.integers(0, v.sets, v.sets)
        sends = self.rng.random((v.n, v.sets)) < 0.03
        self.log.append((recv.copy(), lab.copy(), sends.copy()))
        return Activation(lab, sends, len(self.log) >= self.rounds)

    def finish(self, recv):
        self.log.append((recv.copy(), None, None))


def circuits_oracle(ix, c, lab):
    """Union-find over (amoebot, set name) through external links."""
    S = 6 * c
    parent = list(range(ix.n * S))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u in range(ix.n):
        for d in range(6):
            v = ix.nbr[u, d]
            if v < 0:
                continue
            for i in range(c):
                a = u * S + lab[u, d * c + i]
                b = v * S + lab[v, ((d + 3) % 6) * c + i]
                parent[find(a)] = find(b)
    owned = {(u, int(lab[u, d * c + i])) for u in range(ix.n) for d in range(6) if ix.nbr[u, d] >= 0 for i in range(c)}
    return find, owned


@pytest.mark.criterion(7)
def test_engine_beep_semantics_micro_programs():
    rng = random.Random(7)
    with Budget(10):
        for it in range(50):
            s = generate_random_structure(80_000 + it, rng.randint(1, 25))
            c = rng.choice([1, 2, 3])
            e = CircuitEngine(s, pins=c)
            ix = e.ix
            prog = RandomCircuits(4, it)
            e.run(prog)
            for t in range(1, len(prog.log)):
                recv = prog.log[t][0]
                _, lab, sends = prog.log[t - 1]
                find, owned = circuits_oracle(ix, c, lab)
                hot = {find(u * 6 * c + k) for u, k in zip(*np.nonzero(sends))}
                for u, k in owned:
                    assert recv[u, k] == (find(u * 6 * c + k) in hot), (it, t, u, k)
                n_circ = len({find(u * 6 * c + k) for u, k in owned})
                assert n_circ == len(e.circuits(lab))
            assert not prog.log[0][0].any()


# --- 8: memory audit ----------------------------------------------------------------

STATE_BOUND = 64
# PASC packs two bits per local instance plus a stage bit; an amoebot holds at most 7 instances
PASC_BOUND = 2 * 7 + 1


@pytest.mark.criterion(8)
def test_memory_audit_flat_in_n():
    peaks = []
    for n in (50, 400, 1500, 3000):
        s = generate_random_structure(n, n, k=8, ell=max(1, n // 4))
        spf = compute_spf(s).stats
        spt = compute_spt(s, next(iter(s.sources)), s.destinations).stats
        for st in (spf, spt):
            assert st.max_state_bits <= STATE_BOUND
            assert st.max_counter_bits <= 1
            for prog, bits in st.state_bits_per_program.items():
                assert bits <= (PASC_BOUND if prog == "PascProgram" else STATE_BOUND), (n, prog, bits)
        peaks.append(max(spf.max_state_bits, spt.max_state_bits))
    # peaks depend on local geometry only; the same constant covers every size
    assert max(peaks) <= PASC_BOUND, peaks
