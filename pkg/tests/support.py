"""Shared instance builders for the test suite."""
import random

import numpy as np

from amoebot.triangular_grid import AmoebotStructure, portals


def random_spanning_tree(ix, rng: random.Random) -> np.ndarray:
    """Randomized Prim tree over the grid graph as an (n, 6) direction mask."""
    n = ix.n
    t = np.zeros((n, 6), dtype=bool)
    seen = {0}
    edges = [(0, d) for d in range(6) if ix.nbr[0, d] >= 0]
    while edges:
        k = rng.randrange(len(edges))
        edges[k], edges[-1] = edges[-1], edges[k]
        u, d = edges.pop()
        v = int(ix.nbr[u, d])
        if v in seen:
            continue
        seen.add(v)
        t[u, d] = t[v, (d + 3) % 6] = True
        edges += [(v, e) for e in range(6) if ix.nbr[v, e] >= 0 and ix.nbr[v, e] not in seen]
    return t


def tree_adjacency(ix, t) -> dict:
    adj = {u: {} for u in ix.nodes}
    for i, d in zip(*np.nonzero(t)):
        adj[ix.nodes[i]][int(d)] = ix.nodes[ix.nbr[i, d]]
    return adj


def nodes_of(ix, mask) -> set:
    return {ix.nodes[i] for i in np.nonzero(mask)[0]}


def comb(rng: random.Random) -> AmoebotStructure:
    """A spine along X with vertical (and optionally diagonal) teeth, sources on tips."""
    length = rng.randint(8, 40)
    slots = list(range(0, length, 2))
    teeth = sorted(rng.sample(slots, min(rng.randint(2, 8), len(slots))))
    h = rng.randint(1, 5)
    both = rng.random() < 0.5
    occ = {(a, 0) for a in range(length)}
    tips = []
    for t in teeth:
        occ |= {(t, y) for y in range(1, h + 1)}
        tips.append((t, h))
        if both:
            occ |= {(t + y, -y) for y in range(1, h + 1)}
            tips.append((t + h, -h))
    S = rng.sample(tips, rng.randint(1, len(tips)))
    if rng.random() < 0.3:
        S.append(rng.choice(sorted(occ)))
    D = rng.sample(sorted(occ), rng.randint(1, len(occ)))
    return AmoebotStructure.build(occ, S, D, leader=rng.choice(sorted(occ)))


def region_portal_counts(structure, solver) -> list:
    """Per region of the current layout: how many Q' X-portals it touches."""
    pid = {u: i for i, p in enumerate(portals(structure, 0)) for u in p.members}
    L = solver.layout
    ix = solver.base.ix
    qp = solver.div.qp
    touched: dict = {}
    for node in range(L.n):
        a = int(L.orig[node])
        touched.setdefault(int(L.region[node]), set())
        if qp[a]:
            touched[int(L.region[node])].add(pid[ix.nodes[a]])
    return [len(v) for _, v in sorted(touched.items())]
