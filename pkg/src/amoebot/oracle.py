"""Centralized reference computations.

Everything here sees the whole structure at once and uses unbounded memory.
None of it is shared with the distributed programs.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .triangular_grid import OFFSETS, AmoebotStructure, Axis, Node, portals, rel_dir


# --- distances --------------------------------------------------------------

@dataclass
class DistanceField:
    dist: dict
    closest: dict = field(default_factory=dict)

    def __getitem__(self, u) -> int:
        return self.dist[Node(*u)]


def _grid_adj(occ) -> dict:
    return {u: [u.step(d) for d in range(6) if u.step(d) in occ] for u in occ}


def bfs(occ, roots) -> dict:
    occ = occ if isinstance(occ, (set, frozenset)) else set(occ)
    dist = {Node(*r): 0 for r in roots}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for d in range(6):
            v = u.step(d)
            if v in occ and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def bfs_distances(s: AmoebotStructure, roots) -> DistanceField:
    roots = sorted(Node(*r) for r in roots)
    dist = bfs(s.occupied, roots)
    per = {r: bfs(s.occupied, [r]) for r in roots}
    closest = {u: {r for r in roots if per[r].get(u) == dist[u]} for u in dist}
    return DistanceField(dist, closest)


def graph_matrix(nodes, occ_index) -> csr_matrix:
    rows, cols = [], []
    for i, u in enumerate(nodes):
        for d in range(6):
            j = occ_index.get(u.step(d))
            if j is not None:
                rows.append(i)
                cols.append(j)
    n = len(nodes)
    return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def pair_distances(s: AmoebotStructure, pairs) -> np.ndarray:
    """Grid-graph distances for many (u, v) pairs at once."""
    nodes = s.nodes()
    pos = {u: i for i, u in enumerate(nodes)}
    g = graph_matrix(nodes, pos)
    srcs = sorted({pos[Node(*u)] for u, _ in pairs})
    row = {i: k for k, i in enumerate(srcs)}
    dm = shortest_path(g, unweighted=True, indices=srcs)
    return np.array([dm[row[pos[Node(*u)]], pos[Node(*v)]] for u, v in pairs], dtype=np.int64)


# --- forest validation --------------------------------------------------------

@dataclass
class ForestVerdict:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def properties(self) -> set:
        return {p for p, _ in self.violations}


def validate_forest(s: AmoebotStructure, S, D, forest) -> ForestVerdict:
    """Check forest properties 1 to 5 of an (S, D)-shortest path forest."""
    S = {Node(*u) for u in S}
    D = {Node(*u) for u in D}
    out = ForestVerdict()
    members = set(forest.members)
    parent = {}
    for u, d in forest.parent.items():
        if u not in members:
            out.violations.append((1, f"{tuple(u)} has a parent but is not a member"))
            continue
        p = Node(*u).step(d)
        if p not in s.occupied or p not in members:
            out.violations.append((1, f"{tuple(u)} points to non-member {tuple(p)}"))
            continue
        parent[u] = p
    for u in members - s.occupied:
        out.violations.append((1, f"member {tuple(u)} is not occupied"))
    root_of = {}
    for u in sorted(members):
        path = []
        w = u
        seen = set()
        while w in parent and w not in root_of:
            if w in seen:
                out.violations.append((1, f"cycle through {tuple(w)}"))
                break
            seen.add(w)
            path.append(w)
            w = parent[w]
        else:
            r = root_of.get(w, w)
            for x in path:
                root_of[x] = r
            root_of[w] = r
    for r in set(root_of.values()):
        if r not in S:
            out.violations.append((1, f"tree rooted at non-source {tuple(r)}"))
    for src in sorted(S):
        if src not in members:
            out.violations.append((1, f"source {tuple(src)} has no tree"))
        elif src in parent:
            out.violations.append((3, f"source {tuple(src)} lies in another tree"))
    has_child = set(parent.values())
    for u in sorted(members):
        if u not in has_child and u not in S and u not in D:
            out.violations.append((2, f"leaf {tuple(u)} is neither source nor destination"))
    for u in sorted(D - members):
        out.violations.append((4, f"destination {tuple(u)} is not covered"))
    dist = bfs(s.occupied, S) if S else {}
    depth = {}
    for u in sorted(root_of):
        stack = []
        w = u
        while w not in depth and w in parent:
            stack.append(w)
            w = parent[w]
        base = depth.setdefault(w, 0)
        for x in reversed(stack):
            base += 1
            depth[x] = base
        if u in dist and depth[u] != dist[u]:
            out.violations.append((5, f"{tuple(u)} at depth {depth[u]}, distance to S is {dist[u]}"))
    return out


# --- portal graphs ------------------------------------------------------------

def explicit_portal_tree(s: AmoebotStructure, axis: Axis):
    """Portals of one axis and their adjacency as an explicit graph."""
    ps = portals(s, axis)
    pid = {u: i for i, p in enumerate(ps) for u in p.members}
    adj = [set() for _ in ps]
    for u, i in pid.items():
        for d in range(6):
            j = pid.get(u.step(d))
            if j is not None and j != i:
                adj[i].add(j)
    return ps, pid, adj


def canonical_connectors(s: AmoebotStructure, axis: Axis) -> dict:
    """For each adjacent portal pair, the connecting edge with the lex-min endpoint.

    Ties on that endpoint go to the edge whose other endpoint is lex-min.
    """
    ps, pid, _ = explicit_portal_tree(s, axis)
    best = {}
    for u, i in pid.items():
        for d in range(6):
            v = u.step(d)
            j = pid.get(v)
            if j is None or j == i:
                continue
            key = tuple(sorted((u.lexkey(), v.lexkey())))
            pair = (min(i, j), max(i, j))
            if pair not in best or key < best[pair][0]:
                best[pair] = (key, frozenset((u, v)))
    return {pair: e for pair, (_, e) in best.items()}


def canonical_implicit_tree(s: AmoebotStructure, axis: Axis) -> set:
    fwd, _ = Axis(axis).directions()
    edges = {frozenset((u, u.step(fwd))) for u in s.occupied if u.step(fwd) in s.occupied}
    edges |= set(canonical_connectors(s, axis).values())
    return edges


def is_spanning_tree(nodes, edges) -> bool:
    nodes = list(nodes)
    if len(edges) != len(nodes) - 1:
        return False
    parent = {u: u for u in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in edges:
        a, b = tuple(e)
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def portal_tree_distances(s: AmoebotStructure, axis: Axis, pairs) -> np.ndarray:
    ps, pid, adj = explicit_portal_tree(s, axis)
    m = len(ps)
    rows = [i for i in range(m) for j in adj[i]]
    cols = [j for i in range(m) for j in adj[i]]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
    srcs = sorted({pid[Node(*u)] for u, _ in pairs})
    row = {i: k for k, i in enumerate(srcs)}
    dm = shortest_path(g, unweighted=True, indices=srcs)
    return np.array([dm[row[pid[Node(*u)]], pid[Node(*v)]] for u, v in pairs], dtype=np.int64)


# --- generic trees ------------------------------------------------------------
# A tree is a dict node -> {direction: neighbor}; directions give the cyclic
# (counterclockwise) order around each node.

def grid_tree(edges) -> dict:
    adj = {}
    for e in edges:
        u, v = tuple(e)
        for x, y in ((u, v), (v, u)):
            d = OFFSETS.index((y[0] - x[0], y[1] - x[1]))
            adj.setdefault(x, {})[d] = y
    return adj


def tour(adj: dict, root) -> list:
    """Directed edges of the Euler tour from `root`, next-counterclockwise rule."""
    if not adj.get(root):
        return []
    dirs = {u: sorted(nb) for u, nb in adj.items()}
    d0 = dirs[root][0]
    out = []
    u, d = root, d0
    while True:
        v = adj[u][d]
        out.append((u, v))
        back = next(k for k, w in adj[v].items() if w == u)
        ds = dirs[v]
        nxt = next((k for k in ds if k > back), ds[0])
        u, d = v, nxt
        if u == root and d == d0:
            return out


def mark_edge(adj: dict, u):
    """The outgoing edge a marked node puts its unit weight on."""
    if not adj.get(u):
        return None
    return (u, adj[u][min(adj[u])])


def brute_prefix_sums(seq, weights) -> list:
    return list(np.cumsum([weights.get(e, 0) for e in seq]).astype(int)) if seq else []


def tour_prefix(adj: dict, root, Q) -> dict:
    """prefix value of every directed edge for marks placed by Q."""
    seq = tour(adj, root)
    w = {mark_edge(adj, u): 1 for u in Q if mark_edge(adj, u) is not None}
    return dict(zip(seq, brute_prefix_sums(seq, w)))


def subtree_counts(adj: dict, root, Q) -> dict:
    """For every directed edge (u, v): Q-members on v's side after cutting uv."""
    Q = set(Q)
    total = len(Q)
    below = {}
    order, par = [], {root: None}
    stack = [root]
    while stack:
        u = stack.pop()
        order.append(u)
        for v in adj.get(u, {}).values():
            if v not in par:
                par[v] = u
                stack.append(v)
    for u in reversed(order):
        below[u] = (u in Q) + sum(below[v] for v in adj.get(u, {}).values() if par.get(v) == u)
    out = {}
    for v, p in par.items():
        if p is not None:
            out[(p, v)] = below[v]
            out[(v, p)] = total - below[v]
    return out


def brute_prune(adj: dict, root, Q) -> dict:
    """Surviving nodes mapped to their parent (root maps to None)."""
    Q = set(Q)
    par = {root: None}
    order = [root]
    for u in order:
        for v in adj.get(u, {}).values():
            if v not in par:
                par[v] = u
                order.append(v)
    keep = {root} | Q
    for u in reversed(order):
        if u in keep and par[u] is not None:
            keep.add(par[u])
    return {u: par[u] for u in keep}


def brute_augmentation(adj: dict, root, Q) -> set:
    kept = brute_prune(adj, root, Q)
    deg = {u: 0 for u in kept}
    for u, p in kept.items():
        if p is not None:
            deg[u] += 1
            deg[p] += 1
    return {u for u, k in deg.items() if k >= 3}


def brute_centroids(adj: dict, Q) -> set:
    Q = set(Q)
    nodes = set(adj)
    out = set()
    for c in Q:
        ok = True
        for v in adj[c].values():
            comp = {v}
            stack = [v]
            while stack:
                x = stack.pop()
                for y in adj[x].values():
                    if y != c and y not in comp:
                        comp.add(y)
                        stack.append(y)
            if 2 * len(comp & Q) > len(Q):
                ok = False
                break
        if ok and c in nodes:
            out.add(c)
    return out


def brute_election(adj: dict, root, Q):
    """Owner of the first marked edge on the tour from root."""
    Q = set(Q)
    if not Q:
        return None
    if not adj.get(root):
        return root if root in Q else None
    marks = {mark_edge(adj, u): u for u in Q}
    for e in tour(adj, root):
        if e in marks:
            return marks[e]
    return None


def restrict(adj: dict, keep) -> dict:
    keep = set(keep)
    return {u: {d: v for d, v in nb.items() if v in keep} for u, nb in adj.items() if u in keep}


def brute_decomposition(adj: dict, root, Qp) -> list:
    """Levels of the centroid decomposition, elected by the tour-first rule."""
    levels = []
    work = [(root, set(adj))]
    Qp = set(Qp)
    while work:
        level, nxt = [], []
        for r, comp in work:
            sub = restrict(adj, comp)
            q = Qp & comp
            cents = brute_centroids(sub, q)
            c = brute_election(sub, r, cents)
            if c is None:
                raise ValueError("subtree without a centroid")
            level.append(c)
            for v in sub[c].values():
                part = {v}
                stack = [v]
                while stack:
                    x = stack.pop()
                    for y in sub[x].values():
                        if y != c and y not in part:
                            part.add(y)
                            stack.append(y)
                if part & Qp:
                    nxt.append((v, part))
        levels.append(sorted(level))
        work = nxt
    return levels


# --- portal-level trees -------------------------------------------------------
# Region = a set of nodes; portals, adjacency and the implicit tree are those
# of the structure the region induces.

def portal_graph(region, axis: Axis):
    s = AmoebotStructure.build(region)
    ps, pid, adj = explicit_portal_tree(s, axis)
    return s, ps, pid, {i: {j: j for j in nb} for i, nb in enumerate(adj)}


def portal_prune(region, axis: Axis, root, Q) -> dict:
    """Surviving portals (by index) mapped to their parent portal."""
    _, ps, pid, adj = portal_graph(region, axis)
    return brute_prune(adj, pid[Node(*root)], {pid[Node(*u)] for u in Q})


def portal_relations(region, axis: Axis, root, Q) -> dict:
    """Per node: (portal kept, relation of north portal, relation of south portal).

    Relations: 0 none, 1 parent, 2 child, both within the pruned portal tree.
    """
    _, ps, pid, adj = portal_graph(region, axis)
    kept = brute_prune(adj, pid[Node(*root)], {pid[Node(*u)] for u in Q})
    out = {}
    for u, i in pid.items():
        rel = []
        for side in ((1, 2), (4, 5)):
            r = 0
            for k in side:
                j = pid.get(u.step(rel_dir(k, axis)))
                if j is None or i not in kept:
                    continue
                if kept.get(i) == j:
                    r = 1
                elif j in kept and kept[j] == i:
                    r = 2
            rel.append(r)
        out[u] = (i in kept, rel[0], rel[1])
    return out


def _members(ps, ids) -> set:
    return {u for i in ids for u in ps[i].members}


def portal_augmentation(region, axis: Axis, root, Q) -> set:
    _, ps, pid, adj = portal_graph(region, axis)
    return _members(ps, brute_augmentation(adj, pid[Node(*root)], {pid[Node(*u)] for u in Q}))


def portal_centroids(region, axis: Axis, Q) -> set:
    _, ps, pid, adj = portal_graph(region, axis)
    return _members(ps, brute_centroids(adj, {pid[Node(*u)] for u in Q}))


def _portal_elect(s, ps, pid, axis, root_pid, cand) -> int | None:
    tree = grid_tree(canonical_implicit_tree(s, axis))
    r = ps[root_pid].representative
    if not tree:
        tree = {r: {}}
    reps = {ps[i].representative: i for i in cand}
    u = brute_election(tree, r, set(reps))
    return None if u is None else reps[u]


def portal_election(region, axis: Axis, root, Q) -> set:
    s, ps, pid, _ = portal_graph(region, axis)
    j = _portal_elect(s, ps, pid, axis, pid[Node(*root)], {pid[Node(*u)] for u in Q})
    return set() if j is None else set(ps[j].members)


def portal_decomposition(region, axis: Axis, root, Qp) -> list:
    """Levels of the portal-level centroid decomposition as sets of member nodes."""
    region = {Node(*u) for u in region}
    Qp = {Node(*u) for u in Qp}
    levels = []
    work = [(Node(*root), region)]
    while work:
        level, nxt = set(), []
        for r, comp in work:
            s, ps, pid, adj = portal_graph(comp, axis)
            q = {pid[u] for u in Qp & comp}
            c = _portal_elect(s, ps, pid, axis, pid[r], brute_centroids(adj, q))
            if c is None:
                raise ValueError("part without a centroid")
            level |= set(ps[c].members)
            rest = comp - set(ps[c].members)
            for j in adj[c]:
                part, stack = {j}, [j]
                while stack:
                    x = stack.pop()
                    for y in adj[x]:
                        if y != c and y not in part:
                            part.add(y)
                            stack.append(y)
                nodes = _members(ps, part)
                if nodes & Qp:
                    nxt.append((ps[j].representative, nodes & rest))
        levels.append(level)
        work = nxt
    return levels
