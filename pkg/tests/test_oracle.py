import random

from amoebot import oracle
from amoebot.forest import ParentForest
from amoebot.spt import compute_spt
from amoebot.triangular_grid import AmoebotStructure, Direction, Node, generate_random_structure, line


def line_case(n=5):
    s = AmoebotStructure.build(line(n), [(0, 0)], [(n - 1, 0)], (0, 0))
    f = ParentForest(set(line(n)), {u: Direction.W for u in line(n)[1:]})
    return s, f


def test_bfs_examples():
    s = AmoebotStructure.build(line(6))
    assert oracle.bfs_distances(s, s.occupied).dist == {u: 0 for u in s.occupied}
    d = oracle.bfs_distances(s, [(0, 0)])
    assert [d[(a, 0)] for a in range(6)] == list(range(6))
    r = generate_random_structure(2, 200)
    dist = oracle.bfs_distances(r, [min(r.occupied)]).dist
    for u in r.occupied:
        for k in range(6):
            v = u.step(k)
            if v in r.occupied:
                assert abs(dist[u] - dist[v]) <= 1


def test_closest_sources():
    s = AmoebotStructure.build(line(5))
    d = oracle.bfs_distances(s, [(0, 0), (4, 0)])
    assert d.closest[Node(2, 0)] == {Node(0, 0), Node(4, 0)}
    assert d.closest[Node(1, 0)] == {Node(0, 0)}


def test_validator_accepts_spt_line():
    s, _ = line_case()
    res = compute_spt(s, (0, 0), s.destinations)
    assert oracle.validate_forest(s, s.sources, s.destinations, res.forest).ok


def test_validator_detour_is_prop5():
    s = AmoebotStructure.build([(0, 0), (1, 0), (0, 1), (1, 1)], [(0, 0)], [(1, 0), (1, 1)], (0, 0))
    f = ParentForest(set(s.occupied), {Node(1, 1): Direction.W, Node(0, 1): Direction.SW, Node(1, 0): Direction.NE})
    v = oracle.validate_forest(s, s.sources, s.destinations, f)
    assert 5 in v.properties()


def test_validator_reversed_edge():
    s, f = line_case()
    f.parent[Node(0, 0)] = Direction.E
    del f.parent[Node(1, 0)]
    v = oracle.validate_forest(s, s.sources, s.destinations, f)
    assert not v.ok and 1 in v.properties()


def test_validator_missing_destination():
    s, f = line_case()
    f.members.discard(Node(4, 0))
    del f.parent[Node(4, 0)]
    v = oracle.validate_forest(s, s.sources, s.destinations, f)
    assert 4 in v.properties()


def test_validator_stray_leaf_and_shared_source():
    s, f = line_case()
    s2 = s.with_annotations(sources=[(0, 0), (2, 0)], destinations=[(4, 0)])
    assert 3 in oracle.validate_forest(s2, s2.sources, s2.destinations, f).properties()
    s3 = s.with_annotations(destinations=[(2, 0)])
    assert 2 in oracle.validate_forest(s3, s3.sources, s3.destinations, f).properties()


def test_brute_centroids_and_prefix():
    s = AmoebotStructure.build(line(5))
    adj = oracle.grid_tree(oracle.canonical_implicit_tree(s, 0))
    assert oracle.brute_centroids(adj, set(line(5))) == {Node(2, 0)}
    assert oracle.brute_prefix_sums(list("abcd"), dict.fromkeys("abcd", 1)) == [1, 2, 3, 4]


def test_explicit_portal_tree_is_tree():
    rng = random.Random(0)
    for seed in range(5):
        s = generate_random_structure(seed, rng.randint(20, 200))
        for axis in range(3):
            ps, _, adj = oracle.explicit_portal_tree(s, axis)
            assert sum(len(a) for a in adj) == 2 * (len(ps) - 1)
