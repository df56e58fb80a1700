import random
from collections import Counter

import pytest

from amoebot import oracle
from amoebot.triangular_grid import (
    AmoebotStructure,
    Axis,
    Direction,
    Node,
    StructureParseError,
    components,
    format_structure,
    generate_random_structure,
    hexagon,
    implicit_portal_graph,
    line,
    neighbors,
    parallelogram,
    parse_structure,
    portal_distance,
    portals,
    validate_structure,
)


def annotated(occ):
    occ = sorted(Node(*u) for u in occ)
    return AmoebotStructure.build(occ, [occ[0]], [occ[-1]], occ[0])


def test_neighbors_distinct_and_involutive():
    nb = neighbors((0, 0))
    assert [d for d, _ in nb] == list(Direction)
    assert len({v for _, v in nb}) == 6
    for d, v in nb:
        assert v.step(d.opposite()) == Node(0, 0)


def test_east_west_two_steps_apart():
    nb = dict(neighbors((3, -2)))
    e, w = nb[Direction.E], nb[Direction.W]
    assert e.b == w.b and e.a - w.a == 2


def test_direction_axes():
    for d in Direction:
        assert d.opposite().opposite() == d
        assert d.axis() == d.opposite().axis()
    assert {Direction.E, Direction.W} == {d for d in Direction if d.axis() == Axis.X}
    assert {Direction.NE, Direction.SW} == {d for d in Direction if d.axis() == Axis.Y}


def test_validate_hexagon_ok():
    assert validate_structure(annotated(hexagon(1))).ok


def test_validate_ring_has_hole():
    ring = [u for u in hexagon(1) if u != Node(0, 0)]
    rep = validate_structure(annotated(ring))
    assert any("hole" in v for v in rep.violations)


def test_validate_disconnected():
    rep = validate_structure(annotated([(0, 0), (3, 0)]))
    assert any("disconnected" in v for v in rep.violations)


def test_validate_annotations():
    s = AmoebotStructure.build([(0, 0), (1, 0)], [], [(5, 5)], (0, 0))
    rep = validate_structure(s)
    assert "no sources" in rep.violations
    assert "destination outside structure" in rep.violations


def test_portals_parallelogram():
    ps = portals(parallelogram(3, 3), Axis.X)
    assert [len(p) for p in ps] == [3, 3, 3]


def test_portals_single():
    for axis in Axis:
        ps = portals([(0, 0)], axis)
        assert len(ps) == 1 and len(ps[0]) == 1


def test_portals_l_shape_by_hand():
    occ = [(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)]
    assert Counter(len(p) for p in portals(occ, Axis.X)) == Counter({3: 1, 1: 2})
    assert Counter(len(p) for p in portals(occ, Axis.Y)) == Counter({3: 1, 1: 2})
    assert Counter(len(p) for p in portals(occ, Axis.Z)) == Counter({2: 1, 1: 3})


@pytest.mark.parametrize("seed", range(10))
def test_portals_match_component_oracle(seed):
    s = generate_random_structure(seed, 80)
    for axis in Axis:
        fwd, _ = axis.directions()
        ps = portals(s, axis)
        assert sum(len(p) for p in ps) == s.n
        rest = set(s.occupied)
        # connected components of (V, E_axis) by union-find on axis edges only
        parent = {u: u for u in rest}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for u in rest:
            v = u.step(fwd)
            if v in rest:
                parent[find(u)] = find(v)
        groups = {}
        for u in rest:
            groups.setdefault(find(u), set()).add(u)
        comps = sorted(sorted(g) for g in groups.values())
        assert comps == sorted(sorted(p.members) for p in ps)


def test_implicit_graph_line_and_parallelogram():
    assert len(implicit_portal_graph(AmoebotStructure.build(line(6)), Axis.X)) == 5
    g = implicit_portal_graph(AmoebotStructure.build(parallelogram(3, 3)), Axis.X)
    assert len(g) == 8
    fwd, _ = Axis.X.directions()
    intra = [e for e in g if any(u.step(fwd) in e for u in e)]
    assert len(intra) == 6


@pytest.mark.parametrize("seed", range(15))
def test_implicit_graph_is_canonical_spanning_tree(seed):
    s = generate_random_structure(seed, 150)
    for axis in Axis:
        g = implicit_portal_graph(s, axis)
        assert oracle.is_spanning_tree(s.occupied, g)
        assert g == oracle.canonical_implicit_tree(s, axis)


def test_portal_distance_examples():
    s = AmoebotStructure.build(line(7))
    assert portal_distance(s, Axis.X, (0, 0), (6, 0)) == 0
    assert portal_distance(s, Axis.Y, (0, 0), (6, 0)) == 6


def test_distance_identity_small():
    rng = random.Random(0)
    for seed in range(5):
        s = generate_random_structure(seed, 120)
        nodes = s.nodes()
        pairs = [(rng.choice(nodes), rng.choice(nodes)) for _ in range(200)]
        d = oracle.pair_distances(s, pairs)
        tot = sum(oracle.portal_tree_distances(s, ax, pairs) for ax in Axis)
        assert (2 * d == tot).all()


def test_portal_separation_small():
    """Some shortest u-v path avoids portal P iff P does not separate u from v."""
    rng = random.Random(4)
    for seed in range(6):
        s = generate_random_structure(100 + seed, 40)
        nodes = s.nodes()
        for _ in range(10):
            P = set(rng.choice(portals(s, rng.choice(list(Axis)))).members)
            rest = [u for u in nodes if u not in P]
            if len(rest) < 2:
                continue
            u, v = rng.sample(rest, 2)
            separated = v not in next(c for c in components(rest) if u in c)
            full = oracle.bfs(s.occupied, [u])[v]
            avoiding = oracle.bfs(set(rest), [u]).get(v)
            assert (avoiding == full) == (not separated)


def test_generate_deterministic_and_valid():
    a = generate_random_structure(1, 1)
    assert a.n == 1
    for seed in range(20):
        s = generate_random_structure(seed, 200, k=3, ell=7)
        assert validate_structure(s).ok
        assert s == generate_random_structure(seed, 200, k=3, ell=7)
        assert (s.n, len(s.sources), len(s.destinations)) == (200, 3, 7)


def test_structure_file_round_trip():
    s = generate_random_structure(5, 60, k=4, ell=9)
    assert parse_structure(format_structure(s)) == s
    text = "# comment\n\n0 0 S L\n1 0 D  # tail\n"
    t = parse_structure(text)
    assert t.leader == Node(0, 0) and t.destinations == {Node(1, 0)}


@pytest.mark.parametrize(
    "text, line_no, col",
    [
        ("0 0 L\n1 y\n", 2, 3),
        ("0 0 L\n0 0\n", 2, 1),
        ("0 0 L Q\n", 1, 7),
        ("0 0\n1 0\n", 2, 1),
        ("0 0 L\n1 0 L\n", 2, 5),
        ("7\n", 1, 1),
    ],
)
def test_parse_errors_have_position(text, line_no, col):
    with pytest.raises(StructureParseError) as e:
        parse_structure(text)
    assert (e.value.line, e.value.column) == (line_no, col)
