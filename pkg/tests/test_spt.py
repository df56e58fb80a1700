import random

import pytest

from amoebot import oracle
from amoebot.circuit_engine import ContractFault
from amoebot.spt import compute_spt
from amoebot.triangular_grid import AmoebotStructure, Direction, Node, generate_random_structure, line


def test_line_points_west():
    s = AmoebotStructure.build(line(8))
    res = compute_spt(s, (0, 0), [(7, 0)])
    assert res.forest.members == set(line(8))
    assert all(res.forest.parent[u] == Direction.W for u in line(8)[1:])
    assert res.forest.roots == {Node(0, 0)}


def test_source_is_destination():
    s = AmoebotStructure.build(line(5))
    res = compute_spt(s, (2, 0), [(2, 0)])
    assert res.forest.members == {Node(2, 0)} and not res.forest.parent


@pytest.mark.parametrize("pins", [4, 12])
def test_random_instances_validate(pins):
    rng = random.Random(pins)
    for it in range(12):
        s = generate_random_structure(700 + it, rng.choice([5, 40, 150, 400]))
        nodes = s.nodes()
        src = rng.choice(nodes)
        D = rng.sample(nodes, min(len(nodes), rng.choice([1, 4, 16, len(nodes)])))
        res = compute_spt(s, src, D, pins=pins)
        v = oracle.validate_forest(s, [src], D, res.forest)
        assert v.ok, v.violations[:3]


def test_concurrent_and_sequential_agree():
    s = generate_random_structure(9, 300, ell=30)
    src = next(iter(s.sources))
    a = compute_spt(s, src, s.destinations, pins=12, concurrent=True)
    b = compute_spt(s, src, s.destinations, pins=12, concurrent=False)
    assert a.forest == b.forest
    assert a.rounds < b.rounds


def test_faults():
    s = AmoebotStructure.build(line(4))
    with pytest.raises(ContractFault):
        compute_spt(s, [(0, 0), (1, 0)], [(3, 0)])
    with pytest.raises(ContractFault):
        compute_spt(s, (0, 0), [(3, 0)], pins=2)


def test_spsp_rounds_flat():
    rounds = set()
    for n in (50, 200, 800):
        s = generate_random_structure(n, n)
        nodes = s.nodes()
        rounds.add(compute_spt(s, nodes[0], [nodes[-1]]).rounds)
    assert len(rounds) == 1
