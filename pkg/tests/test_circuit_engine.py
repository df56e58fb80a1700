import io
import json

import numpy as np
import pytest

from amoebot.circuit_engine import (
    Activation,
    CircuitEngine,
    ConfigurationFault,
    MemoryAuditError,
    PinConfiguration,
    PinId,
    Program,
    RoundLimitExceeded,
    ScalarProgram,
    SetupFault,
    StateField,
    ActivationOutput,
    barrier,
    beep_round,
    build_circuits,
    global_labels,
    valid_pins,
)
from amoebot.triangular_grid import AmoebotStructure, Direction, Node, generate_random_structure, line


def line_structure(n):
    return AmoebotStructure.build(line(n))


def all_pins(s, u, c):
    occ = tuple(Node(*u).step(d) in s.occupied for d in range(6))
    return valid_pins(occ, c)


def test_one_set_line_single_circuit():
    s = line_structure(3)
    cfg = {u: PinConfiguration.one_set(all_pins(s, u, 1)) for u in s.occupied}
    circ = build_circuits(s, cfg, pins=1)
    assert len(circ) == 1 and len(circ[0].members) == 3


def test_singletons_join_two_neighbors():
    s = generate_random_structure(3, 12)
    cfg = {u: PinConfiguration.singletons(all_pins(s, u, 1)) for u in s.occupied}
    circ = build_circuits(s, cfg, pins=1)
    assert all(len({m[0] for m in c.members}) == 2 for c in circ)


def test_split_by_lane_two_circuits():
    s = line_structure(2)
    cfg = {}
    for u in s.occupied:
        pins = all_pins(s, u, 2)
        cfg[u] = PinConfiguration([{p for p in pins if p.link_index == i} for i in (0, 1)])
    assert len(build_circuits(s, cfg, pins=2)) == 2


def test_malformed_configuration_names_amoebot():
    s = line_structure(2)
    cfg = {Node(0, 0): PinConfiguration([]), Node(1, 0): PinConfiguration.one_set(all_pins(s, (1, 0), 1))}
    with pytest.raises(ConfigurationFault) as e:
        build_circuits(s, cfg, pins=1)
    assert e.value.amoebot == Node(0, 0)
    pin = PinId(Direction.E, 0)
    cfg[Node(0, 0)] = PinConfiguration([{pin}, {pin}])
    with pytest.raises(ConfigurationFault):
        build_circuits(s, cfg, pins=1)


def global_sends(engine, who):
    v = engine.view()
    sends = v.no_sends()
    sends[np.asarray(who, dtype=np.int64), 0] = True
    return global_labels(v), sends


@pytest.mark.parametrize("senders, heard", [([0], True), ([], False), ([0, 4], True)])
def test_global_circuit_receipts(senders, heard):
    e = CircuitEngine(line_structure(5), pins=1)
    lab, sends = global_sends(e, senders)
    recv = beep_round(e, lab, sends)
    # receipts are indexed by set name; the global set is named 0 everywhere
    assert (recv[:, 0] == heard).all()
    assert not recv[:, 1:].any()


def test_two_senders_same_receipts_as_one():
    e = CircuitEngine(line_structure(6), pins=1)
    lab, one = global_sends(e, [2])
    _, two = global_sends(e, [2, 5])
    assert (beep_round(e, lab, one) == beep_round(e, lab, two)).all()


class Countdown(Program):
    fields = (StateField("left", 4),)

    def __init__(self, k):
        self.k = k

    def start(self, view):
        super().start(view)
        self.left = np.full(view.n, self.k, dtype=np.int64)

    def activate(self, recv):
        self.left = np.maximum(self.left - 1, 0)
        return Activation(None, None, self.left == 0)


class Forever(Program):
    def activate(self, recv):
        return Activation(None, None, False)


def test_run_terminates_on_unanimous_vote():
    e = CircuitEngine(line_structure(4), pins=1)
    assert e.run(Countdown(1)).rounds_total == 1
    assert e.run(Countdown(3)).rounds_total == 3
    assert e.stats.rounds_total == 4


def test_round_limit_carries_partial_stats():
    e = CircuitEngine(line_structure(4), pins=1, round_limit=10)
    with pytest.raises(RoundLimitExceeded) as exc:
        e.run(Forever())
    assert exc.value.stats.rounds_total == 10


def test_local_round_limit():
    e = CircuitEngine(line_structure(4), pins=1)
    with pytest.raises(RoundLimitExceeded):
        e.run(Forever(), round_limit=10)
    assert e.stats.rounds_total == 10


def test_insufficient_pins_rejected_at_start():
    class Needs4(Forever):
        min_pins = 4

    with pytest.raises(SetupFault):
        CircuitEngine(line_structure(2), pins=2).run(Needs4())


def test_memory_audit_records_and_rejects():
    e = CircuitEngine(line_structure(3), pins=1)
    e.run(Countdown(2))
    assert e.stats.state_bits_per_program["Countdown"] == 4

    class Overflow(Countdown):
        fields = (StateField("left", 1),)

    with pytest.raises(MemoryAuditError):
        CircuitEngine(line_structure(3), pins=1).run(Overflow(5))


@pytest.mark.parametrize("unfinished, done", [([], True), ([2], False)])
def test_barrier(unfinished, done):
    e = CircuitEngine(line_structure(5), pins=1)
    mask = np.zeros(5, dtype=bool)
    mask[unfinished] = True
    flags = barrier(e, mask)
    assert (flags == done).all()


def test_barrier_single_amoebot():
    e = CircuitEngine(AmoebotStructure.build([(0, 0)]), pins=1)
    assert barrier(e, np.zeros(1, dtype=bool)).all()


def test_scalar_program_receipts_next_round():
    """The west end beeps in round 0; both ends of the link see it in round 1 only."""
    s = line_structure(3)

    def step(inp):
        rnd, log = inp.state
        cfg = PinConfiguration.singletons(inp.pins)
        west_end = not inp.occupied[Direction.W]
        beeps = [west_end and rnd == 0 for _ in cfg.partition_sets]
        return ActivationOutput((rnd + 1, log + [any(inp.received)]), cfg, beeps, terminate=rnd >= 2)

    prog = ScalarProgram(step, lambda i: (0, []))
    CircuitEngine(s, pins=1).run(prog)
    assert [log for _, log in prog.states] == [[False, True, False], [False, True, False], [False, False, False]]


def test_trace_lines():
    buf = io.StringIO()
    e = CircuitEngine(line_structure(3), pins=1, trace=buf)
    lab, sends = global_sends(e, [0])
    beep_round(e, lab, sends, phase="probe")
    rec = json.loads(buf.getvalue().splitlines()[0])
    assert rec["round"] == 0 and rec["phase"] == "probe"
    assert rec["sends"] == [[0, 0, 0]]
    assert len(rec["circuits"]) == 1 and len(rec["receipts"]) == 3


def test_replay_is_identical():
    s = generate_random_structure(2, 40)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        e = CircuitEngine(s, pins=2, trace=buf)
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = e.view()
            lab = v.default_labels()
            lab[:, :, 1] = 1
            sends = rng.random((e.n, v.sets)) < 0.05
            beep_round(e, lab, sends)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
