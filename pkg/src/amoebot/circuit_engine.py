"""Reconfigurable circuit execution: pins, partition sets, circuits, beeps.

Every occupied grid edge carries `c` external links. Amoebot u's pin (d, i)
is wired to pin (opposite(d), i) of its neighbor in direction d. A pin
configuration assigns each pin a partition-set name in [0, 6c); pins with
equal names form one set. The default configuration (every pin alone) is
`arange(6c)`, so programs name a set after the local index d*c + i of one of
its pins to avoid clashing with untouched singleton pins.

Programs are batch objects: one call computes the activation of every amoebot
from its own row of state, its own receipts and its neighborhood occupancy.
The engine never hands programs the neighbor table.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .triangular_grid import AmoebotStructure, Direction, Indexed, Node


class EngineError(RuntimeError):
    pass


class ConfigurationFault(EngineError):
    def __init__(self, msg: str, amoebot=None):
        where = f" at amoebot {tuple(amoebot)}" if amoebot is not None else ""
        super().__init__(msg + where)
        self.amoebot = amoebot


class SetupFault(EngineError):
    pass


class MemoryAuditError(EngineError):
    pass


class ContractFault(EngineError):
    """Inputs violate an operation's precondition."""


class ValidationFault(EngineError):
    """The input structure is invalid; raised before any round runs."""

    def __init__(self, violations: list):
        super().__init__("invalid structure: " + "; ".join(violations))
        self.violations = list(violations)


@dataclass
class RoundStats:
    rounds_total: int = 0
    rounds_per_phase: dict = field(default_factory=dict)
    max_state_bits: int = 0
    max_counter_bits: int = 0
    state_bits_per_program: dict = field(default_factory=dict)

    def add(self, phase: str, rounds: int) -> None:
        self.rounds_total += rounds
        self.rounds_per_phase[phase] = self.rounds_per_phase.get(phase, 0) + rounds

    def merge(self, other: "RoundStats") -> None:
        for k, v in other.rounds_per_phase.items():
            self.add(k, v)
        self.max_state_bits = max(self.max_state_bits, other.max_state_bits)
        self.max_counter_bits = max(self.max_counter_bits, other.max_counter_bits)
        for k, v in other.state_bits_per_program.items():
            self.state_bits_per_program[k] = max(self.state_bits_per_program.get(k, 0), v)

    def as_dict(self) -> dict:
        return {
            "rounds_total": self.rounds_total,
            "rounds_per_phase": dict(self.rounds_per_phase),
            "max_state_bits": self.max_state_bits,
            "max_counter_bits": self.max_counter_bits,
        }


class RoundLimitExceeded(EngineError):
    def __init__(self, limit: int, stats: RoundStats):
        super().__init__(f"round limit {limit} reached")
        self.limit = limit
        self.stats = stats


@dataclass
class Activation:
    """What every amoebot outputs in one round (rows are amoebots)."""

    labels: np.ndarray | None = None
    sends: np.ndarray | None = None
    done: np.ndarray | bool = False


@dataclass
class StateField:
    """A declared per-amoebot state variable and its width in bits."""

    name: str
    bits: int
    counter: bool = False


class Program:
    """Base class for batch amoebot programs.

    Subclasses keep their state in arrays with one row per amoebot, declare
    those arrays in `fields`, and implement `activate`. `finish` receives the
    receipts of the final round; conceptually it runs at the start of the
    next activation, so it does not cost a round.
    """

    min_pins = 1
    phase = "program"
    fields: tuple = ()

    def start(self, view: "View") -> None:
        self.view = view

    def activate(self, recv: np.ndarray) -> Activation:
        raise NotImplementedError

    def finish(self, recv: np.ndarray) -> None:
        pass

    def state_arrays(self) -> dict:
        return {f.name: getattr(self, f.name) for f in self.fields}


@dataclass
class View:
    """The local information a program may consult."""

    n: int
    pins: int
    occ: np.ndarray
    round: int = 0

    @property
    def sets(self) -> int:
        return 6 * self.pins

    def default_labels(self) -> np.ndarray:
        return np.broadcast_to(np.arange(self.sets, dtype=np.int16).reshape(1, 6, self.pins), (self.n, 6, self.pins)).copy()

    def no_sends(self) -> np.ndarray:
        return np.zeros((self.n, self.sets), dtype=bool)


class Circuit(NamedTuple):
    id: int
    members: frozenset


class CircuitEngine:
    def __init__(self, structure: AmoebotStructure | Indexed, pins: int = 4, trace=None, round_limit: int | None = None, stats: RoundStats | None = None):
        self.ix = structure if isinstance(structure, Indexed) else Indexed.of(structure)
        if pins < 1:
            raise ValueError("pins must be >= 1")
        self.c = pins
        self._nbr = self.ix.nbr
        self.n = self.ix.n
        self.occ = self._nbr >= 0
        self.occ.setflags(write=False)
        # engines of one algorithm run may share stats, so the limit spans all of them
        self.stats = RoundStats() if stats is None else stats
        self.round = 0
        self.trace = trace
        self.round_limit = round_limit
        self.recv = np.zeros((self.n, 6 * pins), dtype=bool)
        self._cc_cache: dict = {}
        u, d = np.nonzero((self._nbr >= 0) & (np.arange(self.n)[:, None] < self._nbr))
        v = self._nbr[u, d]
        od = (d + 3) % 6
        lanes = np.arange(pins)
        # every external link once: (u, d, i) <-> (v, opp d, i)
        self._lu = np.repeat(u, pins)
        self._lv = np.repeat(v, pins)
        self._lpu = (np.repeat(d, pins) * pins + np.tile(lanes, len(u)))
        self._lpv = (np.repeat(od, pins) * pins + np.tile(lanes, len(u)))
        valid = np.zeros((self.n, 6, pins), dtype=bool)
        valid[self.occ] = True
        self._valid = valid.reshape(self.n, 6 * pins)

    # --- circuits -----------------------------------------------------------

    def view(self) -> View:
        return View(self.n, self.c, self.occ, self.round)

    def _check_labels(self, lab: np.ndarray) -> np.ndarray:
        S = 6 * self.c
        if lab.min(initial=0) < 0 or lab.max(initial=0) >= S:
            bad = int(np.nonzero((lab < 0).any(1) | (lab >= S).any(1))[0][0])
            raise ConfigurationFault("partition set name out of range", self.ix.nodes[bad])
        return lab

    def components(self, lab: np.ndarray) -> tuple[int, np.ndarray]:
        """Connected components of the partition-set graph for flat labels (n, 6c)."""
        key = hashlib.blake2b(lab.tobytes(), digest_size=16).digest()
        hit = self._cc_cache.get(key)
        if hit is not None:
            return hit
        S = 6 * self.c
        N = self.n * S
        a = self._lu * S + lab[self._lu, self._lpu]
        b = self._lv * S + lab[self._lv, self._lpv]
        g = coo_matrix((np.ones(len(a), dtype=np.int8), (a, b)), shape=(N, N))
        res = connected_components(g, directed=False)
        if len(self._cc_cache) > 64:
            self._cc_cache.clear()
        self._cc_cache[key] = res
        return res

    def deliver(self, lab: np.ndarray, sends: np.ndarray) -> np.ndarray:
        S = 6 * self.c
        idx = np.flatnonzero(sends)
        if len(idx) == 0:
            return np.zeros((self.n, S), dtype=bool)
        ncomp, comp = self.components(lab)
        hot = np.zeros(ncomp, dtype=bool)
        hot[comp[idx]] = True
        return hot[comp].reshape(self.n, S)

    def _owned(self, lab: np.ndarray) -> np.ndarray:
        """(n, 6c) mask of set names that own at least one valid pin."""
        used = np.zeros((self.n, 6 * self.c), dtype=bool)
        rows = np.repeat(np.arange(self.n), 6 * self.c)
        used[rows[self._valid.ravel()], lab[self._valid]] = True
        return used

    def circuits(self, lab: np.ndarray) -> list[Circuit]:
        """Circuits as sets of (amoebot, set name) for sets that own a pin."""
        S = 6 * self.c
        ncomp, comp = self.components(lab)
        used = self._owned(lab)
        groups: dict = {}
        for flat in np.flatnonzero(used.ravel()):
            u, k = divmod(int(flat), S)
            groups.setdefault(int(comp[flat]), set()).add((self.ix.nodes[u], k))
        return [Circuit(i, frozenset(m)) for i, m in sorted(groups.items())]

    # --- rounds -------------------------------------------------------------

    def step(self, program: Program) -> np.ndarray:
        """One synchronous round; returns the termination votes."""
        view = program.view
        view.round = self.round
        out = program.activate(self.recv)
        S = 6 * self.c
        if out.labels is None:
            lab = np.broadcast_to(np.arange(S, dtype=np.int16), (self.n, S))
        else:
            lab = self._check_labels(np.asarray(out.labels).reshape(self.n, S))
        sends = out.sends if out.sends is not None else np.zeros((self.n, S), dtype=bool)
        self.recv = self.deliver(lab, sends)
        self.round += 1
        if self.trace is not None:
            self._trace(program, lab, sends)
        self._audit(program)
        done = out.done
        return np.broadcast_to(np.asarray(done, dtype=bool), (self.n,))

    def run(self, program: Program, round_limit: int | None = None, phase: str | None = None) -> RoundStats:
        """Run `program` until every amoebot votes to terminate in the same round."""
        if self.c < program.min_pins:
            raise SetupFault(f"{type(program).__name__} needs at least {program.min_pins} pins, engine has {self.c}")
        phase = phase or program.phase
        program.start(self.view())
        local = RoundStats()
        while True:
            votes = self.step(program)
            local.add(phase, 1)
            self.stats.add(phase, 1)
            if votes.all():
                break
            if self.round_limit is not None and self.stats.rounds_total >= self.round_limit:
                raise RoundLimitExceeded(self.round_limit, self.stats)
            if round_limit is not None and local.rounds_total >= round_limit:
                raise RoundLimitExceeded(round_limit, self.stats)
        program.finish(self.recv)
        if self.round_limit is not None and self.stats.rounds_total > self.round_limit:
            raise RoundLimitExceeded(self.round_limit, self.stats)
        return local

    def _audit(self, program: Program) -> None:
        bits = counter = 0
        for f in program.fields:
            arr = np.asarray(getattr(program, f.name))
            if arr.size:
                lo, hi = arr.min(), arr.max()
                if lo < 0 or hi >= (1 << f.bits):
                    raise MemoryAuditError(f"{type(program).__name__}.{f.name} holds {lo}..{hi}, declared {f.bits} bits")
            width = f.bits * int(np.prod(arr.shape[1:], dtype=np.int64))
            if f.counter:
                counter += width
            else:
                bits += width
        name = type(program).__name__
        st = self.stats
        st.state_bits_per_program[name] = max(st.state_bits_per_program.get(name, 0), bits)
        st.max_state_bits = max(st.max_state_bits, bits)
        st.max_counter_bits = max(st.max_counter_bits, counter)

    def _trace(self, program: Program, lab: np.ndarray, sends: np.ndarray) -> None:
        nodes = self.ix.nodes
        S = 6 * self.c
        circ = [sorted([[u.a, u.b, k] for u, k in c.members]) for c in self.circuits(lab) if len(c.members) > 1]
        rec = {
            "round": self.stats.rounds_total,
            "phase": program.phase,
            "circuits": circ,
            "sends": [[nodes[i // S].a, nodes[i // S].b, int(i % S)] for i in np.flatnonzero(sends)],
            "receipts": [[nodes[i // S].a, nodes[i // S].b, int(i % S)] for i in np.flatnonzero(self.recv & self._owned(lab))],
        }
        self.trace.write(json.dumps(rec, separators=(",", ":")) + "\n")


# --- scalar programs ------------------------------------------------------------

class PinId(NamedTuple):
    direction: Direction
    link_index: int


@dataclass
class PinConfiguration:
    partition_sets: list

    @classmethod
    def singletons(cls, pins: Iterable) -> "PinConfiguration":
        return cls([{p} for p in pins])

    @classmethod
    def one_set(cls, pins: Iterable) -> "PinConfiguration":
        return cls([set(pins)])


@dataclass
class ActivationInput:
    received: list
    state: object
    occupied: tuple
    pins: tuple


@dataclass
class ActivationOutput:
    state: object
    config: PinConfiguration
    beeps: list
    terminate: bool = False


def valid_pins(occupied: tuple, c: int) -> tuple:
    return tuple(PinId(Direction(d), i) for d in range(6) if occupied[d] for i in range(c))


def config_labels(config: PinConfiguration, pins: tuple, c: int, amoebot=None) -> tuple[np.ndarray, list]:
    """Translate a partition into a label row; returns labels and set names."""
    lab = np.arange(6 * c, dtype=np.int16)
    seen = set()
    names = []
    for part in config.partition_sets:
        part = [PinId(Direction(p[0]), int(p[1])) for p in part]
        if not part:
            names.append(None)
            continue
        for p in part:
            if p not in pins:
                raise ConfigurationFault(f"pin {p} is not a valid pin", amoebot)
            if p in seen:
                raise ConfigurationFault(f"pin {p} appears in two partition sets", amoebot)
            seen.add(p)
        name = min(p.direction * c + p.link_index for p in part)
        for p in part:
            lab[p.direction * c + p.link_index] = name
        names.append(name)
    missing = set(pins) - seen
    if missing:
        raise ConfigurationFault(f"pin {sorted(missing)[0]} is in no partition set", amoebot)
    return lab, names


class ScalarProgram(Program):
    """Adapter: wraps a per-amoebot activation function.

    `func(ActivationInput) -> ActivationOutput`; received flags are given per
    partition set of the previous round's configuration.
    """

    def __init__(self, func: Callable, init_state: Callable, min_pins: int = 1, phase: str = "scalar"):
        self.func = func
        self.init_state = init_state
        self.min_pins = min_pins
        self.phase = phase

    def start(self, view: View) -> None:
        super().start(view)
        self.states = [self.init_state(i) for i in range(view.n)]
        self.names = [[] for _ in range(view.n)]
        self.occ_rows = [tuple(bool(x) for x in view.occ[i]) for i in range(view.n)]

    def activate(self, recv: np.ndarray) -> Activation:
        v = self.view
        labels = np.empty((v.n, v.sets), dtype=np.int16)
        sends = np.zeros((v.n, v.sets), dtype=bool)
        done = np.zeros(v.n, dtype=bool)
        for i in range(v.n):
            pins = valid_pins(self.occ_rows[i], v.pins)
            got = [bool(recv[i, k]) if k is not None else False for k in self.names[i]]
            out = self.func(ActivationInput(got, self.states[i], self.occ_rows[i], pins))
            lab, names = config_labels(out.config, pins, v.pins, amoebot=i)
            labels[i] = lab
            for k, beep in zip(names, out.beeps):
                if beep:
                    if k is None:
                        raise ConfigurationFault("beep on an empty partition set", i)
                    sends[i, k] = True
            self.states[i] = out.state
            self.names[i] = names
            done[i] = out.terminate
        return Activation(labels, sends, done)


def build_circuits(structure: AmoebotStructure | Indexed, configs: dict, pins: int = 1) -> list[Circuit]:
    """Circuits for explicit per-amoebot configurations.

    `configs` maps node -> PinConfiguration. Members are reported as
    (node, index of the partition set in that configuration).
    """
    eng = CircuitEngine(structure, pins)
    S = 6 * pins
    lab = np.empty((eng.n, S), dtype=np.int16)
    back = {}
    for i, u in enumerate(eng.ix.nodes):
        cfg = configs[u]
        try:
            row, names = config_labels(cfg, valid_pins(tuple(eng.occ[i]), pins), pins)
        except ConfigurationFault as e:
            raise ConfigurationFault(str(e).split(" at amoebot")[0], u) from None
        lab[i] = row
        for k, name in enumerate(names):
            if name is not None:
                back[(i, name)] = (u, k)
    ncomp, comp = eng.components(lab)
    groups: dict = {}
    for (i, name), member in back.items():
        groups.setdefault(int(comp[i * S + name]), set()).add(member)
    return [Circuit(cid, frozenset(m)) for cid, m in enumerate(groups[k] for k in sorted(groups))]


# --- small helper programs -------------------------------------------------------

def global_labels(view: View, lane: int = 0) -> np.ndarray:
    """Every amoebot joins all pins of one lane into a single set."""
    lab = view.default_labels()
    lab[:, :, lane] = lane
    return lab


class Barrier(Program):
    """Amoebots with unfinished work beep on a global circuit; silence means done."""

    phase = "barrier"

    def __init__(self, unfinished: np.ndarray):
        self.unfinished = np.asarray(unfinished, dtype=bool)
        self.done_flag = None

    def activate(self, recv):
        v = self.view
        sends = v.no_sends()
        sends[:, 0] = self.unfinished
        return Activation(global_labels(v), sends, True)

    def finish(self, recv):
        # an amoebot without neighbors has no pins and sees only its own beep
        self.done_flag = ~recv[:, 0]


def barrier(engine: CircuitEngine, unfinished) -> np.ndarray:
    prog = Barrier(unfinished)
    engine.run(prog)
    return prog.done_flag


def group_pins(lab: np.ndarray, c: int, dirmask: np.ndarray, lane: int | np.ndarray) -> np.ndarray:
    """Join the pins (d, lane) for every d in each row's mask into one set.

    Returns the set name per row, or -1 where the mask is empty. `lane` may
    be a per-row array.
    """
    n = dirmask.shape[0]
    lane = np.broadcast_to(np.asarray(lane, dtype=np.int64), (n,))
    has = dirmask.any(axis=1)
    first = np.argmax(dirmask, axis=1)
    name = np.where(has, first * c + lane, -1)
    rows, ds = np.nonzero(dirmask)
    lab[rows, ds, lane[rows]] = name[rows]
    return name


class OneRound(Program):
    """A single round with a precomputed configuration; receipts kept for the caller."""

    def __init__(self, labels: np.ndarray | None, sends: np.ndarray | None, phase: str = "beep"):
        self.labels = labels
        self.sends = sends
        self.phase = phase
        self.recv = None

    def activate(self, recv):
        return Activation(self.labels, self.sends, True)

    def finish(self, recv):
        self.recv = recv


def beep_round(engine: CircuitEngine, labels, sends, phase: str = "beep") -> np.ndarray:
    prog = OneRound(labels, sends, phase)
    engine.run(prog)
    return prog.recv
