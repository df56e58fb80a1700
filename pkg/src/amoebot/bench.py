"""Round-count benchmark grids, envelope fitting and regression baselines."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .spf import compute_spf
from .spt import compute_spt
from .triangular_grid import generate_random_structure

SUITES = ("spsp", "sssp", "spf")


@dataclass(frozen=True)
class Row:
    suite: str
    n: int
    k: int
    ell: int
    seed: int
    rounds: int


def _feature(suite: str, n: int, k: int) -> float:
    if suite == "spf":
        return math.log2(n) * math.log2(k) ** 2
    return math.log2(n)


def grid(suite: str) -> list[tuple]:
    """(n, k, ell, seed) points of a suite; ell is a count or 'n' / 'n/4'."""
    if suite == "spsp":
        return [(n, 1, 1, s) for n in (50, 200, 800) for s in (0, 1)]
    if suite == "sssp":
        return [(n, 1, "n", 0) for n in (50, 100, 200, 400, 800, 1500)]
    if suite == "spf":
        return [(n, k, "n/4", s) for n in (250, 500, 1000) for k in (2, 4, 8, 16) for s in (0, 1)]
    raise KeyError(suite)


def resolve_ell(ell, n: int) -> int:
    if ell == "n":
        return n
    if ell == "n/4":
        return max(1, n // 4)
    return int(ell)


def run_point(suite: str, n: int, k: int, ell, seed: int, pins: int = 4) -> Row:
    st = generate_random_structure(seed, n, k=k, ell=resolve_ell(ell, n))
    if suite == "spf":
        res = compute_spf(st, pins=pins)
    else:
        res = compute_spt(st, next(iter(st.sources)), st.destinations, pins=pins)
    return Row(suite, st.n, len(st.sources), len(st.destinations), seed, res.rounds)


def run_suite(suite: str, pins: int = 4) -> list[Row]:
    return [run_point(suite, *p, pins=pins) for p in grid(suite)]


@dataclass
class Envelope:
    """rounds <= a * feature + b over a suite."""

    a: float
    b: float

    @classmethod
    def fit(cls, suite: str, rows: list[Row]) -> "Envelope":
        x = np.array([_feature(suite, r.n, r.k) for r in rows])
        y = np.array([r.rounds for r in rows], dtype=float)
        if len(set(x)) < 2:
            return cls(0.0, float(y.max()))
        a, b = np.polyfit(x, y, 1)
        a = round(max(float(a), 0.0), 6)
        b = float((y - a * x).max())
        return cls(a, math.ceil(b * 1e6) / 1e6)

    def holds(self, suite: str, row: Row) -> bool:
        return row.rounds <= self.a * _feature(suite, row.n, row.k) + self.b + 1e-9


def baseline_document(results: dict) -> dict:
    doc = {}
    for suite, rows in results.items():
        env = Envelope.fit(suite, rows)
        doc[suite] = {"envelope": asdict(env), "rows": [asdict(r) for r in rows]}
    return doc


def compare(results: dict, baseline: dict) -> list[str]:
    """Differences against a stored baseline: exact rounds per row, and the stored envelope."""
    problems = []
    for suite, rows in results.items():
        ref = baseline.get(suite)
        if ref is None:
            problems.append(f"{suite}: no baseline")
            continue
        env = Envelope(**ref["envelope"])
        want = {(r["n"], r["k"], r["ell"], r["seed"]): r["rounds"] for r in ref["rows"]}
        for r in rows:
            key = (r.n, r.k, r.ell, r.seed)
            if key not in want:
                problems.append(f"{suite} {key}: not in baseline")
            elif want[key] != r.rounds:
                problems.append(f"{suite} {key}: {r.rounds} rounds, baseline {want[key]}")
            if not env.holds(suite, r):
                problems.append(f"{suite} {key}: {r.rounds} rounds above envelope {env.a}*x+{env.b}")
    return problems


def load_baseline(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_baseline(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
