"""Matplotlib drawings of structures, forests, circuit traces and bench results."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, FancyArrowPatch  # noqa: E402

from .triangular_grid import AmoebotStructure, Node  # noqa: E402

SQRT3_2 = math.sqrt(3) / 2
RADIUS = 0.32
COLORS = {"plain": "#d9d9d9", "source": "#d62728", "destination": "#1f77b4", "both": "#9467bd"}
CIRCUIT_COLORS = plt.get_cmap("tab10").colors


def xy(u) -> tuple[float, float]:
    """Euclidean position of axial node (a, b)."""
    return u[0] + 0.5 * u[1], SQRT3_2 * u[1]


@dataclass
class RenderSummary:
    discs: int
    arrows: int
    circuits: int


def read_trace(path, round_no: int) -> dict | None:
    """The trace record of one round, or None if the trace has no such round."""
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if rec["round"] == round_no:
                    return rec
    return None


def _kind(s: AmoebotStructure, u: Node) -> str:
    src, dst = u in s.sources, u in s.destinations
    if src and dst:
        return "both"
    return "source" if src else "destination" if dst else "plain"


def _save(fig, out) -> None:
    fmt = str(out).rsplit(".", 1)[-1].lower()
    meta = {"Date": None} if fmt == "svg" else {}
    if fmt == "svg":
        meta["Creator"] = None
    fig.savefig(out, format=fmt, metadata=meta or None)
    plt.close(fig)


def render(structure: AmoebotStructure, out, forest=None, trace_round: dict | None = None) -> RenderSummary:
    """Draw the structure to `out` (format from the suffix).

    Amoebots are discs colored by role, the leader has a thick outline, forest
    parent edges are arrows, and a trace record overlays its circuits.
    """
    with plt.rc_context({"svg.hashsalt": "amoebot", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.set_aspect("equal")
        ax.axis("off")
        nodes = structure.nodes()
        discs = 0
        for u in nodes:
            x, y = xy(u)
            lead = u == structure.leader
            ax.add_patch(Circle((x, y), RADIUS, facecolor=COLORS[_kind(structure, u)],
                                edgecolor="black", linewidth=2.5 if lead else 0.6, gid=f"disc-{u.a}-{u.b}"))
            discs += 1
        circuits = 0
        if trace_round is not None:
            circuits = _overlay(ax, structure, trace_round)
        arrows = 0
        if forest is not None:
            for u, v in forest.edges():
                (x0, y0), (x1, y1) = xy(u), xy(v)
                ax.add_patch(FancyArrowPatch((x0, y0), (x1, y1), arrowstyle="-|>", mutation_scale=10,
                                             shrinkA=9, shrinkB=9, color="black", gid=f"arrow-{u.a}-{u.b}"))
                arrows += 1
        if nodes:
            xs = [xy(u)[0] for u in nodes]
            ys = [xy(u)[1] for u in nodes]
            ax.set_xlim(min(xs) - 1, max(xs) + 1)
            ax.set_ylim(min(ys) - 1, max(ys) + 1)
        if trace_round is not None:
            ax.set_title(f"round {trace_round['round']} ({trace_round['phase']})")
        _save(fig, out)
    return RenderSummary(discs, arrows, circuits)


def _overlay(ax, structure: AmoebotStructure, rec: dict) -> int:
    """Draw each circuit of a trace record as lines between member amoebots."""
    occ = structure.occupied
    drawn = 0
    for i, members in enumerate(rec["circuits"]):
        pts = sorted({(a, b) for a, b, _ in members if Node(a, b) in occ})
        if len(pts) < 2:
            continue
        color = CIRCUIT_COLORS[i % len(CIRCUIT_COLORS)]
        inside = set(pts)
        for p in pts:
            for d in range(3):
                q = Node(*p).step(d)
                if q in inside:
                    (x0, y0), (x1, y1) = xy(p), xy(q)
                    ax.plot([x0, x1], [y0, y1], color=color, linewidth=2, alpha=0.7, gid=f"circuit-{i}")
        drawn += 1
    sent = {(a, b) for a, b, _ in rec["sends"] if Node(a, b) in occ}
    for p in sorted(sent):
        x, y = xy(p)
        ax.plot([x], [y], marker="*", color="gold", markersize=9, markeredgecolor="black", markeredgewidth=0.4)
    return drawn


def bench_figures(results: dict, envelopes: dict, outdir) -> list:
    """Rounds vs n for the single-source suites and rounds vs log n log^2 k for spf."""
    from pathlib import Path

    from .bench import _feature

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context({"svg.hashsalt": "amoebot"}):
        single = [s for s in ("spsp", "sssp") if s in results]
        if single:
            fig, ax = plt.subplots(figsize=(6, 4))
            for s in single:
                rows = results[s]
                ax.plot([r.n for r in rows], [r.rounds for r in rows], "o-", label=s)
            ax.set_xscale("log", base=2)
            ax.set_xlabel("n")
            ax.set_ylabel("rounds")
            ax.legend()
            path = outdir / "rounds_vs_n.svg"
            _save(fig, path)
            written.append(path)
        if "spf" in results:
            rows = results["spf"]
            fig, ax = plt.subplots(figsize=(6, 4))
            for k in sorted({r.k for r in rows}):
                sel = [r for r in rows if r.k == k]
                ax.plot([_feature("spf", r.n, r.k) for r in sel], [r.rounds for r in sel], "o", label=f"k={k}")
            env = envelopes.get("spf")
            if env is not None:
                xs = [_feature("spf", r.n, r.k) for r in rows]
                lo, hi = min(xs), max(xs)
                ax.plot([lo, hi], [env.a * lo + env.b, env.a * hi + env.b], "k--", label="envelope")
            ax.set_xlabel("log2 n * (log2 k)^2")
            ax.set_ylabel("rounds")
            ax.legend()
            path = outdir / "spf_envelope.svg"
            _save(fig, path)
            written.append(path)
    return written
