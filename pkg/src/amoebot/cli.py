"""Command-line front end: generate, run, render and benchmark."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import bench as benchmod
from .circuit_engine import ContractFault, RoundLimitExceeded, RoundStats, ValidationFault
from .forest import ParentForest
from .oracle import validate_forest
from .report import bench_figures, read_trace, render
from .spf import compute_spf
from .spt import compute_spt
from .triangular_grid import StructureParseError, format_structure, generate_random_structure, read_structure, write_structure

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_TIMEOUT = 4
EXIT_REGRESSION = 5


def instance_digest(structure) -> str:
    return hashlib.sha256(format_structure(structure).encode()).hexdigest()


@dataclass
class RunReport:
    algorithm: str
    digest: str
    pins: int
    seed: int | None
    status: str
    stats: RoundStats
    verdict: str | None = None
    violations: list = field(default_factory=list)
    forest_file: str | None = None
    figure: str | None = None

    def document(self) -> dict:
        doc = {
            "algorithm": self.algorithm,
            "digest": self.digest,
            "pins": self.pins,
            "seed": self.seed,
            "status": self.status,
            "stats": self.stats.as_dict(),
            "forest_file": self.forest_file,
        }
        if self.verdict is not None:
            doc["verdict"] = self.verdict
            doc["violations"] = list(self.violations)
        if self.figure is not None:
            doc["figure"] = self.figure
        return doc

    def render_text(self) -> str:
        st = self.stats
        lines = [
            f"algorithm\t{self.algorithm}",
            f"digest\t{self.digest}",
            f"pins\t{self.pins}",
            f"status\t{self.status}",
            f"rounds_total\t{st.rounds_total}",
            f"max_state_bits\t{st.max_state_bits}",
            f"max_counter_bits\t{st.max_counter_bits}",
        ]
        if self.seed is not None:
            lines.append(f"seed\t{self.seed}")
        if self.forest_file is not None:
            lines.append(f"forest_file\t{self.forest_file}")
        if self.verdict is not None:
            lines.append(f"verdict\t{self.verdict}")
            lines += [f"violation\t{v}" for v in self.violations]
        if self.figure is not None:
            lines.append(f"figure\t{self.figure}")
        lines += [f"phase\t{k}\t{v}" for k, v in sorted(st.rounds_per_phase.items())]
        return "\n".join(lines)


def emit(report: RunReport, fmt: str) -> None:
    if fmt == "machine":
        click.echo(json.dumps(report.document(), sort_keys=True))
    else:
        click.echo(report.render_text())


def load(path):
    try:
        return read_structure(path)
    except StructureParseError as e:
        click.echo(f"parse error: {path}: {e}", err=True)
        sys.exit(EXIT_PARSE)


@click.group()
def main() -> None:
    """Amoebot circuit simulator with shortest-path forest algorithms."""


@main.command()
@click.argument("algorithm", type=click.Choice(["spt", "spf"]))
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--check", is_flag=True, help="Validate the forest against the BFS oracle.")
@click.option("--seed", type=int, default=None, help="Recorded in the report; runs are deterministic.")
@click.option("--pins", type=int, default=4, show_default=True, help="Pins per edge.")
@click.option("--round-limit", type=int, default=None, help="Abort after this many rounds.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Write a line-delimited round trace.")
@click.option("--format", "fmt", type=click.Choice(["text", "machine"]), default="text", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Forest file (default FILE.ALGORITHM.forest).")
@click.option("--figure", type=click.Path(dir_okay=False), default=None, help="Also render the forest to this file.")
def run(algorithm, file, check, seed, pins, round_limit, trace_path, fmt, out, figure):
    """Run ALGORITHM on the structure in FILE and write the forest."""
    st = load(file)
    digest = instance_digest(st)
    trace = open(trace_path, "w") if trace_path else None
    try:
        if algorithm == "spt":
            if len(st.sources) != 1:
                raise ContractFault(f"spt needs exactly one source, got {len(st.sources)}")
            res = compute_spt(st, next(iter(st.sources)), st.destinations, pins=pins, round_limit=round_limit, trace=trace)
        else:
            res = compute_spf(st, pins=pins, round_limit=round_limit, trace=trace)
    except ValidationFault as e:
        click.echo("validation fault:", err=True)
        for v in e.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(EXIT_VALIDATION)
    except ContractFault as e:
        click.echo(f"validation fault: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    except RoundLimitExceeded as e:
        emit(RunReport(algorithm, digest, pins, seed, "timeout", e.stats), fmt)
        sys.exit(EXIT_TIMEOUT)
    finally:
        if trace is not None:
            trace.close()
    out = out or f"{file}.{algorithm}.forest"
    Path(out).write_text(res.forest.format(st.nodes()))
    report = RunReport(algorithm, digest, pins, seed, "ok", res.stats, forest_file=str(out))
    if check:
        verdict = validate_forest(st, st.sources, st.destinations, res.forest)
        report.verdict = "ok" if verdict.ok else "fail"
        report.violations = [str(v) for v in verdict.violations]
    if figure:
        render(st, figure, forest=res.forest)
        report.figure = str(figure)
    emit(report, fmt)
    if report.verdict == "fail":
        sys.exit(EXIT_VALIDATION)


@main.command()
@click.option("--seed", type=int, required=True)
@click.option("--n", "n", type=int, required=True, help="Number of amoebots.")
@click.option("--k", "k", type=int, default=1, show_default=True, help="Number of sources.")
@click.option("--ell", type=int, default=1, show_default=True, help="Number of destinations.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def gen(seed, n, k, ell, output):
    """Write a random hole-free structure."""
    if n < 1:
        raise click.UsageError("n must be >= 1")
    if not (1 <= k <= n) or not (1 <= ell <= n):
        raise click.UsageError(f"need 1 <= k <= n and 1 <= ell <= n (n={n}, k={k}, ell={ell})")
    write_structure(generate_random_structure(seed, n, k=k, ell=ell), output)


@main.command("render")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--forest", "forest_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--round", "round_no", type=int, default=0, show_default=True, help="Trace round to overlay.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def render_cmd(file, forest_path, trace_path, round_no, output):
    """Draw FILE as SVG (or PNG by suffix)."""
    st = load(file)
    forest = None
    if forest_path:
        try:
            forest = ParentForest.parse(Path(forest_path).read_text())
        except ValueError as e:
            click.echo(f"parse error: {forest_path}: {e}", err=True)
            sys.exit(EXIT_PARSE)
    rec = None
    if trace_path:
        try:
            rec = read_trace(trace_path, round_no)
        except (ValueError, KeyError) as e:
            click.echo(f"parse error: {trace_path}: {e}", err=True)
            sys.exit(EXIT_PARSE)
        if rec is None:
            raise click.UsageError(f"trace has no round {round_no}")
    summary = render(st, output, forest=forest, trace_round=rec)
    click.echo(f"discs\t{summary.discs}\narrows\t{summary.arrows}\ncircuits\t{summary.circuits}")


@main.command("bench")
@click.option("--suite", "suites", type=click.Choice(benchmod.SUITES), multiple=True, help="Default: all suites.")
@click.option("--baseline", type=click.Path(dir_okay=False), default="tests/baselines/bench.json", show_default=True)
@click.option("--update", is_flag=True, help="Rewrite the baseline from this run.")
@click.option("--figures", type=click.Path(file_okay=False), default=None, help="Write figures to this directory.")
@click.option("--format", "fmt", type=click.Choice(["text", "machine"]), default="text", show_default=True)
def bench_cmd(suites, baseline, update, figures, fmt):
    """Round counts over the standard grids, compared against a baseline."""
    suites = suites or benchmod.SUITES
    results = {s: benchmod.run_suite(s) for s in suites}
    doc = benchmod.baseline_document(results)
    if update:
        old = benchmod.load_baseline(baseline) if Path(baseline).exists() else {}
        old.update(doc)
        Path(baseline).parent.mkdir(parents=True, exist_ok=True)
        benchmod.save_baseline(old, baseline)
        problems = []
    else:
        ref = benchmod.load_baseline(baseline) if Path(baseline).exists() else {}
        problems = benchmod.compare(results, ref)
    ref = benchmod.load_baseline(baseline) if Path(baseline).exists() else doc
    envelopes = {s: benchmod.Envelope(**ref[s]["envelope"]) for s in suites if s in ref}
    if fmt == "machine":
        out = {"suites": doc, "regressions": problems}
        click.echo(json.dumps(out, sort_keys=True))
    else:
        click.echo("suite\tn\tk\tell\tseed\trounds")
        for s in suites:
            for r in results[s]:
                click.echo(f"{r.suite}\t{r.n}\t{r.k}\t{r.ell}\t{r.seed}\t{r.rounds}")
        for s in suites:
            e = envelopes.get(s)
            if e is not None:
                click.echo(f"envelope\t{s}\t{e.a}\t{e.b}")
        for p in problems:
            click.echo(f"regression\t{p}")
    if figures:
        for p in bench_figures(results, envelopes, figures):
            click.echo(f"figure\t{p}", err=fmt == "machine")
    if problems:
        sys.exit(EXIT_REGRESSION)


if __name__ == "__main__":
    main()
