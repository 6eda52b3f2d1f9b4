"""Command-line surface over the library.

Exit codes follow one convention across subcommands: 0 for the
affirmative outcome (SAT, ACHIEVABLE, YES, clean run), 1 for the
negative one (UNSAT, UNACHIEVABLE, NO), 2 for configuration, parse,
or IO errors, with a diagnostic on standard error.
"""

from __future__ import annotations

import contextlib
import sys
import tempfile
from pathlib import Path

import click

from .compiler import (
    PurposeFormula,
    build_pre_automaton,
    build_purpose_formula,
    export_dot,
    specialize,
)
from .formulas import And, ParseError, evaluate, inject_single_task_constraint, parse
from .policy import (
    PolicyError,
    Request,
    format_trace,
    load_policy_file,
    parse_trace,
    parse_workflow,
)
from .runtime import CorruptLogError, EngineConfig, PolicyEngine
from .wsp import purpose_achievable, sub_purpose

_FAILURES = (ParseError, PolicyError, CorruptLogError, OSError)


def _fail(error) -> None:
    click.echo(f"error: {error}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Purpose-aware policy engine."""


@main.command("eval")
@click.option("--formula", "formula_text", required=True, help="Temporal formula text.")
@click.option("--trace", "trace_path", required=True, type=click.Path(), help="Trace file.")
def eval_cmd(formula_text: str, trace_path: str) -> None:
    """Evaluate a formula on a trace's task projection: SAT or UNSAT."""
    try:
        f = parse(formula_text)
        requests = parse_trace(Path(trace_path).read_text(encoding="utf-8"))
    except _FAILURES as e:
        _fail(e)
    if not requests:
        _fail("trace is empty; formulas are judged on nonempty traces")
    word = [frozenset([r.task]) for r in requests]
    if evaluate(f, word, 0):
        click.echo("SAT")
        sys.exit(0)
    click.echo("UNSAT")
    sys.exit(1)


@main.command()
@click.option("--facts", "facts_path", required=True, type=click.Path(), help="Facts file.")
@click.option("--purpose", required=True, help="Declared purpose name.")
def check(facts_path: str, purpose: str) -> None:
    """Decide purpose achievability; print a witness trace if any."""
    try:
        p = load_policy_file(facts_path)
        res = purpose_achievable(p, purpose)
    except _FAILURES as e:
        _fail(e)
    s = res.stats
    click.echo(
        f"states_explored={s.states_explored}"
        f" substitutions_tried={s.substitutions_tried}"
        f" wall_time_s={s.wall_time_s:.6f}",
        err=True,
    )
    if res.achievable:
        click.echo("ACHIEVABLE")
        click.echo(format_trace(res.witness), nl=False)
        sys.exit(0)
    click.echo("UNACHIEVABLE")
    sys.exit(1)


@main.command()
@click.option("--facts", "facts_path", required=True, type=click.Path(), help="Facts file.")
@click.option(
    "--logdir",
    "log_dir",
    default=None,
    type=click.Path(),
    help="Durable instance-log directory; omitted means in-memory only.",
)
def monitor(facts_path: str, log_dir) -> None:
    """Decide trace-format requests from standard input, one per line."""
    facts = Path(facts_path)
    try:
        with contextlib.ExitStack() as stack:
            if log_dir is None:
                log_dir = stack.enter_context(tempfile.TemporaryDirectory())
            engine = PolicyEngine(
                EngineConfig(
                    facts_path=facts,
                    workflow_dir=facts.parent,
                    log_dir=Path(log_dir),
                )
            )
            for lineno, raw in enumerate(sys.stdin, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 5:
                    _fail(f"request needs 5 fields, got {len(parts)} (line {lineno})")
                rec = engine.submit(Request(*parts))
                click.echo(f"{rec.decision.value} {rec.verdict.value}")
                sys.stdout.flush()
    except _FAILURES as e:
        _fail(e)


@main.command("compile")
@click.option("--facts", "facts_path", required=True, type=click.Path(), help="Facts file.")
@click.option("--purpose", required=True, help="Declared purpose name.")
@click.option(
    "--stage",
    type=click.Choice(["pre", "specialized"]),
    default="pre",
    show_default=True,
    help="Export before or after attaching the policy's resource checks.",
)
@click.option("--dot", "dot_path", required=True, type=click.Path(), help="Output DOT file.")
def compile_cmd(facts_path: str, purpose: str, stage: str, dot_path: str) -> None:
    """Compile a purpose's automaton and write it as GraphViz DOT."""
    try:
        p = load_policy_file(facts_path)
        a = build_pre_automaton(build_purpose_formula(p, purpose))
        if stage == "specialized":
            a = specialize(a, p)
        Path(dot_path).write_text(export_dot(a), encoding="utf-8")
    except _FAILURES as e:
        _fail(e)
    click.echo(f"{len(a.states)} states, {len(a.edges)} edges -> {dot_path}", err=True)


def _workflow_purpose(path: Path) -> PurposeFormula:
    wf = parse_workflow(path.read_text(encoding="utf-8"))
    return PurposeFormula(
        purpose=path.stem,
        tasks=wf.tasks,
        phi=And(wf.formula, inject_single_task_constraint(wf.tasks)),
        task_link={},
        sod_pairs=frozenset(),
        bod_pairs=frozenset(),
    )


@main.command()
@click.option("--of", "of_path", required=True, type=click.Path(), help="Smaller workflow file.")
@click.option("--in", "in_path", required=True, type=click.Path(), help="Enclosing workflow file.")
def subpurpose(of_path: str, in_path: str) -> None:
    """Is the first workflow realized on the way by every run of the second?"""
    try:
        small = _workflow_purpose(Path(of_path))
        large = _workflow_purpose(Path(in_path))
        included = sub_purpose(small, large)
    except _FAILURES as e:
        _fail(e)
    if included:
        click.echo("YES")
        sys.exit(0)
    click.echo("NO")
    sys.exit(1)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="JSON config file.")
def serve(config_path: str) -> None:
    """Run the HTTP enforcement service until interrupted."""
    try:
        cfg = EngineConfig.from_json_file(config_path)
        engine = PolicyEngine(cfg)
    except _FAILURES as e:
        _fail(e)

    import uvicorn

    from .service import create_app

    host, _, port = cfg.bind.rpartition(":")
    uvicorn.run(
        create_app(engine),
        host=host or "127.0.0.1",
        port=int(port),
        log_level=cfg.verbosity,
    )


if __name__ == "__main__":
    main()
