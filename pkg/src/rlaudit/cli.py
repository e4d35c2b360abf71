"""Command-line interface: init, draw, enter, status, report, simulate, serve."""

from __future__ import annotations

import hashlib
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import click

from .ballots import ElectionDataError, load_election, load_manifest
from .engine import Audit, AuditConfig, AuditError
from . import simulate as sim

DEFAULT_STATE = "audit_state.json"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_audit(state: str) -> Audit:
    try:
        return Audit.load(state)
    except FileNotFoundError:
        raise click.ClickException(f"no audit state at {state}; run `audit init` first")
    except (AuditError, ElectionDataError) as exc:
        raise click.ClickException(str(exc))


@click.group()
def main():
    """Risk-limiting audit engine."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--cvrs", "cvrs_path", type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", type=click.Path(exists=True))
@click.option("--state", default=DEFAULT_STATE, show_default=True)
def init(config_path, cvrs_path, manifest_path, state):
    """Freeze the audit configuration and build every assertion."""
    state_path = Path(state)
    config_doc = json.loads(Path(config_path).read_text(), parse_float=Fraction)
    try:
        config = AuditConfig.from_dict(config_doc)
        specs = [c.spec for c in config.contests]
        cvrs = None
        manifest = None
        sources: dict = {}
        state_dir = state_path.resolve().parent
        if cvrs_path:
            cvrs, diags = load_election(Path(cvrs_path).read_text().splitlines(), specs)
            for d in diags:
                click.echo(f"excluded record {d.record_id} (line {d.position}): {d.message}")
            sources["cvrs"] = {
                "path": os.path.relpath(Path(cvrs_path).resolve(), state_dir),
                "sha256": _sha256(Path(cvrs_path)),
            }
        if manifest_path:
            manifest = load_manifest(Path(manifest_path).read_text().splitlines())
            sources["manifest"] = {
                "path": os.path.relpath(Path(manifest_path).resolve(), state_dir),
                "sha256": _sha256(Path(manifest_path)),
            }
        # per-stratum files resolve relative to the config; remember where that is
        if any(c.strata for c in config.contests):
            sources["strata_base"] = {
                "path": os.path.relpath(Path(config_path).resolve().parent, state_dir)
            }
        audit = Audit.initialize(
            config,
            cvrs,
            manifest,
            base_dir=Path(config_path).resolve().parent,
            state_path=state_path,
            source_files=sources,
        )
    except (ElectionDataError, AuditError, ValueError) as exc:
        raise click.ClickException(str(exc))
    report = audit.measure_all()
    click.echo(f"audit initialized: {len(report['contests'])} contest(s), state in {state}")
    for cid, contest in report["contests"].items():
        click.echo(f"  {cid}: {len(contest['assertions'])} assertion(s), method {contest['method']}")
        for note in contest["diagnostics"]:
            click.echo(f"    note: {note}")


@main.command()
@click.option("--round", "round_number", required=True, type=int)
@click.option(
    "--count",
    "counts",
    multiple=True,
    help="contest=N draw override; repeatable. Omit to size rounds automatically.",
)
@click.option("--state", default=DEFAULT_STATE, show_default=True)
def draw(round_number, counts, state):
    """Open a round and print the cards to retrieve."""
    audit = _load_audit(state)
    parsed: dict[str, int] | None = None
    if counts:
        parsed = {}
        for item in counts:
            contest, _, n = item.partition("=")
            if not n.isdigit():
                raise click.ClickException(f"--count wants contest=N, got {item!r}")
            parsed[contest] = int(n)
    try:
        audit.draw_round(round_number, counts=parsed)
    except AuditError as exc:
        raise click.ClickException(str(exc))
    tasks = audit.draws_for_round(round_number)
    click.echo(f"round {round_number}: {len(tasks)} card(s) to examine")
    for task in tasks:
        where = "PHANTOM (record as missing)" if task["phantom"] else task["location_id"]
        stratum = f" [{task['stratum']}]" if task["stratum"] else ""
        click.echo(f"  {task['contest']}{stratum} #{task['index']}: {where}")


@main.command()
@click.option("--file", "file_path", required=True, type=click.Path(exists=True))
@click.option("--round", "round_number", type=int, default=None, help="defaults to the open round")
@click.option("--close/--no-close", default=True, show_default=True, help="close the round after entering")
@click.option("--escalate", is_flag=True, help="declare a full hand count when closing")
@click.option("--state", default=DEFAULT_STATE, show_default=True)
def enter(file_path, round_number, close, escalate, state):
    """Enter interpretations from a JSON-lines file ({"contest", "index", "record"})."""
    audit = _load_audit(state)
    if round_number is None:
        round_number = audit.round
    entries = []
    for line in Path(file_path).read_text().splitlines():
        line = line.strip()
        if line:
            entries.append(json.loads(line, parse_float=Fraction))
    try:
        n = audit.stage_interpretations(round_number, entries)
        click.echo(f"entered {n} interpretation(s) for round {round_number}")
        if close:
            report = audit.close_round(round_number, escalate=escalate)
            click.echo(f"round {round_number} closed; decision: {report['decision']}")
    except AuditError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--state", default=DEFAULT_STATE, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="print the raw report document")
def status(state, as_json):
    """Per-contest, per-assertion measured risk."""
    audit = _load_audit(state)
    report = audit.measure_all()
    if as_json:
        click.echo(json.dumps(report, indent=2, sort_keys=True))
        return
    click.echo(f"decision: {report['decision']}  (round {report['round']}, risk limit {report['risk_limit']:g})")
    for cid, contest in report["contests"].items():
        click.echo(f"{cid} [{contest['method']}]: {contest['status']}, measured risk {contest['measured_risk']:.6g}")
        for a in contest["assertions"]:
            click.echo(
                f"  {a['assertion_id']}: p={a['p']:.6g} after {a['draws']} draw(s) [{a['status']}]"
            )
        if contest["next_round_estimate"]:
            click.echo(f"  suggested next round size: {contest['next_round_estimate']}")


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--state", default=DEFAULT_STATE, show_default=True)
def report(out_dir, state):
    """Write assertion and trace CSVs plus per-contest risk figures."""
    from .report import render_report  # matplotlib import deferred to here

    audit = _load_audit(state)
    created = render_report(audit, out_dir)
    for path in created:
        click.echo(f"wrote {path}")


@main.command()
@click.option("--trials", default=10_000, show_default=True, type=int)
@click.option("--truth", default="tie", show_default=True, help='"tie" or "margin=<v>" (v<0: winner lost)')
@click.option("--test", "test_kind", default="kk", show_default=True, type=click.Choice(["kk", "km"]))
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--population-size", default=1000, show_default=True, type=int)
@click.option("--shift", default=0.1, show_default=True, type=float)
@click.option("--seed", default=20241105, show_default=True, type=int)
def simulate(trials, truth, test_kind, alpha, population_size, shift, seed):
    """Monte-Carlo check of the certification rate against the stated truth."""
    import numpy as np

    if truth == "tie":
        pop = sim.tie_population(population_size)
        label = "false certification"
    elif truth.startswith("margin="):
        v = float(truth.split("=", 1)[1])
        ones = round(population_size * (1 + v) / 2)
        pop = np.concatenate([np.ones(ones), np.zeros(population_size - ones)])
        label = "certification" if v > 0 else "false certification"
    else:
        raise click.ClickException(f'unknown truth {truth!r}; use "tie" or "margin=<v>"')
    result = sim.polling_validity(
        pop, test=test_kind, alpha=alpha, shift=shift, trials=trials, seed=seed
    )
    click.echo(
        f"{label} rate {result.rate:.4f} over {result.trials} trials "
        f"(threshold {result.bound:.4f}: {'OK' if result.rate <= result.bound else 'EXCEEDED'})"
    )
    if truth == "tie" and not result.passed:
        sys.exit(1)


@main.command()
@click.option("--state", default=DEFAULT_STATE, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True, type=int)
def serve(state, host, port):
    """Serve the audit-board API over HTTP."""
    import uvicorn

    from .service import create_app

    app = create_app(state)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
