"""Render an audit's measured risk to delimited files and figures.

The report directory gets one CSV of per-assertion status, one CSV of the
per-draw p-value traces, and one PNG per contest plotting every assertion's
measured risk against draws with the risk limit as a reference line.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .engine import Audit


def write_assertion_csv(audit: Audit, path: Path):
    report = audit.measure_all()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["contest", "assertion", "kind", "description", "draws", "p", "p_exact", "status"]
        )
        for cid, contest in report["contests"].items():
            for a in contest["assertions"]:
                writer.writerow(
                    [
                        cid,
                        a["assertion_id"],
                        a["kind"],
                        a["description"],
                        a["draws"],
                        f"{a['p']:.10g}",
                        a["p_exact"] or "",
                        a["status"],
                    ]
                )


def write_trace_csv(audit: Audit, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["contest", "assertion", "j", "x", "z_or_y", "p"])
        for cid in sorted(audit.contests):
            for rt in audit.contests[cid].assertions:
                for row in rt.trace:
                    writer.writerow(
                        [cid, rt.assertion_id, row["j"], row["x"], row["z_or_y"], row["p"]]
                    )


def write_trace_jsonl(audit: Audit, path: Path):
    """One JSON line per draw per assertion: {"j", "x", "z_or_y", "p"} plus ids."""
    with open(path, "w") as fh:
        for cid in sorted(audit.contests):
            for rt in audit.contests[cid].assertions:
                for row in rt.trace:
                    fh.write(
                        json.dumps(
                            {
                                "contest": cid,
                                "assertion": rt.assertion_id,
                                "j": row["j"],
                                "x": row["x"],
                                "z_or_y": row["z_or_y"],
                                "p": row["p"],
                            }
                        )
                        + "\n"
                    )


def plot_contest(audit: Audit, contest_id: str, path: Path):
    runtime = audit.contests[contest_id]
    fig, ax = plt.subplots(figsize=(8, 5))
    plotted = False
    for rt in runtime.assertions:
        if rt.trace:
            xs = [row["j"] for row in rt.trace]
            ps = [row["p"] for row in rt.trace]
        elif rt.round_history:
            xs = [h["round"] for h in rt.round_history]
            ps = [h["p"] for h in rt.round_history]
        else:
            continue
        ax.step(xs, ps, where="post", label=rt.assertion_id.split(":", 1)[-1])
        plotted = True
    alpha = float(audit.config.risk_limit)
    ax.axhline(alpha, color="crimson", linestyle="--", linewidth=1, label=f"risk limit {alpha:g}")
    ax.set_yscale("log")
    ax.set_xlabel("draws" if any(rt.trace for rt in runtime.assertions) else "round")
    ax.set_ylabel("measured risk (p-value)")
    ax.set_title(f"{contest_id}: measured risk by assertion")
    if plotted:
        ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(audit: Audit, out_dir: str | Path) -> list[Path]:
    """Write the whole report; returns the files created."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []
    assertions_csv = out / "assertions.csv"
    write_assertion_csv(audit, assertions_csv)
    created.append(assertions_csv)
    trace_csv = out / "trace.csv"
    write_trace_csv(audit, trace_csv)
    created.append(trace_csv)
    trace_jsonl = out / "trace.jsonl"
    write_trace_jsonl(audit, trace_jsonl)
    created.append(trace_jsonl)
    for cid in sorted(audit.contests):
        fig_path = out / f"risk_{cid.replace('/', '_')}.png"
        plot_contest(audit, cid, fig_path)
        created.append(fig_path)
    return created
