"""Shared end-to-end fixtures: small elections written to disk like a real audit."""

from __future__ import annotations

import json
from pathlib import Path


def write_lines(path: Path, rows):
    path.write_text("\n".join(rows) + "\n")


def marks_cvr(rid, contest, *marks, redacted=False):
    doc = {"id": rid, "contests": {contest: {"marks": list(marks)}}}
    if redacted:
        doc["redacted"] = True
    return json.dumps(doc)


def polling_election(tmp_path: Path, *, winner_cards=16, loser_cards=8, bound=None, alpha="0.1",
                     seed="public-seed-2024", test="kk"):
    """Polling audit of one two-candidate contest; returns (paths, truth map)."""
    contest = "mayor"
    n_real = winner_cards + loser_cards
    bound = bound if bound is not None else n_real
    manifest_rows = ["location_id,cvr_id,styles"]
    truth = {}
    for k in range(1, n_real + 1):
        loc = f"box/{k:03d}"
        manifest_rows.append(f"{loc},,")
        mark = "alice" if k <= winner_cards else "bob"
        truth[loc] = {"contests": {contest: {"marks": [mark]}}}
    manifest_path = tmp_path / "manifest.csv"
    write_lines(manifest_path, manifest_rows)
    config = {
        "risk_limit": alpha,
        "seed": seed,
        "test": test,
        "contests": [
            {
                "contest_id": contest,
                "social_choice": "plurality",
                "candidates": ["alice", "bob"],
                "n_winners": 1,
                "reported_winners": ["alice"],
                "upper_bound_cards": bound,
                "method": "polling",
                "reported_tallies": {"alice": winner_cards, "bob": loser_cards},
            }
        ],
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config, indent=1))
    return config_path, manifest_path, truth


def comparison_election(tmp_path: Path, *, winner_cvrs=24, loser_cvrs=6, phantoms=2,
                        errors=1, alpha="0.1", seed="public-seed-2024", test="kk",
                        redacted_in_tally=False, redacted=0):
    """Comparison audit; CVR errors flip the first `errors` winner cards to the loser.

    Returns (config_path, cvrs_path, manifest_path, truth) where truth maps
    location id to the physical card's wire record.
    """
    contest = "mayor"
    n_real = winner_cvrs + loser_cvrs
    cvr_rows = []
    manifest_rows = ["location_id,cvr_id,styles"]
    truth = {}
    for k in range(1, n_real + 1):
        rid = f"cvr{k:03d}"
        loc = f"box/{k:03d}"
        claimed = "alice" if k <= winner_cvrs else "bob"
        actual = claimed
        if k <= errors:
            actual = "bob"  # two-vote overstatement on the first few cards
        cvr_rows.append(marks_cvr(rid, contest, claimed, redacted=k <= redacted))
        manifest_rows.append(f"{loc},{rid},")
        truth[loc] = {"contests": {contest: {"marks": [actual]}}}
    cvrs_path = tmp_path / "cvrs.jsonl"
    write_lines(cvrs_path, cvr_rows)
    manifest_path = tmp_path / "manifest.csv"
    write_lines(manifest_path, manifest_rows)
    config = {
        "risk_limit": alpha,
        "seed": seed,
        "test": test,
        "contests": [
            {
                "contest_id": contest,
                "social_choice": "plurality",
                "candidates": ["alice", "bob"],
                "n_winners": 1,
                "reported_winners": ["alice"],
                "upper_bound_cards": n_real + phantoms,
                "method": "comparison",
                "redacted_in_tally": redacted_in_tally,
            }
        ],
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config, indent=1))
    return config_path, cvrs_path, manifest_path, truth


def interpretations_for(audit, round_number, truth, *, missing=(), override=None):
    """Build the round's entry list by looking cards up in the truth map."""
    entries = []
    for task in audit.draws_for_round(round_number):
        if task["phantom"]:
            record = None
        elif task["location_id"] in missing:
            record = None
        else:
            record = dict(truth[task["location_id"]])
        if override:
            record = override(task, record)
        entries.append(
            {
                "contest": task["contest"],
                "stratum": task["stratum"] or None,
                "index": task["index"],
                "record": record,
            }
        )
    return entries
