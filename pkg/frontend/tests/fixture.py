"""Create the scripted-audit fixture for the UI parity test.

Usage: python3 fixture.py <workdir>
Writes config/cvrs/manifest plus the initialized audit state into <workdir>
and prints {"state": ..., "truth": ..., "contest": ...} as JSON on stdout.
"""

import json
import subprocess
import sys
from pathlib import Path

CONTEST = "mayor"
WINNER_CVRS = 17
LOSER_CVRS = 13
PHANTOMS = 2
ERRORS = 1
SEED = "ui-parity-1"


def main(workdir: Path):
    cvr_rows = []
    manifest_rows = ["location_id,cvr_id,styles"]
    truth = {}
    n_real = WINNER_CVRS + LOSER_CVRS
    for k in range(1, n_real + 1):
        rid = f"cvr{k:03d}"
        loc = f"box/{k:03d}"
        claimed = "alice" if k <= WINNER_CVRS else "bob"
        actual = "bob" if k <= ERRORS else claimed
        cvr_rows.append(json.dumps({"id": rid, "contests": {CONTEST: {"marks": [claimed]}}}))
        manifest_rows.append(f"{loc},{rid},")
        truth[loc] = {"contests": {CONTEST: {"marks": [actual]}}}
    (workdir / "cvrs.jsonl").write_text("\n".join(cvr_rows) + "\n")
    (workdir / "manifest.csv").write_text("\n".join(manifest_rows) + "\n")
    config_doc = {
        "risk_limit": "0.05",
        "seed": SEED,
        "test": "kk",
        "contests": [
            {
                "contest_id": CONTEST,
                "social_choice": "plurality",
                "candidates": ["alice", "bob"],
                "n_winners": 1,
                "reported_winners": ["alice"],
                "upper_bound_cards": n_real + PHANTOMS,
                "method": "comparison",
            }
        ],
    }
    (workdir / "config.json").write_text(json.dumps(config_doc, indent=1))
    state_path = workdir / "audit_state.json"
    subprocess.run(
        [
            "audit", "init",
            "--config", str(workdir / "config.json"),
            "--cvrs", str(workdir / "cvrs.jsonl"),
            "--manifest", str(workdir / "manifest.csv"),
            "--state", str(state_path),
        ],
        check=True,
        capture_output=True,
    )
    truth_path = workdir / "truth.json"
    truth_path.write_text(json.dumps(truth, indent=1))
    print(json.dumps({"state": str(state_path), "truth": str(truth_path), "contest": CONTEST}))


if __name__ == "__main__":
    main(Path(sys.argv[1]))
