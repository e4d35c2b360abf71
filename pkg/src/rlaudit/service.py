"""HTTP API for audit-board stations.

The service owns the audit instance: one writer behind a lock, concurrent
readers get consistent snapshots. The UI performs no statistical computation;
every p-value it shows comes from these endpoints. Errors are JSON
{"code", "message"} with 4xx status.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse

from .engine import Audit, AuditError

_CONFLICTS = {
    "duplicate_interpretation",
    "round_closed",
    "round_open",
    "audit_over",
    "replay_mismatch",
    "coverage",
}
_NOT_FOUND = {"bad_round", "no_round", "unknown_contest", "unknown_stratum"}


def _status_for(code: str) -> int:
    if code in _CONFLICTS:
        return 409
    if code in _NOT_FOUND:
        return 404
    return 400


def create_app(state_path: str | Path | None = None, audit: Audit | None = None) -> FastAPI:
    """Build the service over an existing audit or a state file to load."""
    if audit is None:
        if state_path is None:
            raise ValueError("need a state file or an audit instance")
        audit = Audit.load(state_path)
    app = FastAPI(title="rlaudit service")
    app.state.audit = audit
    app.state.lock = threading.Lock()

    @app.exception_handler(AuditError)
    async def audit_error(_: Request, exc: AuditError):
        return JSONResponse(
            status_code=_status_for(exc.code),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.exception_handler(ValueError)
    async def value_error(_: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"code": "invalid", "message": str(exc)})

    @app.get("/audit/state")
    def get_state():
        with app.state.lock:
            report = app.state.audit.measure_all()
            report["rounds"] = [
                {
                    "round": rec["round"],
                    "closed": rec["closed"],
                    "escalated": rec["escalated"],
                    "draws": sum(len(ix) for units in rec["draws"].values() for ix in units.values()),
                    "entered": len(rec["interpretations"]),
                }
                for rec in app.state.audit.rounds
            ]
            return report

    @app.get("/audit/assertions")
    def get_assertions():
        with app.state.lock:
            report = app.state.audit.measure_all()
        out = []
        for cid, contest in report["contests"].items():
            for a in contest["assertions"]:
                out.append({"contest": cid, **a})
        return out

    @app.get("/audit/round/{k}/draws")
    def get_draws(k: int):
        with app.state.lock:
            return app.state.audit.draws_for_round(k)

    @app.post("/audit/round/{k}/draw")
    def post_draw(k: int, body: dict | None = None):
        counts = (body or {}).get("counts")
        with app.state.lock:
            app.state.audit.draw_round(k, counts=counts)
            return app.state.audit.draws_for_round(k)

    @app.post("/audit/round/{k}/interpretations")
    def post_interpretations(k: int, body: dict = Body(...)):
        items = body.get("items")
        if not isinstance(items, list):
            raise AuditError("invalid", 'expected {"items": [...]}')
        with app.state.lock:
            accepted = app.state.audit.stage_interpretations(k, items)
        return {"accepted": accepted}

    @app.post("/audit/round/{k}/close")
    def post_close(k: int, body: dict | None = None):
        escalate = bool((body or {}).get("escalate", False))
        with app.state.lock:
            return app.state.audit.close_round(k, escalate=escalate)

    return app
