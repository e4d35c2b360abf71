"""Audit orchestration: freeze a configuration, draw cards, consume
interpretations round by round, and decide certify / continue / full hand count.

The audit certifies only when every assertion of every audited contest has
measured risk at or below the risk limit. No multiplicity adjustment is
needed: certifying requires rejecting *all* the complementary nulls, and the
chance of rejecting the null of any single false assertion is already capped
by the risk limit.

State is a single JSON document rewritten atomically after every mutation, so
the audit artifact stays portable and human-inspectable, and a finished audit
replays bit-for-bit from its own log.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import sampling
from .assorters import (
    Assertion,
    AssertionStatus,
    IrvAssertionSpec,
    assertions_for_contest,
    assorter_mean,
)
from .ballots import (
    CardManifest,
    ContestSpec,
    DrawKind,
    ElectionDataError,
    ManifestEntry,
    PHANTOM,
    VoteRecord,
    as_fraction,
    load_election,
    load_manifest,
    pad_with_phantoms,
    parse_vote_record,
    resolve_draw,
)
from .comparison import ComparisonDraw, comparison_audit_assertion, overstatement
from .nonneg_mean import estimate_initial_sample_size, make_test_state
from .stratification import (
    StratumSpec,
    comparison_tester,
    default_grid,
    max_combined_pvalue,
    polling_tester,
)

STATE_FORMAT = "rlaudit-state-v1"
SINGLE_UNIT = ""  # unit id used when a contest is not stratified
HALF = Fraction(1, 2)


class AuditError(Exception):
    """Engine-level failure with a stable machine-readable code."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class AuditMethod(str, Enum):
    POLLING = "polling"
    COMPARISON = "comparison"
    STRATIFIED = "stratified"


class Decision(str, Enum):
    IN_PROGRESS = "in_progress"
    CERTIFIED = "certified"
    FULL_HAND_COUNT = "full_hand_count"


@dataclass(frozen=True)
class StratumConfig:
    stratum_id: str
    method: AuditMethod
    cards: int
    manifest_path: str
    cvrs_path: str | None = None


@dataclass(frozen=True)
class ContestAuditConfig:
    spec: ContestSpec
    method: AuditMethod
    redacted_in_tally: bool = False
    irv_assertions: tuple[IrvAssertionSpec, ...] = ()
    reported_tallies: Mapping[str, int] | None = None
    strata: tuple[StratumConfig, ...] = ()

    def __post_init__(self):
        if self.method is AuditMethod.STRATIFIED:
            if len(self.strata) < 2:
                raise ElectionDataError(
                    f"contest {self.spec.contest_id}: stratified audits need >= 2 strata"
                )
            total = sum(s.cards for s in self.strata)
            if total != self.spec.upper_bound_cards:
                raise ElectionDataError(
                    f"contest {self.spec.contest_id}: stratum sizes sum to {total}, "
                    f"expected the card bound {self.spec.upper_bound_cards}"
                )
            if any(s.method is AuditMethod.STRATIFIED for s in self.strata):
                raise ElectionDataError("strata cannot themselves be stratified")
        elif self.strata:
            raise ElectionDataError(
                f"contest {self.spec.contest_id}: strata given for a non-stratified audit"
            )


@dataclass(frozen=True)
class AuditConfig:
    """Frozen audit parameters; the seed must be public and fixed before any draw."""

    risk_limit: Fraction
    seed: str
    contests: tuple[ContestAuditConfig, ...]
    test: str = "kk"
    shift_factor: Fraction = Fraction(1, 10)  # test shift as a fraction of the value bound
    replacement: bool = False
    round_multiplier: Fraction = Fraction(3, 2)
    grid_resolution: int | None = None  # allocation grid; None takes the per-S default

    def __post_init__(self):
        if not 0 < self.risk_limit < 1:
            raise ElectionDataError("risk limit must be in (0, 1)")
        if self.test not in ("kk", "km"):
            raise ElectionDataError(f"unknown test {self.test!r}; expected 'kk' or 'km'")
        if not self.seed:
            raise ElectionDataError("audit seed must be a nonempty string")
        if len({c.spec.contest_id for c in self.contests}) != len(self.contests):
            raise ElectionDataError("duplicate contest ids in audit config")

    @classmethod
    def from_dict(cls, d: Mapping) -> "AuditConfig":
        contests = []
        for c in d.get("contests", []):
            spec = ContestSpec.from_dict(c)
            method = AuditMethod(str(c.get("method", "polling")).lower())
            irv = tuple(IrvAssertionSpec.from_dict(a) for a in c.get("irv_assertions", []))
            strata = tuple(
                StratumConfig(
                    stratum_id=str(s["stratum_id"]),
                    method=AuditMethod(str(s["method"]).lower()),
                    cards=int(s["cards"]),
                    manifest_path=str(s["manifest"]),
                    cvrs_path=str(s["cvrs"]) if s.get("cvrs") else None,
                )
                for s in c.get("strata", [])
            )
            tallies = c.get("reported_tallies")
            contests.append(
                ContestAuditConfig(
                    spec=spec,
                    method=method,
                    redacted_in_tally=bool(c.get("redacted_in_tally", False)),
                    irv_assertions=irv,
                    reported_tallies=None if tallies is None else {k: int(v) for k, v in tallies.items()},
                    strata=strata,
                )
            )
        return cls(
            risk_limit=as_fraction(d["risk_limit"]),
            seed=str(d["seed"]),
            contests=tuple(contests),
            test=str(d.get("test", "kk")).lower(),
            shift_factor=as_fraction(d.get("shift_factor", "1/10")),
            replacement=bool(d.get("replacement", False)),
            round_multiplier=as_fraction(d.get("round_multiplier", "3/2")),
            grid_resolution=(
                None if d.get("grid_resolution") is None else int(d["grid_resolution"])
            ),
        )

    def to_dict(self) -> dict:
        contests = []
        for c in self.contests:
            spec = c.spec
            entry: dict = {
                "contest_id": spec.contest_id,
                "social_choice": spec.social_choice.value,
                "candidates": list(spec.candidates),
                "n_winners": spec.n_winners,
                "reported_winners": list(spec.reported_winners),
                "upper_bound_cards": spec.upper_bound_cards,
                "method": c.method.value,
                "redacted_in_tally": c.redacted_in_tally,
            }
            if spec.supermajority_fraction is not None:
                entry["supermajority_fraction"] = str(spec.supermajority_fraction)
            if spec.score_upper_bound is not None:
                entry["score_upper_bound"] = str(spec.score_upper_bound)
            if c.irv_assertions:
                entry["irv_assertions"] = [
                    {
                        "kind": a.kind.value,
                        "winner": a.winner,
                        "loser": a.loser,
                        "eliminated": sorted(a.eliminated),
                    }
                    for a in c.irv_assertions
                ]
            if c.reported_tallies is not None:
                entry["reported_tallies"] = dict(c.reported_tallies)
            if c.strata:
                entry["strata"] = [
                    {
                        "stratum_id": s.stratum_id,
                        "method": s.method.value,
                        "cards": s.cards,
                        "manifest": s.manifest_path,
                        "cvrs": s.cvrs_path,
                    }
                    for s in c.strata
                ]
            contests.append(entry)
        out = {
            "risk_limit": str(self.risk_limit),
            "seed": self.seed,
            "test": self.test,
            "shift_factor": str(self.shift_factor),
            "replacement": self.replacement,
            "round_multiplier": str(self.round_multiplier),
            "contests": contests,
        }
        if self.grid_resolution is not None:
            out["grid_resolution"] = self.grid_resolution
        return out


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _stat_str(value) -> str:
    return str(value) if isinstance(value, Fraction) else repr(float(value))


@dataclass
class SamplingUnit:
    """One independently sampled card universe: a whole contest, or one stratum."""

    unit_id: str
    method: AuditMethod
    manifest: CardManifest  # this unit's eligible entries, phantoms appended
    population_size: int
    real_count: int
    cvrs_by_id: dict[str, VoteRecord] = field(default_factory=dict)
    cvr_pool: list[VoteRecord] = field(default_factory=list)  # real CVRs + phantom CVRs
    drawn: list[int] = field(default_factory=list)

    def remaining(self) -> int:
        return self.population_size - len(set(self.drawn))


@dataclass
class _StratumSide:
    """Per-assertion, per-stratum sample accumulated so far."""

    values: list[Fraction] = field(default_factory=list)  # polling assorter values
    taus: list[Fraction] = field(default_factory=list)  # comparison agreement values
    reported_mean: Fraction | None = None


@dataclass
class AssertionRuntime:
    assertion_id: str
    contest_id: str
    description: str
    assertion: Assertion
    kind: AuditMethod
    state: object | None = None  # sequential test state (non-stratified)
    trace: list[dict] = field(default_factory=list)
    strata: dict[str, _StratumSide] = field(default_factory=dict)
    round_history: list[dict] = field(default_factory=list)
    p: float = 1.0
    p_exact: Fraction | None = None
    allocation: list[str] | None = None  # argmax split, stratified only

    @property
    def status(self) -> AssertionStatus:
        return self.assertion.status

    def draws_seen(self) -> int:
        if self.state is not None:
            return self.state.draws_seen
        return sum(len(s.values) + len(s.taus) for s in self.strata.values())


@dataclass
class ContestRuntime:
    config: ContestAuditConfig
    units: dict[str, SamplingUnit]
    assertions: list[AssertionRuntime]
    diagnostics: list[str] = field(default_factory=list)

    @property
    def contest_id(self) -> str:
        return self.config.spec.contest_id

    def status(self) -> str:
        statuses = [rt.status for rt in self.assertions]
        if any(s is AssertionStatus.UNRESOLVED for s in statuses):
            return "unresolved"
        if all(s is AssertionStatus.REJECTED_NULL for s in statuses):
            return "confirmed"
        return "pending"


def _unit_manifest(
    contest: ContestSpec,
    entries: Sequence[ManifestEntry],
    size: int,
    method: AuditMethod,
    cvrs_by_id: Mapping[str, VoteRecord],
) -> tuple[CardManifest, int]:
    """Contest-eligible entries for one unit, phantom-padded to the unit's bound.

    Comparison units keep only entries whose CVR exists and claims the contest;
    any card the unit cannot compare against falls under the phantom allowance,
    which treats it in the least favorable way.
    """
    cid = contest.contest_id
    eligible = []
    for e in entries:
        if not e.covers(cid) or e.phantom:
            continue
        if method is AuditMethod.COMPARISON:
            cvr = cvrs_by_id.get(e.cvr_id) if e.cvr_id else None
            if cvr is None or not cvr.has_contest(cid):
                continue
        eligible.append(e)
    manifest = pad_with_phantoms(CardManifest(entries=tuple(eligible)), cid, size)
    return manifest, len(eligible)


class Audit:
    """A single audit instance: one writer, any number of concurrent readers."""

    def __init__(
        self,
        config: AuditConfig,
        contests: dict[str, ContestRuntime],
        *,
        state_path: str | Path | None = None,
        source_files: dict | None = None,
    ):
        self.config = config
        self.contests = contests
        self.state_path = Path(state_path) if state_path else None
        self.source_files = source_files or {}
        self.round = 0
        self.decision = Decision.IN_PROGRESS
        self.rounds: list[dict] = []
        self.log: list[dict] = []
        self.diagnostics: list[str] = []

    # ------------------------------------------------------------------ setup

    @classmethod
    def initialize(
        cls,
        config: AuditConfig,
        cvrs: Sequence[VoteRecord] | None = None,
        manifest: CardManifest | None = None,
        *,
        base_dir: str | Path = ".",
        state_path: str | Path | None = None,
        source_files: dict | None = None,
    ) -> "Audit":
        """Freeze the audit: build sampling units, assertions, and test states."""
        base_dir = Path(base_dir)
        contests: dict[str, ContestRuntime] = {}
        for ccfg in config.contests:
            spec = ccfg.spec
            units: dict[str, SamplingUnit] = {}
            if ccfg.method is AuditMethod.STRATIFIED:
                for scfg in ccfg.strata:
                    s_manifest = load_manifest(
                        (base_dir / scfg.manifest_path).read_text().splitlines()
                    )
                    s_cvrs: list[VoteRecord] = []
                    if scfg.cvrs_path:
                        s_cvrs, diags = load_election(
                            (base_dir / scfg.cvrs_path).read_text().splitlines(), [spec]
                        )
                        if diags:
                            raise ElectionDataError(
                                f"stratum {scfg.stratum_id}: invalid CVR: {diags[0].message}"
                            )
                    units[scfg.stratum_id] = cls._build_unit(
                        spec, ccfg, scfg.stratum_id, scfg.method, s_manifest, s_cvrs, scfg.cards
                    )
            else:
                if manifest is None:
                    raise ElectionDataError(f"contest {spec.contest_id}: no manifest supplied")
                units[SINGLE_UNIT] = cls._build_unit(
                    spec,
                    ccfg,
                    SINGLE_UNIT,
                    ccfg.method,
                    manifest,
                    list(cvrs or []),
                    spec.upper_bound_cards,
                )
            contests[spec.contest_id] = ContestRuntime(config=ccfg, units=units, assertions=[])
        audit = cls(config, contests, state_path=state_path, source_files=source_files)
        for runtime in contests.values():
            audit._build_assertions(runtime)
            for rt in runtime.assertions:
                if rt.status is AssertionStatus.UNRESOLVED:
                    runtime.diagnostics.append(
                        f"{rt.assertion_id}: reported CVRs do not support the assertion; "
                        "a full hand count is the only way to confirm this contest"
                    )
        audit._log({"type": "init", "config_sha256": audit._config_hash()})
        audit.save()
        return audit

    @staticmethod
    def _build_unit(
        spec: ContestSpec,
        ccfg: ContestAuditConfig,
        unit_id: str,
        method: AuditMethod,
        manifest: CardManifest,
        cvrs: Sequence[VoteRecord],
        size: int,
    ) -> SamplingUnit:
        cvrs_by_id = {r.record_id: r for r in cvrs}
        if method is AuditMethod.COMPARISON and not ccfg.redacted_in_tally:
            # redacted CVRs omitted from the tally: drop the CVR and its entry,
            # letting phantoms stand in for the cards
            redacted = {rid for rid, r in cvrs_by_id.items() if r.redacted}
            if redacted:
                manifest = CardManifest(
                    entries=tuple(e for e in manifest.entries if e.cvr_id not in redacted)
                )
                cvrs_by_id = {rid: r for rid, r in cvrs_by_id.items() if rid not in redacted}
        unit_manifest, real = _unit_manifest(spec, manifest.entries, size, method, cvrs_by_id)
        pool: list[VoteRecord] = []
        if method is AuditMethod.COMPARISON:
            pool = [
                cvrs_by_id[e.cvr_id]
                for e in unit_manifest.entries_for(spec.contest_id)
                if not e.phantom and e.cvr_id
            ]
            pool.extend([PHANTOM] * (size - real))
        return SamplingUnit(
            unit_id=unit_id,
            method=method,
            manifest=unit_manifest,
            population_size=size,
            real_count=real,
            cvrs_by_id=cvrs_by_id,
            cvr_pool=pool,
        )

    def _build_assertions(self, runtime: ContestRuntime):
        ccfg = runtime.config
        spec = ccfg.spec
        for base in assertions_for_contest(spec, ccfg.irv_assertions or None):
            if ccfg.method is AuditMethod.STRATIFIED:
                rt = AssertionRuntime(
                    assertion_id=base.assorter.id,
                    contest_id=spec.contest_id,
                    description=base.assorter.description,
                    assertion=base,
                    kind=AuditMethod.STRATIFIED,
                )
                for unit_id, unit in sorted(runtime.units.items()):
                    side = _StratumSide()
                    if unit.method is AuditMethod.COMPARISON:
                        side.reported_mean = assorter_mean(base.assorter, unit.cvr_pool)
                    rt.strata[unit_id] = side
            elif ccfg.method is AuditMethod.COMPARISON:
                unit = runtime.units[SINGLE_UNIT]
                comp = comparison_audit_assertion(base, unit.cvr_pool)
                rt = AssertionRuntime(
                    assertion_id=base.assorter.id,
                    contest_id=spec.contest_id,
                    description=base.assorter.description,
                    assertion=comp,
                    kind=AuditMethod.COMPARISON,
                )
                if comp.status is not AssertionStatus.UNRESOLVED:
                    rt.state = self._new_state(unit.population_size, comp.assorter.upper_bound)
            else:
                unit = runtime.units[SINGLE_UNIT]
                rt = AssertionRuntime(
                    assertion_id=base.assorter.id,
                    contest_id=spec.contest_id,
                    description=base.assorter.description,
                    assertion=base,
                    kind=AuditMethod.POLLING,
                )
                rt.state = self._new_state(unit.population_size, base.assorter.upper_bound)
            runtime.assertions.append(rt)

    def _new_state(self, population_size: int, value_bound: Fraction):
        return make_test_state(
            self.config.test,
            population_size,
            HALF,
            shift=self.config.shift_factor * Fraction(value_bound),
        )

    # ------------------------------------------------------------------ draws

    def draw_round(
        self,
        round_number: int,
        counts: Mapping[str, int | Mapping[str, int]] | None = None,
    ) -> dict:
        """Open a round and draw its card indices.

        counts maps contest id to the number of draws wanted this round;
        omitted contests are sized automatically from reported margins and the
        error rate observed so far. Settled contests draw nothing.
        """
        if self.decision is not Decision.IN_PROGRESS:
            raise AuditError("audit_over", f"audit already decided: {self.decision.value}")
        if round_number != self.round + 1:
            raise AuditError("bad_round", f"next round is {self.round + 1}, not {round_number}")
        if self.rounds and not self.rounds[-1]["closed"]:
            raise AuditError("round_open", "close the current round before drawing another")
        draws: dict[str, dict[str, list[int]]] = {}
        for cid in sorted(self.contests):
            runtime = self.contests[cid]
            if self._contest_settled(runtime):
                continue
            want = None if counts is None else counts.get(cid)
            unit_counts = self._size_round(runtime, want)
            contest_draws: dict[str, list[int]] = {}
            for unit_id, unit in sorted(runtime.units.items()):
                n = unit_counts.get(unit_id, 0)
                if n <= 0:
                    continue
                round_id = f"round-{round_number}:{cid}" + (f":{unit_id}" if unit_id else "")
                try:
                    indices = sampling.draw_indices(
                        self.config.seed,
                        round_id,
                        unit.population_size,
                        n,
                        replacement=self.config.replacement,
                        already_drawn=unit.drawn,
                    )
                except sampling.SamplingExhausted as exc:
                    raise AuditError("exhausted", str(exc)) from exc
                unit.drawn.extend(indices)
                contest_draws[unit_id] = indices
            draws[cid] = contest_draws
        self.round = round_number
        record = {
            "round": round_number,
            "draws": draws,
            "interpretations": [],
            "closed": False,
            "escalated": False,
        }
        self.rounds.append(record)
        self._log({"type": "draw", "round": round_number, "draws": draws})
        self.save()
        return record

    def _contest_settled(self, runtime: ContestRuntime) -> bool:
        return runtime.status() in ("confirmed", "unresolved")

    def _size_round(
        self, runtime: ContestRuntime, want: int | Mapping[str, int] | None
    ) -> dict[str, int]:
        """Split this round's draw count across the contest's sampling units.

        `want` may already be a per-unit mapping (replay passes the recorded
        counts verbatim so rounding never drifts).
        """
        units = runtime.units
        if isinstance(want, Mapping):
            explicit = dict(want)
            unknown = set(explicit) - set(units)
            if unknown:
                raise AuditError("unknown_stratum", f"no sampling units {sorted(unknown)}")
            return explicit
        total_n = sum(u.population_size for u in units.values())
        if want is None:
            want = self._auto_size(runtime)
        out: dict[str, int] = {}
        for unit_id, unit in sorted(units.items()):
            share = max(1, round(want * unit.population_size / total_n)) if want > 0 else 0
            if not self.config.replacement:
                share = min(share, unit.remaining())
            out[unit_id] = share
        return out

    def _auto_size(self, runtime: ContestRuntime) -> int:
        """Round size from the reported margin and the error rate observed so far."""
        spec = runtime.config.spec
        drawn = sum(len(u.drawn) for u in runtime.units.values())
        targets = []
        for rt in runtime.assertions:
            if rt.status is AssertionStatus.REJECTED_NULL:
                continue
            margin, comparison, bound = self._sizing_margin(runtime, rt)
            if margin is None or margin <= 0:
                targets.append(spec.upper_bound_cards)
                continue
            est = estimate_initial_sample_size(
                margin,
                self.config.risk_limit,
                test=self.config.test,
                error_rate=self._observed_error_rate(rt),
                population_size=spec.upper_bound_cards,
                upper_bound=bound,
                shift=self.config.shift_factor * bound,
                comparison=comparison,
                max_draws=min(spec.upper_bound_cards, 10_000),
            )
            targets.append(est)
        if not targets:
            return 0
        need = max(targets)
        if drawn == 0:
            size = need
        else:
            size = max(1, math.ceil(float(self.config.round_multiplier) * max(0, need - drawn)))
        return min(size, spec.upper_bound_cards)

    def _sizing_margin(
        self, runtime: ContestRuntime, rt: AssertionRuntime
    ) -> tuple[Fraction | None, bool, Fraction]:
        """(reported margin, is-comparison, value bound) for round sizing."""
        if rt.kind is AuditMethod.COMPARISON:
            ctx = rt.assertion.assorter.context
            return ctx.margin, True, ctx.upper_bound
        base = rt.assertion.assorter
        pool: list[VoteRecord] = []
        for unit in runtime.units.values():
            if unit.method is AuditMethod.COMPARISON:
                pool.extend(unit.cvr_pool)
        if runtime.config.reported_tallies is None and not pool:
            return None, False, base.upper_bound
        if pool and len(pool) == runtime.config.spec.upper_bound_cards:
            return 2 * assorter_mean(base, pool) - 1, False, base.upper_bound
        tallies = runtime.config.reported_tallies
        if tallies is not None:
            mean = self._mean_from_tallies(runtime.config.spec, rt, tallies)
            if mean is not None:
                return 2 * mean - 1, False, base.upper_bound
        return None, False, base.upper_bound

    @staticmethod
    def _mean_from_tallies(
        spec: ContestSpec, rt: AssertionRuntime, tallies: Mapping[str, int]
    ) -> Fraction | None:
        """Assorter mean implied by reported per-candidate tallies (pairwise kinds only)."""
        base = rt.assertion.assorter
        if base.winner is None or base.loser is None:
            return None
        if base.winner in tallies and base.loser in tallies:
            n = spec.upper_bound_cards
            return HALF + Fraction(int(tallies[base.winner]) - int(tallies[base.loser]), 2 * n)
        return None

    def _observed_error_rate(self, rt: AssertionRuntime) -> float:
        if rt.kind is not AuditMethod.COMPARISON or not rt.trace:
            return 0.0
        ctx = rt.assertion.assorter.context
        b_perfect = 1 / (2 - ctx.margin / ctx.upper_bound)
        errors = sum(1 for row in rt.trace if Fraction(row["x"]) < b_perfect)
        return errors / len(rt.trace)

    # --------------------------------------------------------------- entering

    def round_record(self, round_number: int) -> dict:
        for rec in self.rounds:
            if rec["round"] == round_number:
                return rec
        raise AuditError("bad_round", f"round {round_number} does not exist")

    def _resolve(self, runtime: ContestRuntime, unit_id: str, index: int):
        unit = runtime.units.get(unit_id)
        if unit is None:
            raise AuditError("unknown_stratum", f"no sampling unit {unit_id!r}")
        return unit, resolve_draw(unit.manifest, runtime.contest_id, index)

    def stage_interpretations(self, round_number: int, entries: Iterable[Mapping]) -> int:
        """Record operator interpretations for an open round.

        Each entry is {"contest", "index", "record"|null}, plus "stratum" for
        stratified contests. A null record means the card could not be
        produced; phantom indices must be entered as null. Returns the number
        of entries accepted.
        """
        rec = self.round_record(round_number)
        if rec["closed"]:
            raise AuditError("round_closed", f"round {round_number} is closed")
        specs = {cid: rt.config.spec for cid, rt in self.contests.items()}
        accepted = 0
        for entry in entries:
            cid = entry.get("contest")
            if cid not in self.contests:
                raise AuditError("unknown_contest", f"unknown contest {cid!r}")
            unit_id = entry.get("stratum") or SINGLE_UNIT
            contest_draws = rec["draws"].get(cid, {})
            indices = contest_draws.get(unit_id, [])
            index = entry.get("index")
            if index not in indices:
                raise AuditError(
                    "undrawn_index",
                    f"index {index!r} was not drawn for {cid or '?'} this round",
                )
            if any(
                e["contest"] == cid and e["stratum"] == unit_id and e["index"] == index
                for e in rec["interpretations"]
            ):
                raise AuditError(
                    "duplicate_interpretation",
                    f"index {index} of {cid} already has an interpretation this round",
                )
            runtime = self.contests[cid]
            _, resolution = self._resolve(runtime, unit_id, index)
            raw = entry.get("record")
            if resolution.kind is DrawKind.PHANTOM_PAIR and raw is not None:
                raise AuditError(
                    "phantom_record",
                    f"index {index} of {cid} is a phantom; record it as missing (null)",
                )
            if raw is not None:
                raw = dict(raw)
                raw.setdefault("id", f"mvr:{cid}:{unit_id or '-'}:{index}")
                try:
                    parse_vote_record(raw, specs)  # validation only; raw is stored
                except ValueError as exc:
                    raise AuditError("invalid_record", str(exc)) from exc
            rec["interpretations"].append(
                {"contest": cid, "stratum": unit_id, "index": index, "record": raw}
            )
            accepted += 1
        self._log({"type": "interpretations", "round": round_number, "count": accepted})
        self.save()
        return accepted

    # ---------------------------------------------------------------- closing

    def close_round(self, round_number: int, escalate: bool = False) -> dict:
        """Consume the round's interpretations, update every test, and decide.

        Interpretations must cover exactly the round's drawn indices. With
        escalate=True the operator sends every remaining contest to a full
        hand count after the round is applied (the decision is logged, not
        second-guessed).
        """
        rec = self.round_record(round_number)
        if rec["closed"]:
            raise AuditError("round_closed", f"round {round_number} is already closed")
        entered = {
            (e["contest"], e["stratum"], e["index"]): e["record"]
            for e in rec["interpretations"]
        }
        expected = {
            (cid, unit_id, index)
            for cid, units in rec["draws"].items()
            for unit_id, indices in units.items()
            for index in indices
        }
        missing = expected - set(entered)
        if missing:
            raise AuditError(
                "coverage",
                f"{len(missing)} drawn cards lack interpretations, e.g. {sorted(missing)[:3]}",
            )
        specs = {cid: rt.config.spec for cid, rt in self.contests.items()}
        for cid in sorted(rec["draws"]):
            runtime = self.contests[cid]
            for unit_id in sorted(rec["draws"][cid]):
                unit = runtime.units[unit_id]
                for index in rec["draws"][cid][unit_id]:
                    raw = entered[(cid, unit_id, index)]
                    record = None
                    if raw is not None:
                        record = parse_vote_record(raw, specs)
                    self._apply_draw(runtime, unit, round_number, index, record)
        for cid in sorted(rec["draws"]):
            runtime = self.contests[cid]
            for rt in runtime.assertions:
                if rt.kind is AuditMethod.STRATIFIED and rt.status is not AssertionStatus.UNRESOLVED:
                    self._refresh_stratified(runtime, rt, round_number)
        self._update_statuses()
        rec["closed"] = True
        rec["escalated"] = escalate
        self._decide(escalate)
        self._log(
            {
                "type": "close",
                "round": round_number,
                "escalated": escalate,
                "decision": self.decision.value,
            }
        )
        self.save()
        return self.measure_all()

    def execute_round(
        self, round_number: int, interpretations: Iterable[Mapping], escalate: bool = False
    ) -> dict:
        """Stage a full set of interpretations and close the round in one step."""
        self.stage_interpretations(round_number, interpretations)
        return self.close_round(round_number, escalate=escalate)

    def _apply_draw(
        self,
        runtime: ContestRuntime,
        unit: SamplingUnit,
        round_number: int,
        index: int,
        record: VoteRecord | None,
    ):
        cid = runtime.contest_id
        resolution = resolve_draw(unit.manifest, cid, index)
        phantom = resolution.kind is DrawKind.PHANTOM_PAIR
        if not phantom and record is None:
            runtime.diagnostics.append(
                f"round {round_number}: card for index {index} "
                f"({resolution.location_id}) could not be produced; counted worst-case"
            )
        comparison_log: dict[str, dict] = {}
        for rt in runtime.assertions:
            if rt.status is AssertionStatus.UNRESOLVED:
                continue
            if rt.kind is AuditMethod.POLLING:
                x = self._polling_value(rt, record, phantom)
                self._feed(rt, x)
            elif rt.kind is AuditMethod.COMPARISON:
                draw = self._comparison_draw(runtime, unit, rt, resolution, record, phantom)
                omega = overstatement(draw, rt.assertion.assorter.context.upper_bound)
                x = rt.assertion.assorter.assort(draw)
                comparison_log[rt.assertion_id] = {
                    "omega": str(omega),
                    "b": str(x),
                    "card_value": None if draw.card_value is None else str(draw.card_value),
                }
                self._feed(rt, x)
            else:  # stratified: accumulate; combined p computed at round close
                side = rt.strata[unit.unit_id]
                if unit.method is AuditMethod.POLLING:
                    side.values.append(self._polling_value(rt, record, phantom))
                else:
                    draw = self._comparison_draw(runtime, unit, rt, resolution, record, phantom)
                    omega = overstatement(draw, rt.assertion.assorter.upper_bound)
                    side.taus.append(1 - omega / rt.assertion.assorter.upper_bound)
        if comparison_log:
            self._log(
                {
                    "type": "comparison_draw",
                    "round": round_number,
                    "contest": cid,
                    "stratum": unit.unit_id,
                    "index": index,
                    "cvr_id": resolution.cvr_id,
                    "assertions": comparison_log,
                }
            )

    @staticmethod
    def _polling_value(rt: AssertionRuntime, record: VoteRecord | None, phantom: bool) -> Fraction:
        if phantom or record is None:
            return Fraction(0)  # phantom or unfindable card: least favorable value
        return rt.assertion.assorter.assort(record)

    def _comparison_draw(
        self,
        runtime: ContestRuntime,
        unit: SamplingUnit,
        rt: AssertionRuntime,
        resolution,
        record: VoteRecord | None,
        phantom: bool,
    ) -> ComparisonDraw:
        if phantom:
            return ComparisonDraw(phantom_cvr=True)
        base = (
            rt.assertion.assorter.context.base_assorter
            if rt.kind is AuditMethod.COMPARISON
            else rt.assertion.assorter
        )
        cvr = unit.cvrs_by_id[resolution.cvr_id]
        if cvr.redacted and runtime.config.redacted_in_tally:
            if record is None:
                return ComparisonDraw(redacted_included_in_tally=True, card_missing=True)
            if not record.has_contest(runtime.contest_id):
                return ComparisonDraw(redacted_included_in_tally=True, card_lacks_contest=True)
            return ComparisonDraw(
                redacted_included_in_tally=True, card_value=base.assort(record)
            )
        cvr_value = base.assort(cvr)
        if record is None:
            return ComparisonDraw(cvr_value=cvr_value, card_missing=True)
        if not record.has_contest(runtime.contest_id):
            return ComparisonDraw(cvr_value=cvr_value, card_lacks_contest=True)
        return ComparisonDraw(cvr_value=cvr_value, card_value=base.assort(record))

    def _feed(self, rt: AssertionRuntime, x: Fraction):
        p = rt.state.update(x)
        rt.p = float(p)
        rt.p_exact = p if isinstance(p, Fraction) else None
        rt.trace.append(
            {
                "j": rt.state.draws_seen,
                "x": str(x),
                "z_or_y": _stat_str(rt.state.statistic),
                "p": float(p),
            }
        )

    def _refresh_stratified(self, runtime: ContestRuntime, rt: AssertionRuntime, round_number: int):
        spec = runtime.config.spec
        strata_specs = []
        for unit_id, unit in sorted(runtime.units.items()):
            side = rt.strata[unit_id]
            u = rt.assertion.assorter.upper_bound
            if unit.method is AuditMethod.POLLING:
                tester = polling_tester(
                    side.values,
                    stratum_cards=unit.population_size,
                    total_cards=spec.upper_bound_cards,
                    upper_bound=u,
                    test=self.config.test,
                    shift=self.config.shift_factor * u,
                )
            else:
                tester = comparison_tester(
                    side.taus,
                    stratum_cards=unit.population_size,
                    total_cards=spec.upper_bound_cards,
                    reported_stratum_mean=side.reported_mean,
                    upper_bound=u,
                    test=self.config.test,
                    shift=self.config.shift_factor * 2,
                )
            strata_specs.append(
                StratumSpec(stratum_id=unit_id, cards=unit.population_size, tester=tester)
            )
        grid = default_grid(len(strata_specs), self.config.grid_resolution)
        p, split = max_combined_pvalue(strata_specs, grid)
        rt.p = min(rt.p, p)  # max-so-far evidence rule, like the sequential tests
        rt.p_exact = None
        rt.allocation = [str(b) for b in split]
        rt.round_history.append(
            {"round": round_number, "p": p, "allocation": [str(b) for b in split]}
        )

    def _update_statuses(self):
        alpha = self.config.risk_limit
        for runtime in self.contests.values():
            for rt in runtime.assertions:
                if rt.status is AssertionStatus.PENDING and rt.p <= alpha:
                    rt.assertion.status = AssertionStatus.REJECTED_NULL

    def _decide(self, escalate: bool):
        statuses = [self.contests[cid].status() for cid in sorted(self.contests)]
        if statuses and all(s == "confirmed" for s in statuses):
            self.decision = Decision.CERTIFIED
            return
        if escalate:
            self.decision = Decision.FULL_HAND_COUNT
            return
        if not self.config.replacement:
            exhausted = all(
                unit.remaining() == 0
                for cid, runtime in self.contests.items()
                if not self._contest_settled(runtime)
                for unit in runtime.units.values()
            )
            pending = [s for s in statuses if s == "pending"]
            if pending and exhausted:
                self.decision = Decision.FULL_HAND_COUNT
                return
        self.decision = Decision.IN_PROGRESS

    # ------------------------------------------------------------------ views

    def measure_all(self) -> dict:
        """Pure per-contest, per-assertion summary of where the audit stands."""
        contests = {}
        for cid in sorted(self.contests):
            runtime = self.contests[cid]
            assertions = []
            for rt in runtime.assertions:
                entry = {
                    "assertion_id": rt.assertion_id,
                    "description": rt.description,
                    "kind": rt.kind.value,
                    "p": rt.p,
                    "p_exact": None if rt.p_exact is None else str(rt.p_exact),
                    "draws": rt.draws_seen(),
                    "status": rt.status.value,
                }
                if rt.allocation is not None:
                    entry["allocation"] = rt.allocation
                assertions.append(entry)
            measured = max((a["p"] for a in assertions), default=1.0)
            contests[cid] = {
                "method": runtime.config.method.value,
                "status": runtime.status(),
                "measured_risk": measured,
                "assertions": assertions,
                "diagnostics": list(runtime.diagnostics),
                "next_round_estimate": (
                    None if self._contest_settled(runtime) else self._auto_size(runtime)
                ),
            }
        return {
            "decision": self.decision.value,
            "round": self.round,
            "risk_limit": float(self.config.risk_limit),
            "contests": contests,
        }

    def draws_for_round(self, round_number: int) -> list[dict]:
        """The round's retrieval list: location, CVR link, phantom flag, entry status."""
        rec = self.round_record(round_number)
        out = []
        for cid in sorted(rec["draws"]):
            runtime = self.contests[cid]
            for unit_id in sorted(rec["draws"][cid]):
                unit = runtime.units[unit_id]
                for index in rec["draws"][cid][unit_id]:
                    resolution = resolve_draw(unit.manifest, cid, index)
                    entered = any(
                        e["contest"] == cid and e["stratum"] == unit_id and e["index"] == index
                        for e in rec["interpretations"]
                    )
                    out.append(
                        {
                            "contest": cid,
                            "stratum": unit_id,
                            "index": index,
                            "phantom": resolution.kind is DrawKind.PHANTOM_PAIR,
                            "location_id": resolution.location_id,
                            "cvr_id": resolution.cvr_id,
                            "entered": entered,
                        }
                    )
        return out

    # ------------------------------------------------------------ persistence

    def _log(self, event: dict):
        self.log.append(event)

    def _config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.config.to_dict()).encode()).hexdigest()

    def to_state_dict(self) -> dict:
        assertions = []
        for cid in sorted(self.contests):
            runtime = self.contests[cid]
            for rt in runtime.assertions:
                entry: dict = {
                    "id": rt.assertion_id,
                    "contest": cid,
                    "kind": rt.kind.value,
                    "description": rt.description,
                    "status": rt.status.value,
                    "p": rt.p,
                    "p_exact": None if rt.p_exact is None else str(rt.p_exact),
                    "trace": rt.trace,
                    "round_history": rt.round_history,
                }
                if rt.kind is AuditMethod.COMPARISON and rt.status is not AssertionStatus.UNRESOLVED:
                    ctx = rt.assertion.assorter.context
                    entry["reported_mean"] = str(ctx.reported_mean)
                    entry["margin"] = str(ctx.margin)
                    entry["b_upper"] = str(ctx.b_upper)
                if rt.strata:
                    entry["strata"] = {
                        unit_id: {
                            "values": [str(v) for v in side.values],
                            "taus": [str(v) for v in side.taus],
                            "reported_mean": (
                                None if side.reported_mean is None else str(side.reported_mean)
                            ),
                        }
                        for unit_id, side in sorted(rt.strata.items())
                    }
                assertions.append(entry)
        return {
            "format": STATE_FORMAT,
            "config": self.config.to_dict(),
            "source_files": self.source_files,
            "round": self.round,
            "decision": self.decision.value,
            "contests": {
                cid: {
                    "method": runtime.config.method.value,
                    "status": runtime.status(),
                    "diagnostics": list(runtime.diagnostics),
                    "units": {
                        unit_id: {
                            "population_size": unit.population_size,
                            "real_count": unit.real_count,
                            "drawn": list(unit.drawn),
                        }
                        for unit_id, unit in sorted(runtime.units.items())
                    },
                }
                for cid, runtime in sorted(self.contests.items())
            },
            "assertions": assertions,
            "rounds": self.rounds,
            "log": self.log,
            "diagnostics": list(self.diagnostics),
        }

    def save(self):
        if self.state_path is None:
            return
        doc = self.to_state_dict()
        tmp = self.state_path.with_suffix(self.state_path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        os.replace(tmp, self.state_path)

    @classmethod
    def replay(
        cls,
        config: AuditConfig,
        cvrs: Sequence[VoteRecord] | None,
        manifest: CardManifest | None,
        rounds: Sequence[Mapping],
        *,
        base_dir: str | Path = ".",
        state_path: str | Path | None = None,
        source_files: dict | None = None,
    ) -> "Audit":
        """Rebuild an audit from its recorded rounds, verifying every draw.

        The recorded draws must match what the seed regenerates; any mismatch
        means the log and the configuration disagree and the replay fails.
        """
        audit = cls.initialize(
            config,
            cvrs,
            manifest,
            base_dir=base_dir,
            state_path=None,
            source_files=source_files,
        )
        audit.state_path = Path(state_path) if state_path else None
        for rec in rounds:
            counts = {
                cid: {unit_id: len(ix) for unit_id, ix in units.items()}
                for cid, units in rec["draws"].items()
            }
            replayed = audit.draw_round(rec["round"], counts=counts)
            if replayed["draws"] != rec["draws"]:
                raise AuditError(
                    "replay_mismatch",
                    f"round {rec['round']}: recorded draws do not match the seed",
                )
            if rec["interpretations"]:
                audit.stage_interpretations(rec["round"], rec["interpretations"])
            if rec["closed"]:
                audit.close_round(rec["round"], escalate=rec.get("escalated", False))
        audit.save()
        return audit

    @classmethod
    def load(cls, state_path: str | Path, *, base_dir: str | Path | None = None) -> "Audit":
        """Reload an audit by replaying its own state document."""
        state_path = Path(state_path)
        doc = json.loads(state_path.read_text())
        if doc.get("format") != STATE_FORMAT:
            raise AuditError("bad_state", f"unrecognized state format {doc.get('format')!r}")
        config = AuditConfig.from_dict(doc["config"])
        base = Path(base_dir) if base_dir is not None else state_path.parent
        cvrs = None
        manifest = None
        sources = doc.get("source_files", {})

        def read_source(name: str) -> list[str]:
            path = base / sources[name]["path"]
            data = path.read_bytes()
            want = sources[name].get("sha256")
            if want:
                got = hashlib.sha256(data).hexdigest()
                if got != want:
                    raise AuditError(
                        "source_changed",
                        f"{name} file {path} changed since the audit started",
                    )
            return data.decode("utf-8").splitlines()

        if "cvrs" in sources:
            specs = [c.spec for c in config.contests]
            cvrs, _ = load_election(read_source("cvrs"), specs)
        if "manifest" in sources:
            manifest = load_manifest(read_source("manifest"))
        strata_base = base
        if "strata_base" in sources:
            strata_base = base / sources["strata_base"]["path"]
        return cls.replay(
            config,
            cvrs,
            manifest,
            doc["rounds"],
            base_dir=strata_base,
            state_path=state_path,
            source_files=sources,
        )
