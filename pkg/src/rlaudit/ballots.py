"""Contests, cast-vote records, card manifests, and phantom accounting.

Everything here is immutable after construction; ingestion is single-threaded
per stream, but the resulting objects are safe to share across threads.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence


class SocialChoice(str, Enum):
    PLURALITY = "plurality"
    APPROVAL = "approval"
    SUPERMAJORITY = "supermajority"
    WEIGHTED = "weighted"
    IRV = "irv"


class ElectionDataError(ValueError):
    """Fatal problem with an input file: malformed stream, duplicate ids, bad config."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"line {position}: {message}"
        super().__init__(message)


def as_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, or string ("3/4" or "0.75")."""
    if isinstance(value, bool):
        raise ValueError(f"cannot interpret {value!r} as a number")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        # repr round-trips the shortest decimal, so this keeps decimal semantics
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"cannot interpret {value!r} as a number")


@dataclass(frozen=True)
class ContestSpec:
    """Static description of one contest under audit.

    upper_bound_cards is the trusted upper bound on the number of cards that
    contain the contest; it may exceed the number of CVRs, in which case the
    difference is made up with phantoms.
    """

    contest_id: str
    social_choice: SocialChoice
    candidates: tuple[str, ...]
    n_winners: int
    reported_winners: tuple[str, ...]
    upper_bound_cards: int
    supermajority_fraction: Fraction | None = None
    score_upper_bound: Fraction | None = None

    def __post_init__(self):
        if len(set(self.candidates)) != len(self.candidates):
            raise ElectionDataError(f"contest {self.contest_id}: duplicate candidates")
        if not 1 <= self.n_winners < len(self.candidates):
            raise ElectionDataError(
                f"contest {self.contest_id}: need 1 <= winners < candidates, "
                f"got {self.n_winners} of {len(self.candidates)}"
            )
        if len(set(self.reported_winners)) != self.n_winners:
            raise ElectionDataError(
                f"contest {self.contest_id}: expected {self.n_winners} distinct reported winners"
            )
        if not set(self.reported_winners) <= set(self.candidates):
            raise ElectionDataError(f"contest {self.contest_id}: unknown reported winner")
        if self.upper_bound_cards < 1:
            raise ElectionDataError(f"contest {self.contest_id}: card upper bound must be >= 1")
        if self.social_choice is SocialChoice.SUPERMAJORITY:
            f = self.supermajority_fraction
            if f is None or not 0 < f < 1:
                raise ElectionDataError(
                    f"contest {self.contest_id}: supermajority fraction must be in (0,1)"
                )
        elif self.supermajority_fraction is not None:
            raise ElectionDataError(
                f"contest {self.contest_id}: supermajority fraction only valid for supermajority"
            )
        if self.social_choice is SocialChoice.WEIGHTED:
            if self.score_upper_bound is None or self.score_upper_bound <= 0:
                raise ElectionDataError(
                    f"contest {self.contest_id}: weighted contests need a positive score upper bound"
                )
        elif self.score_upper_bound is not None:
            raise ElectionDataError(
                f"contest {self.contest_id}: score upper bound only valid for weighted contests"
            )

    @property
    def reported_losers(self) -> tuple[str, ...]:
        return tuple(c for c in self.candidates if c not in self.reported_winners)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ContestSpec":
        try:
            social_choice = SocialChoice(str(d["social_choice"]).lower())
        except ValueError as exc:
            raise ElectionDataError(f"unknown social choice {d.get('social_choice')!r}") from exc
        except KeyError as exc:
            raise ElectionDataError("contest config missing social_choice") from exc
        f = d.get("supermajority_fraction")
        s_plus = d.get("score_upper_bound")
        return cls(
            contest_id=str(d["contest_id"]),
            social_choice=social_choice,
            candidates=tuple(str(c) for c in d["candidates"]),
            n_winners=int(d.get("n_winners", 1)),
            reported_winners=tuple(str(w) for w in d["reported_winners"]),
            upper_bound_cards=int(d["upper_bound_cards"]),
            supermajority_fraction=None if f is None else as_fraction(f),
            score_upper_bound=None if s_plus is None else as_fraction(s_plus),
        )


@dataclass(frozen=True)
class ContestVote:
    """A single card's marks in one contest: exactly one of marks/scores/ranks."""

    marks: frozenset[str] | None = None
    scores: Mapping[str, Fraction] | None = None
    ranks: Mapping[str, int] | None = None

    def __post_init__(self):
        populated = sum(x is not None for x in (self.marks, self.scores, self.ranks))
        if populated != 1:
            raise ValueError("a contest vote carries exactly one of marks, scores, or ranks")
        if self.ranks is not None:
            ranks = list(self.ranks.values())
            if any(not isinstance(r, int) or r < 1 for r in ranks):
                raise ValueError("ranks must be positive integers")
            if len(set(ranks)) != len(ranks):
                raise ValueError("duplicate ranks")
        if self.scores is not None and any(s < 0 for s in self.scores.values()):
            raise ValueError("scores must be nonnegative")


@dataclass(frozen=True)
class VoteRecord:
    """One card's (or CVR's) marks per contest.

    Phantom records carry no votes; every assorter assigns them the neutral
    value 1/2 because they contain no contest.
    """

    record_id: str
    contests: Mapping[str, ContestVote] = field(default_factory=dict)
    phantom: bool = False
    redacted: bool = False

    def has_contest(self, contest_id: str) -> bool:
        return contest_id in self.contests

    def vote(self, contest_id: str) -> ContestVote | None:
        return self.contests.get(contest_id)


PHANTOM = VoteRecord(record_id="", contests={}, phantom=True)


class PhantomKind(str, Enum):
    PHANTOM_CVR = "phantom_cvr"
    PHANTOM_CARD = "phantom_card"


@dataclass(frozen=True)
class PhantomRecord:
    """Placeholder for an unaccounted-for CVR or card in one contest."""

    kind: PhantomKind
    contest_id: str


@dataclass(frozen=True)
class Diagnostic:
    record_id: str
    position: int
    message: str


def _validate_vote(contest: ContestSpec, payload: Mapping) -> ContestVote:
    """Build a ContestVote from a wire payload, enforcing the contest's shape."""
    keys = set(payload.keys())
    if contest.social_choice in (
        SocialChoice.PLURALITY,
        SocialChoice.APPROVAL,
        SocialChoice.SUPERMAJORITY,
    ):
        if keys != {"marks"}:
            raise ValueError(f"{contest.social_choice.value} contest takes marks, got {sorted(keys)}")
        marks = frozenset(str(m) for m in payload["marks"])
        unknown = marks - set(contest.candidates)
        if unknown:
            raise ValueError(f"marks for unknown candidates {sorted(unknown)}")
        return ContestVote(marks=marks)
    if contest.social_choice is SocialChoice.WEIGHTED:
        if keys != {"scores"}:
            raise ValueError(f"weighted contest takes scores, got {sorted(keys)}")
        scores = {str(c): as_fraction(s) for c, s in payload["scores"].items()}
        unknown = set(scores) - set(contest.candidates)
        if unknown:
            raise ValueError(f"scores for unknown candidates {sorted(unknown)}")
        too_big = [c for c, s in scores.items() if not 0 <= s <= contest.score_upper_bound]
        if too_big:
            raise ValueError(f"scores out of [0, {contest.score_upper_bound}] for {sorted(too_big)}")
        return ContestVote(scores=scores)
    if contest.social_choice is SocialChoice.IRV:
        if keys != {"ranks"}:
            raise ValueError(f"ranked contest takes ranks, got {sorted(keys)}")
        ranks = {str(c): r for c, r in payload["ranks"].items()}
        unknown = set(ranks) - set(contest.candidates)
        if unknown:
            raise ValueError(f"ranks for unknown candidates {sorted(unknown)}")
        return ContestVote(ranks=ranks)
    raise ValueError(f"unsupported social choice {contest.social_choice}")


def parse_vote_record(d: Mapping, contests: Mapping[str, ContestSpec]) -> VoteRecord:
    """Parse one wire-format record dict; raises ValueError on any invariant violation."""
    record_id = d.get("id")
    if not isinstance(record_id, str) or not record_id:
        raise ValueError("record id must be a nonempty string")
    votes: dict[str, ContestVote] = {}
    for contest_id, payload in (d.get("contests") or {}).items():
        spec = contests.get(contest_id)
        if spec is None:
            raise ValueError(f"unknown contest {contest_id!r}")
        if not isinstance(payload, Mapping):
            raise ValueError(f"contest {contest_id}: payload must be an object")
        votes[contest_id] = _validate_vote(spec, payload)
    return VoteRecord(
        record_id=record_id, contests=votes, redacted=bool(d.get("redacted", False))
    )


def load_election(
    cvr_stream: Iterable[str] | io.TextIOBase,
    contests: Sequence[ContestSpec],
) -> tuple[list[VoteRecord], list[Diagnostic]]:
    """Read a JSON-lines CVR stream and validate every record.

    Records that violate their contest's invariants (duplicate ranks, scores out
    of range, marks for unknown candidates, ...) are excluded and reported in
    the diagnostics. Malformed JSON and duplicate record ids are fatal.

    Returns
    -------
    records : list of VoteRecord
        the valid records, in stream order
    diagnostics : list of Diagnostic
        one entry per excluded record
    """
    by_id = {c.contest_id: c for c in contests}
    records: list[VoteRecord] = []
    diagnostics: list[Diagnostic] = []
    seen: set[str] = set()
    for position, line in enumerate(cvr_stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line, parse_float=Fraction)
        except json.JSONDecodeError as exc:
            raise ElectionDataError(f"malformed record: {exc.msg}", position) from exc
        try:
            record = parse_vote_record(raw, by_id)
        except ValueError as exc:
            diagnostics.append(Diagnostic(str(raw.get("id", "?")), position, str(exc)))
            continue
        if record.record_id in seen:
            raise ElectionDataError(f"duplicate record id {record.record_id!r}", position)
        seen.add(record.record_id)
        records.append(record)
    return records, diagnostics


@dataclass(frozen=True)
class ManifestEntry:
    location_id: str
    cvr_id: str | None = None
    styles: frozenset[str] | None = None  # None: style unknown, eligible for every contest
    phantom: bool = False

    def covers(self, contest_id: str) -> bool:
        return self.styles is None or contest_id in self.styles


@dataclass(frozen=True)
class CardManifest:
    """Ordered list of physical-card locations, optionally linked to CVRs.

    File order is frozen at load time; it defines the index space used for
    sampling, so it must never be reordered once an audit has started.
    """

    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        linked = [e.cvr_id for e in self.entries if e.cvr_id is not None]
        if len(set(linked)) != len(linked):
            raise ElectionDataError("manifest links the same CVR id from two entries")

    def entries_for(self, contest_id: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.covers(contest_id))

    def contest_size(self, contest_id: str) -> int:
        return len(self.entries_for(contest_id))


def load_manifest(lines: Iterable[str] | io.TextIOBase) -> CardManifest:
    """Read the manifest CSV (header: location_id,cvr_id,styles)."""
    reader = csv.DictReader(lines)
    required = {"location_id", "cvr_id", "styles"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise ElectionDataError(
            f"manifest header must include {sorted(required)}, got {reader.fieldnames}"
        )
    entries = []
    for row in reader:
        styles_raw = (row.get("styles") or "").strip()
        styles = frozenset(s.strip() for s in styles_raw.split(";") if s.strip()) or None
        cvr_id = (row.get("cvr_id") or "").strip() or None
        location = (row.get("location_id") or "").strip()
        if not location:
            raise ElectionDataError(f"manifest row {reader.line_num}: empty location_id")
        entries.append(ManifestEntry(location_id=location, cvr_id=cvr_id, styles=styles))
    return CardManifest(entries=tuple(entries))


def pad_with_phantoms(manifest: CardManifest, contest_id: str, size: int) -> CardManifest:
    """Append phantom card/CVR pairs until the contest has exactly `size` entries."""
    have = manifest.contest_size(contest_id)
    if have > size:
        raise ElectionDataError(
            f"contest {contest_id}: {have} cards on the manifest exceed the "
            f"declared upper bound {size}; the bound is impossible"
        )
    if have == size:
        return manifest
    phantoms = tuple(
        ManifestEntry(
            location_id=f"phantom:{contest_id}:{k}",
            cvr_id=None,
            styles=frozenset({contest_id}),
            phantom=True,
        )
        for k in range(1, size - have + 1)
    )
    return CardManifest(entries=manifest.entries + phantoms)


def add_phantoms(manifest: CardManifest, contest: ContestSpec) -> CardManifest:
    """Pad the manifest with phantom card/CVR pairs up to the contest's card bound.

    If the contest's upper bound exceeds the number of manifest entries that
    could contain the contest, the difference is appended as phantom entries
    (each standing for a phantom CVR paired with a phantom card). Original
    entries and their order are preserved.
    """
    return pad_with_phantoms(manifest, contest.contest_id, contest.upper_bound_cards)


class DrawKind(str, Enum):
    REAL_CARD = "real_card"
    PHANTOM_PAIR = "phantom_pair"


@dataclass(frozen=True)
class DrawResolution:
    """What a sampled index points at: a retrievable card or a phantom pair."""

    kind: DrawKind
    location_id: str | None = None
    cvr_id: str | None = None
    phantom: PhantomRecord | None = None


def resolve_draw(manifest: CardManifest, contest_id: str, index: int) -> DrawResolution:
    """Map a sampled integer in 1..N to the card (or phantom pair) it selects.

    Pure function of (manifest, contest, index): real entries occupy the low
    indices in manifest order, phantom entries the high ones.
    """
    entries = manifest.entries_for(contest_id)
    if not 1 <= index <= len(entries):
        raise IndexError(f"draw index {index} outside 1..{len(entries)} for contest {contest_id}")
    entry = entries[index - 1]
    if entry.phantom:
        return DrawResolution(
            kind=DrawKind.PHANTOM_PAIR,
            phantom=PhantomRecord(kind=PhantomKind.PHANTOM_CARD, contest_id=contest_id),
        )
    return DrawResolution(
        kind=DrawKind.REAL_CARD, location_id=entry.location_id, cvr_id=entry.cvr_id
    )
