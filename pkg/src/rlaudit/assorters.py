"""Assorters and assertion sets for the supported social-choice functions.

An assorter maps each card to a nonnegative rational no larger than its upper
bound; an assertion is the claim that the mean of an assorter over all cards
exceeds 1/2. A contest's reported outcome is correct exactly when all of its
assertions are true, so the audit reduces to testing each assertion's
complementary null (mean <= 1/2).

All values are exact `fractions.Fraction`s; conversion to floating point
happens only inside the statistical tests (documented tolerance 1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .ballots import ContestSpec, ElectionDataError, SocialChoice, VoteRecord

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Assorter:
    """A pure map from vote records to rationals in [0, upper_bound].

    Records that do not contain the contest (including phantom CVRs) assort to
    exactly 1/2. winner/loser identify the pair for pairwise kinds (loser is
    None for supermajority assertions).
    """

    id: str
    contest_id: str
    upper_bound: Fraction
    assort: Callable[[VoteRecord], Fraction]
    description: str = ""
    winner: str | None = None
    loser: str | None = None

    def mean(self, records: Sequence[VoteRecord]) -> Fraction:
        return assorter_mean(self, records)


class AssertionStatus(str, Enum):
    PENDING = "pending"
    REJECTED_NULL = "rejected_null"  # complementary null rejected: assertion confirmed
    UNRESOLVED = "unresolved"


@dataclass
class Assertion:
    """The claim that an assorter's mean over all cards exceeds 1/2."""

    assorter: Assorter
    contest_id: str
    status: AssertionStatus = AssertionStatus.PENDING


class IrvAssertionKind(str, Enum):
    NEB = "NEB"  # winner's first preferences exceed loser's total mentions
    NEN = "NEN"  # winner leads loser once a given set of candidates is eliminated


@dataclass(frozen=True)
class IrvAssertionSpec:
    kind: IrvAssertionKind
    winner: str
    loser: str
    eliminated: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.winner == self.loser:
            raise ValueError("winner and loser must differ")
        if self.kind is IrvAssertionKind.NEN and (
            self.winner in self.eliminated or self.loser in self.eliminated
        ):
            raise ValueError("winner and loser cannot be in the eliminated set")
        if self.kind is IrvAssertionKind.NEB and self.eliminated:
            raise ValueError("NEB assertions take no eliminated set")

    @classmethod
    def from_dict(cls, d: Mapping) -> "IrvAssertionSpec":
        return cls(
            kind=IrvAssertionKind(d["kind"]),
            winner=str(d["winner"]),
            loser=str(d["loser"]),
            eliminated=frozenset(str(c) for c in d.get("eliminated", [])),
        )


def _effective_marks(record: VoteRecord, contest_id: str, max_marks: int | None) -> frozenset[str]:
    """Marks that count as votes; an overvote (more marks than allowed) counts for no one."""
    vote = record.vote(contest_id)
    if vote is None or vote.marks is None:
        return frozenset()
    if max_marks is not None and len(vote.marks) > max_marks:
        return frozenset()
    return vote.marks


def pairwise_assorter(
    contest_id: str, winner: str, loser: str, max_marks: int | None = None
) -> Assorter:
    """Assorter for "winner got more votes than loser".

    Value 1 for a mark for the winner and not the loser, 0 for the loser and
    not the winner, and 1/2 otherwise (overvote, undervote, or the card does
    not contain the contest). max_marks, when given, is the number of marks a
    card may carry before it is an overvote; approval-style contests pass None.
    """
    if winner == loser:
        raise ValueError("winner and loser must differ")

    def assort(record: VoteRecord, w=winner, l=loser) -> Fraction:
        marks = _effective_marks(record, contest_id, max_marks)
        return (Fraction(w in marks) - Fraction(l in marks) + 1) / 2

    return Assorter(
        id=f"{contest_id}:{winner}_v_{loser}",
        contest_id=contest_id,
        upper_bound=Fraction(1),
        assort=assort,
        description=f"{winner} beat {loser} in {contest_id}",
        winner=winner,
        loser=loser,
    )


def plurality_assertions(contest: ContestSpec) -> list[Assertion]:
    """One pairwise assertion per (reported winner, reported loser) pair.

    Covers plurality and approval contests; both use the same assorters, the
    only difference being what counts as an overvote.
    """
    if contest.social_choice not in (SocialChoice.PLURALITY, SocialChoice.APPROVAL):
        raise ValueError(f"pairwise assertion sets need plurality/approval, got {contest.social_choice}")
    max_marks = contest.n_winners if contest.social_choice is SocialChoice.PLURALITY else None
    return [
        Assertion(
            assorter=pairwise_assorter(contest.contest_id, w, l, max_marks=max_marks),
            contest_id=contest.contest_id,
        )
        for w in contest.reported_winners
        for l in contest.reported_losers
    ]


def supermajority_assorter(contest: ContestSpec, winner: str) -> Assorter:
    """Assorter whose mean exceeds 1/2 iff the winner got more than fraction f of the valid votes.

    A valid vote is a mark for exactly one candidate; the assorter assigns
    1/(2f) to a lone mark for the winner, 0 to a lone mark for anyone else,
    and 1/2 otherwise (overvote, undervote, contest absent).
    """
    f = contest.supermajority_fraction
    if f is None or not 0 < f < 1:
        raise ValueError("supermajority fraction must be in (0,1)")
    upper = 1 / (2 * f)

    def assort(record: VoteRecord, w=winner) -> Fraction:
        vote = record.vote(contest.contest_id)
        marks = vote.marks if vote is not None and vote.marks is not None else frozenset()
        if len(marks) != 1:
            return HALF
        return upper if w in marks else Fraction(0)

    return Assorter(
        id=f"{contest.contest_id}:{winner}_super",
        contest_id=contest.contest_id,
        upper_bound=upper,
        assort=assort,
        description=f"{winner} got more than {f} of the valid votes in {contest.contest_id}",
        winner=winner,
    )


def supermajority_assertions(contest: ContestSpec) -> list[Assertion]:
    """One assertion per reported winner (at most K in all, never pairwise)."""
    if contest.social_choice is not SocialChoice.SUPERMAJORITY:
        raise ValueError("supermajority assertions need a supermajority contest")
    return [
        Assertion(
            assorter=supermajority_assorter(contest, w), contest_id=contest.contest_id
        )
        for w in contest.reported_winners
    ]


def weighted_assorter(
    contest_id: str, winner: str, loser: str, score_upper_bound: Fraction
) -> Assorter:
    """Affine transform of a score difference into [0, 1].

    Value (s_winner - s_loser + s_max) / (2 s_max); the mean exceeds 1/2 iff
    the winner's score total beats the loser's. Scores need not be integers.
    A card without the contest scores 0 for both, so it assorts to 1/2.
    """
    s_plus = Fraction(score_upper_bound)
    if s_plus <= 0:
        raise ValueError("score upper bound must be positive")

    def assort(record: VoteRecord, w=winner, l=loser) -> Fraction:
        vote = record.vote(contest_id)
        scores = vote.scores if vote is not None and vote.scores is not None else {}
        sw = scores.get(w, Fraction(0))
        sl = scores.get(l, Fraction(0))
        if not (0 <= sw <= s_plus and 0 <= sl <= s_plus):
            raise ValueError(f"scores outside [0, {s_plus}] on record {record.record_id!r}")
        return (sw - sl + s_plus) / (2 * s_plus)

    return Assorter(
        id=f"{contest_id}:{winner}_v_{loser}_scored",
        contest_id=contest_id,
        upper_bound=Fraction(1),
        assort=assort,
        description=f"{winner} outscored {loser} in {contest_id}",
        winner=winner,
        loser=loser,
    )


def weighted_assertions(contest: ContestSpec) -> list[Assertion]:
    if contest.social_choice is not SocialChoice.WEIGHTED:
        raise ValueError("weighted assertions need a weighted contest")
    return [
        Assertion(
            assorter=weighted_assorter(
                contest.contest_id, w, l, contest.score_upper_bound
            ),
            contest_id=contest.contest_id,
        )
        for w in contest.reported_winners
        for l in contest.reported_losers
    ]


def _top_of_remaining(ranks: Mapping[str, int], remaining: frozenset[str]) -> str | None:
    """The still-standing candidate this card currently counts for, if any."""
    best = None
    best_rank = None
    for cand, rank in ranks.items():
        if cand in remaining and (best_rank is None or rank < best_rank):
            best, best_rank = cand, rank
    return best


def irv_assorter(contest_id: str, spec: IrvAssertionSpec, candidates: Sequence[str]) -> Assorter:
    """Assorter for one ranked-choice assertion.

    NEB: a card counts for the winner if it ranks the winner first, and for
    the loser if it mentions the loser at all; a card doing both cancels to
    1/2, matching "first preferences for the winner exceed total mentions of
    the loser".

    NEN: with the given candidates eliminated, a card counts for whichever of
    winner/loser it currently ranks highest among the remaining candidates.
    """
    if spec.kind is IrvAssertionKind.NEB:

        def assort(record: VoteRecord, s=spec) -> Fraction:
            vote = record.vote(contest_id)
            ranks = vote.ranks if vote is not None and vote.ranks is not None else {}
            for_winner = ranks.get(s.winner) == 1
            for_loser = s.loser in ranks
            return (Fraction(for_winner) - Fraction(for_loser) + 1) / 2

        label = f"{spec.winner}'s first preferences exceed {spec.loser}'s mentions"
    else:
        remaining = frozenset(candidates) - spec.eliminated

        def assort(record: VoteRecord, s=spec, remaining=remaining) -> Fraction:
            vote = record.vote(contest_id)
            ranks = vote.ranks if vote is not None and vote.ranks is not None else {}
            top = _top_of_remaining(ranks, remaining)
            return (Fraction(top == s.winner) - Fraction(top == s.loser) + 1) / 2

        elim = ",".join(sorted(spec.eliminated)) or "-"
        label = f"{spec.winner} beats {spec.loser} with [{elim}] eliminated"

    suffix = "" if spec.kind is IrvAssertionKind.NEB else ":" + ",".join(sorted(spec.eliminated))
    return Assorter(
        id=f"{contest_id}:{spec.kind.value}:{spec.winner}_v_{spec.loser}{suffix}",
        contest_id=contest_id,
        upper_bound=Fraction(1),
        assort=assort,
        description=f"{label} in {contest_id}",
    )


def irv_assertions(contest: ContestSpec, specs: Iterable[IrvAssertionSpec]) -> list[Assertion]:
    """Assertions from an externally supplied ranked-choice assertion set.

    The set is taken as given: if it is sufficient and every assertion holds,
    the reported winner won. This module never derives such sets itself.
    """
    if contest.social_choice is not SocialChoice.IRV:
        raise ValueError("ranked-choice assertions need an IRV contest")
    out = []
    for spec in specs:
        for cand in (spec.winner, spec.loser, *spec.eliminated):
            if cand not in contest.candidates:
                raise ElectionDataError(
                    f"contest {contest.contest_id}: assertion references unknown candidate {cand!r}"
                )
        out.append(
            Assertion(
                assorter=irv_assorter(contest.contest_id, spec, contest.candidates),
                contest_id=contest.contest_id,
            )
        )
    return out


def assertions_for_contest(
    contest: ContestSpec, irv_specs: Iterable[IrvAssertionSpec] | None = None
) -> list[Assertion]:
    """The full assertion set implying the contest's reported outcome."""
    if contest.social_choice in (SocialChoice.PLURALITY, SocialChoice.APPROVAL):
        return plurality_assertions(contest)
    if contest.social_choice is SocialChoice.SUPERMAJORITY:
        return supermajority_assertions(contest)
    if contest.social_choice is SocialChoice.WEIGHTED:
        return weighted_assertions(contest)
    if contest.social_choice is SocialChoice.IRV:
        if not irv_specs:
            raise ElectionDataError(
                f"contest {contest.contest_id}: ranked-choice audits need an assertion file"
            )
        return irv_assertions(contest, irv_specs)
    raise ValueError(f"unsupported social choice {contest.social_choice}")


def assorter_mean(assorter: Assorter, records: Sequence[VoteRecord]) -> Fraction:
    """Exact mean of the assorter over a full card list (phantoms included)."""
    if not records:
        raise ValueError("cannot average an assorter over zero cards")
    total = Fraction(0)
    for r in records:
        value = assorter.assort(r)
        if not 0 <= value <= assorter.upper_bound:
            raise ValueError(
                f"assorter {assorter.id} produced {value} outside [0, {assorter.upper_bound}]"
            )
        total += value
    return total / len(records)
