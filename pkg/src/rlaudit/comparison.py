"""Ballot-comparison transform: from overstatement errors to an assorter.

For an assorter A with upper bound u and reported margin v = 2*mean(A over
CVRs) - 1 > 0, each audited card contributes

    B = (1 - omega/u) / (2 - v/u),   omega = A(cvr) - A(card),

and the original assertion "mean of A over the cards > 1/2" holds iff
"mean of B > 1/2". B is itself a nonnegative assorter, so the same sequential
tests used for ballot polling apply to the B values unchanged.

Missing and phantom material is substituted in the least favorable way
(phantom pair: CVR counts 1/2, card counts 0; a located card that lacks the
contest its CVR claimed counts 0; a redacted CVR kept in the tally counts u
when drawn), which can only enlarge omega and therefore never understates the
risk.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

from .assorters import Assertion, AssertionStatus, Assorter, assorter_mean
from .ballots import VoteRecord

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class ComparisonContext:
    """Frozen per-assertion facts a comparison audit is conducted against.

    reported_mean is the assorter mean over all N CVRs, phantoms included;
    it and the margin derived from it are fixed before any card is drawn and
    never recomputed mid-audit.
    """

    base_assorter: Assorter
    reported_mean: Fraction

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError(
                f"{self.base_assorter.id}: reported assorter mean {self.reported_mean} "
                "does not exceed 1/2; the CVRs do not support the assertion"
            )

    @property
    def margin(self) -> Fraction:
        return 2 * self.reported_mean - 1

    @property
    def upper_bound(self) -> Fraction:
        return self.base_assorter.upper_bound

    @property
    def b_upper(self) -> Fraction:
        """Largest value the comparison assorter can take.

        omega >= A(cvr) - u >= -u, so 1 - omega/u <= 2 and B <= 2/(2 - v/u).
        """
        u = self.upper_bound
        return 2 / (2 - self.margin / u)


@dataclass(frozen=True)
class ComparisonDraw:
    """One sampled card next to its CVR, with the worst-case substitution flags."""

    cvr_value: Fraction | None = None
    card_value: Fraction | None = None
    phantom_cvr: bool = False
    card_missing: bool = False
    card_lacks_contest: bool = False
    redacted_included_in_tally: bool = False


def overstatement(draw: ComparisonDraw, upper_bound: Fraction) -> Fraction:
    """Overstatement error omega = A(cvr) - A(card), after worst-case substitutions.

    Substitutions: a phantom pair counts as CVR 1/2 and card 0; a card that
    cannot be found, or that lacks the contest its CVR claims, counts 0; a
    redacted CVR that was included in the reported tally counts u when drawn.
    """
    u = Fraction(upper_bound)
    if draw.phantom_cvr:
        if draw.cvr_value is not None or draw.card_value is not None:
            raise ValueError("phantom draws carry no CVR or card values")
        cvr_value = HALF
        card_value = Fraction(0)
    else:
        if draw.redacted_included_in_tally:
            cvr_value = u
        elif draw.cvr_value is not None:
            cvr_value = Fraction(draw.cvr_value)
        else:
            raise ValueError("non-phantom draw needs a CVR value")
        if draw.card_missing or draw.card_lacks_contest:
            if draw.card_value is not None:
                raise ValueError("missing/contest-less cards carry no card value")
            card_value = Fraction(0)
        elif draw.card_value is not None:
            card_value = Fraction(draw.card_value)
        else:
            raise ValueError("draw needs a card value or a missing/lacks-contest flag")
    if not 0 <= cvr_value <= u:
        raise ValueError(f"CVR value {cvr_value} outside [0, {u}]")
    if not 0 <= card_value <= u:
        raise ValueError(f"card value {card_value} outside [0, {u}]")
    return cvr_value - card_value


def b_assorter(ctx: ComparisonContext, draw: ComparisonDraw) -> Fraction:
    """Comparison-assorter value B = (1 - omega/u) / (2 - v/u) for one draw."""
    u = ctx.upper_bound
    omega = overstatement(draw, u)
    value = (1 - omega / u) / (2 - ctx.margin / u)
    if value < 0:
        raise ValueError(f"comparison assorter went negative ({value}); omega={omega} u={u}")
    return value


@dataclass(frozen=True)
class BAssorter:
    """The comparison transform packaged as an assorter over draws."""

    context: ComparisonContext

    @property
    def id(self) -> str:
        return self.context.base_assorter.id + ":comparison"

    @property
    def contest_id(self) -> str:
        return self.context.base_assorter.contest_id

    @property
    def upper_bound(self) -> Fraction:
        return self.context.b_upper

    @property
    def description(self) -> str:
        return self.context.base_assorter.description + " (comparison)"

    def assort(self, draw: ComparisonDraw) -> Fraction:
        return b_assorter(self.context, draw)


def comparison_audit_assertion(base: Assertion, cvrs: Sequence[VoteRecord]) -> Assertion:
    """Rewrite a polling assertion as the equivalent comparison assertion.

    cvrs must be the full reported list for the contest, phantom CVRs included
    (phantoms assort to 1/2 automatically since they contain no contest). If
    the CVRs themselves do not support the assertion (reported mean <= 1/2)
    there is nothing to audit against and the assertion comes back UNRESOLVED.
    """
    reported_mean = assorter_mean(base.assorter, cvrs)
    if reported_mean <= HALF:
        return replace(base, status=AssertionStatus.UNRESOLVED)
    ctx = ComparisonContext(base_assorter=base.assorter, reported_mean=reported_mean)
    return Assertion(
        assorter=BAssorter(context=ctx),  # type: ignore[arg-type]  # duck-typed assorter
        contest_id=base.contest_id,
        status=base.status,
    )
