from fractions import Fraction as F

import numpy as np
import pytest

from rlaudit.assorters import Assertion, AssertionStatus, pairwise_assorter, assorter_mean
from rlaudit.ballots import ContestVote, VoteRecord
from rlaudit.comparison import (
    ComparisonContext,
    ComparisonDraw,
    b_assorter,
    comparison_audit_assertion,
    overstatement,
)
from rlaudit.nonneg_mean import SequentialSample, kk_pvalue


def rec(rid, *marks):
    return VoteRecord(record_id=rid, contests={"c1": ContestVote(marks=frozenset(marks))})


PHANTOM_REC = VoteRecord(record_id="ph", contests={}, phantom=True)


def context(margin=F(1, 5), u=F(1)):
    base = pairwise_assorter("c1", "w", "l")
    return ComparisonContext(base_assorter=base, reported_mean=(1 + margin) / 2)


def test_overstatement_basic():
    u = F(1)
    assert overstatement(ComparisonDraw(cvr_value=F(1), card_value=F(1)), u) == 0
    assert overstatement(ComparisonDraw(cvr_value=F(1), card_value=F(0)), u) == 1
    assert overstatement(ComparisonDraw(cvr_value=F(0), card_value=F(1)), u) == -1
    assert overstatement(ComparisonDraw(phantom_cvr=True), u) == F(1, 2)
    assert overstatement(ComparisonDraw(cvr_value=F(1), card_lacks_contest=True), u) == 1
    assert overstatement(ComparisonDraw(cvr_value=F(3, 4), card_missing=True), u) == F(3, 4)
    # redacted CVR kept in the tally counts u when drawn
    assert overstatement(
        ComparisonDraw(redacted_included_in_tally=True, card_value=F(1)), F(2)
    ) == 1


def test_overstatement_flag_validation():
    with pytest.raises(ValueError):
        overstatement(ComparisonDraw(phantom_cvr=True, card_value=F(1)), F(1))
    with pytest.raises(ValueError):
        overstatement(ComparisonDraw(cvr_value=F(1), card_missing=True, card_value=F(0)), F(1))
    with pytest.raises(ValueError):
        overstatement(ComparisonDraw(cvr_value=F(1)), F(1))
    with pytest.raises(ValueError):
        overstatement(ComparisonDraw(cvr_value=F(2), card_value=F(0)), F(1))


def test_b_assorter_values():
    ctx = context(margin=F(1, 5))
    perfect = b_assorter(ctx, ComparisonDraw(cvr_value=F(1), card_value=F(1)))
    assert perfect == F(5, 9)  # 1/1.8
    assert b_assorter(ctx, ComparisonDraw(cvr_value=F(1), card_value=F(0))) == 0  # omega = u
    phantom = b_assorter(ctx, ComparisonDraw(phantom_cvr=True))
    assert phantom == F(5, 18)  # (1 - 1/2) / 1.8
    assert ctx.b_upper == F(10, 9)
    assert ctx.margin == F(1, 5)


def test_context_requires_positive_margin():
    base = pairwise_assorter("c1", "w", "l")
    with pytest.raises(ValueError):
        ComparisonContext(base_assorter=base, reported_mean=F(1, 2))


def test_comparison_audit_assertion():
    base = Assertion(assorter=pairwise_assorter("c1", "w", "l"), contest_id="c1")
    cvrs = [rec(f"w{k}", "w") for k in range(60)] + [rec(f"l{k}", "l") for k in range(40)]
    comp = comparison_audit_assertion(base, cvrs)
    assert comp.status is AssertionStatus.PENDING
    ctx = comp.assorter.context
    assert ctx.margin == F(1, 5)
    # error-free draws sit at a constant value above 1/2
    value = comp.assorter.assort(ComparisonDraw(cvr_value=F(1), card_value=F(1)))
    assert value == F(5, 9) > F(1, 2)
    # reported mean at exactly 1/2: nothing to audit, unresolved
    tied = [rec(f"w{k}", "w") for k in range(50)] + [rec(f"l{k}", "l") for k in range(50)]
    assert comparison_audit_assertion(base, tied).status is AssertionStatus.UNRESOLVED


def random_pairs(rng, n_cards):
    """Random (card, cvr) pairs over a two-candidate contest with errors."""
    cards = []
    cvrs = []
    for i in range(n_cards):
        truth = rng.choice(["w", "l", "none"], p=[0.45, 0.35, 0.2])
        card = rec(f"b{i}") if truth == "none" else rec(f"b{i}", truth)
        claimed = truth if rng.random() > 0.08 else rng.choice(["w", "l", "none"])
        cvr = rec(f"c{i}") if claimed == "none" else rec(f"c{i}", claimed)
        cards.append(card)
        cvrs.append(cvr)
    return cards, cvrs


def test_algebraic_equivalence_fuzz():
    # mean of B > 1/2 exactly when the cards' assorter mean > 1/2
    rng = np.random.default_rng(5150)
    base = pairwise_assorter("c1", "w", "l")
    checked = 0
    while checked < 200:
        cards, cvrs = random_pairs(rng, int(rng.integers(4, 120)))
        if rng.random() < 0.3:  # phantoms on both sides now and then
            cards = cards + [PHANTOM_REC]
            cvrs = cvrs + [PHANTOM_REC]
        mean_c = assorter_mean(base, cvrs)
        if mean_c <= F(1, 2):
            continue
        ctx = ComparisonContext(base_assorter=base, reported_mean=mean_c)
        b_values = [
            b_assorter(
                ctx,
                ComparisonDraw(cvr_value=base.assort(c), card_value=base.assort(b))
                if not (b.phantom and c.phantom)
                else ComparisonDraw(phantom_cvr=True),
            )
            for b, c in zip(cards, cvrs)
        ]
        b_mean = sum(b_values, F(0)) / len(b_values)
        card_mean_worst = sum(
            (F(0) if b.phantom else base.assort(b) for b in cards), F(0)
        ) / len(cards)
        assert (b_mean > F(1, 2)) == (card_mean_worst > F(1, 2))
        checked += 1


def test_b_nonnegative_all_branches():
    from rlaudit.assorters import supermajority_assorter
    from rlaudit.ballots import ContestSpec, SocialChoice

    super_spec = ContestSpec(
        contest_id="c1",
        social_choice=SocialChoice.SUPERMAJORITY,
        candidates=("w", "l"),
        n_winners=1,
        reported_winners=("w",),
        upper_bound_cards=10,
        supermajority_fraction=F(3, 20),
    )
    bases = [
        pairwise_assorter("c1", "w", "l"),  # u = 1
        supermajority_assorter(super_spec, "w"),  # u = 10/3
    ]
    rng = np.random.default_rng(61)
    for _ in range(400):
        base = bases[int(rng.integers(0, 2))]
        u = base.upper_bound
        mean = F(1, 2) + F(int(rng.integers(1, 9)), 16) * (u - F(1, 2))
        ctx = ComparisonContext(base_assorter=base, reported_mean=mean)
        value_grid = [F(k) * u / 4 for k in range(5)]
        branch = int(rng.integers(0, 5))
        cvr_value = value_grid[int(rng.integers(0, 5))]
        if branch == 0:
            draw = ComparisonDraw(phantom_cvr=True)
        elif branch == 1:
            draw = ComparisonDraw(cvr_value=cvr_value, card_missing=True)
        elif branch == 2:
            draw = ComparisonDraw(cvr_value=cvr_value, card_lacks_contest=True)
        elif branch == 3:
            draw = ComparisonDraw(redacted_included_in_tally=True, card_missing=True)
        else:
            draw = ComparisonDraw(
                cvr_value=cvr_value, card_value=value_grid[int(rng.integers(0, 5))]
            )
        value = b_assorter(ctx, draw)
        assert 0 <= value <= ctx.b_upper


def test_two_pvalue_routes_agree():
    # the transform is a data map: testing B values is just a polling test on them
    ctx = context(margin=F(1, 5))
    draws = [
        ComparisonDraw(cvr_value=F(1), card_value=F(1)),
        ComparisonDraw(phantom_cvr=True),
        ComparisonDraw(cvr_value=F(1), card_value=F(1, 2)),
        ComparisonDraw(cvr_value=F(1), card_value=F(1)),
    ]
    b_values = [b_assorter(ctx, d) for d in draws]
    sample = SequentialSample.of(b_values, 100, F(1, 2))
    as_polling = kk_pvalue(sample)
    again = kk_pvalue(SequentialSample.of(list(b_values), 100, F(1, 2)))
    assert as_polling == again
