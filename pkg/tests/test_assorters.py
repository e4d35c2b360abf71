from fractions import Fraction as F

import numpy as np
import pytest

from rlaudit.assorters import (
    AssertionStatus,
    IrvAssertionKind,
    IrvAssertionSpec,
    assertions_for_contest,
    assorter_mean,
    irv_assorter,
    pairwise_assorter,
    plurality_assertions,
    supermajority_assorter,
    weighted_assorter,
)
from rlaudit.ballots import ContestSpec, ContestVote, SocialChoice, VoteRecord

import oracles


def rec(rid="r", marks=None, scores=None, ranks=None, contest="c1"):
    if marks is None and scores is None and ranks is None:
        return VoteRecord(record_id=rid, contests={})
    vote = ContestVote(
        marks=None if marks is None else frozenset(marks),
        scores=scores,
        ranks=ranks,
    )
    return VoteRecord(record_id=rid, contests={contest: vote})


def test_pairwise_values():
    a = pairwise_assorter("c1", "Alice", "Bob")
    assert a.assort(rec(marks={"Alice"})) == 1
    assert a.assort(rec(marks={"Bob"})) == 0
    assert a.assort(rec(marks={"Alice", "Bob"})) == F(1, 2)
    assert a.assort(rec(marks=set())) == F(1, 2)
    assert a.assort(rec())  == F(1, 2)  # contest absent
    with pytest.raises(ValueError):
        pairwise_assorter("c1", "Alice", "Alice")


def test_pairwise_overvote_rule():
    # plurality: more marks than seats is an overvote and counts for nobody
    a = pairwise_assorter("c1", "Alice", "Carol", max_marks=1)
    assert a.assort(rec(marks={"Alice", "Bob"})) == F(1, 2)
    # approval: every mark counts
    b = pairwise_assorter("c1", "Alice", "Carol", max_marks=None)
    assert b.assort(rec(marks={"Alice", "Bob"})) == 1


def plur_contest(k, cands, winners, cards=100, choice=SocialChoice.PLURALITY):
    return ContestSpec(
        contest_id="c1",
        social_choice=choice,
        candidates=tuple(cands),
        n_winners=k,
        reported_winners=tuple(winners),
        upper_bound_cards=cards,
    )


def test_plurality_assertion_count():
    assert len(plurality_assertions(plur_contest(1, ["a", "b"], ["a"]))) == 1
    assert len(plurality_assertions(plur_contest(2, list("abcde"), ["a", "b"]))) == 6
    with pytest.raises(Exception):
        # no losers: the contest spec itself is invalid
        plur_contest(4, list("abcd"), list("abcd"))


def super_contest(f, winner="Alice", cands=("Alice", "Bob", "Carol")):
    return ContestSpec(
        contest_id="c1",
        social_choice=SocialChoice.SUPERMAJORITY,
        candidates=tuple(cands),
        n_winners=1,
        reported_winners=(winner,),
        upper_bound_cards=100,
        supermajority_fraction=F(f),
    )


def test_supermajority_values():
    a = supermajority_assorter(super_contest("2/3"), "Alice")
    assert a.upper_bound == F(3, 4)
    assert a.assort(rec(marks={"Alice"})) == F(3, 4)
    assert a.assort(rec(marks={"Bob"})) == 0
    assert a.assort(rec(marks={"Alice", "Bob"})) == F(1, 2)  # overvote
    assert a.assort(rec(marks=set())) == F(1, 2)
    # primary-threshold style fraction below one half
    b = supermajority_assorter(super_contest("3/20"), "Alice")
    assert b.assort(rec(marks={"Alice"})) == F(10, 3)


def test_weighted_values():
    a = weighted_assorter("c1", "Alice", "Bob", F(2))
    assert a.assort(rec(scores={"Alice": F(2), "Bob": F(1)})) == F(3, 4)
    assert a.assort(rec(scores={"Alice": F(1), "Bob": F(1)})) == F(1, 2)
    assert a.assort(rec(scores={"Alice": F(0), "Bob": F(2)})) == 0
    assert a.assort(rec()) == F(1, 2)
    with pytest.raises(ValueError):
        a.assort(rec(scores={"Alice": F(3), "Bob": F(0)}))


def test_irv_values():
    neb = irv_assorter("c1", IrvAssertionSpec(IrvAssertionKind.NEB, "i", "j"), ["i", "j", "x"])
    assert neb.assort(rec(ranks={"i": 1, "x": 2})) == 1
    assert neb.assort(rec(ranks={"x": 1, "j": 3})) == 0
    assert neb.assort(rec(ranks={"i": 1, "j": 3})) == F(1, 2)  # counts for both sides
    assert neb.assort(rec()) == F(1, 2)
    nen = irv_assorter(
        "c1",
        IrvAssertionSpec(IrvAssertionKind.NEN, "i", "j", frozenset({"x"})),
        ["i", "j", "x"],
    )
    assert nen.assort(rec(ranks={"x": 1, "i": 2})) == 1  # top of remaining is i
    assert nen.assort(rec(ranks={"x": 1, "j": 2, "i": 3})) == 0
    assert nen.assort(rec(ranks={"x": 1})) == F(1, 2)


def test_irv_spec_validation():
    with pytest.raises(ValueError):
        IrvAssertionSpec(IrvAssertionKind.NEB, "i", "i")
    with pytest.raises(ValueError):
        IrvAssertionSpec(IrvAssertionKind.NEN, "i", "j", frozenset({"i"}))


def test_assorter_mean():
    a = pairwise_assorter("c1", "w", "l")
    halves = [rec(rid=f"r{k}") for k in range(4)]
    assert assorter_mean(a, halves) == F(1, 2)
    mixed = [rec(rid="1", marks={"w"}), rec(rid="2", marks={"l"}), rec(rid="3", marks={"w"})]
    assert assorter_mean(a, mixed) == F(2, 3)
    with pytest.raises(ValueError):
        assorter_mean(a, [])


def test_assorter_mean_with_phantoms():
    # 98 real CVRs averaging 0.6 plus 2 phantom CVRs at 1/2 -> 0.598
    a = weighted_assorter("c1", "w", "l", F(5))
    reals = [rec(rid=f"w{k}", scores={"w": F(1), "l": F(0)}) for k in range(98)]
    phantoms = [VoteRecord(record_id=f"p{k}", contests={}, phantom=True) for k in range(2)]
    assert assorter_mean(a, reals) == F(3, 5)
    assert assorter_mean(a, reals + phantoms) == F(299, 500)  # 0.598


def test_range_property_fuzz():
    rng = np.random.default_rng(123)
    cands = ("a", "b", "c", "d")
    assorters = [
        pairwise_assorter("c1", "a", "b", max_marks=1),
        pairwise_assorter("c1", "a", "b"),
        supermajority_assorter(super_contest("3/5", "a", cands), "a"),
        weighted_assorter("c1", "a", "b", F(3)),
        irv_assorter("c1", IrvAssertionSpec(IrvAssertionKind.NEB, "a", "b"), cands),
        irv_assorter(
            "c1", IrvAssertionSpec(IrvAssertionKind.NEN, "a", "b", frozenset({"c"})), cands
        ),
    ]
    records = []
    for i in range(300):
        kind = rng.integers(0, 4)
        if kind == 0:
            records.append(rec(rid=f"m{i}"))
        elif kind == 1:
            n = int(rng.integers(0, 5))
            records.append(rec(rid=f"m{i}", marks=set(rng.choice(cands, size=n, replace=False))))
        elif kind == 2:
            records.append(
                rec(rid=f"m{i}", scores={c: F(int(rng.integers(0, 13)), 4) for c in cands})
            )
        else:
            depth = int(rng.integers(1, 5))
            ranked = list(rng.choice(cands, size=depth, replace=False))
            records.append(rec(rid=f"m{i}", ranks={c: p + 1 for p, c in enumerate(ranked)}))
    for a in assorters:
        for r in records:
            vote = r.vote("c1")
            if a.id.endswith("_scored") and vote is not None and vote.scores is None:
                continue  # score assorters only consume score-style records
            value = a.assort(r)
            assert 0 <= value <= a.upper_bound


def assertions_all_true(contest, records, irv_specs=None):
    assertions = assertions_for_contest(contest, irv_specs)
    return all(assorter_mean(a.assorter, records) > F(1, 2) for a in assertions)


@pytest.mark.parametrize("choice", [SocialChoice.PLURALITY, SocialChoice.APPROVAL])
def test_sharpness_marks(choice):
    # assertion-set truth must coincide exactly with the hand-count verdict
    rng = np.random.default_rng(2024 if choice is SocialChoice.PLURALITY else 2025)
    for _ in range(200):
        spec, records = oracles.random_marks_election(rng, social_choice=choice)
        assert assertions_all_true(spec, records) == oracles.reported_outcome_correct(
            records, spec
        )


def test_sharpness_supermajority():
    rng = np.random.default_rng(77)
    for _ in range(200):
        spec, records = oracles.random_marks_election(
            rng, social_choice=SocialChoice.SUPERMAJORITY
        )
        assert assertions_all_true(spec, records) == oracles.supermajority_correct(
            records, spec
        )


def test_sharpness_weighted():
    rng = np.random.default_rng(88)
    for _ in range(200):
        spec, records = oracles.random_weighted_election(rng)
        assert assertions_all_true(spec, records) == oracles.reported_outcome_correct(
            records, spec
        )


def test_exact_tie_is_a_loss():
    # complementary null includes equality: a tie must not certify
    spec = plur_contest(1, ["a", "b"], ["a"], cards=4)
    records = [rec(rid="1", marks={"a"}), rec(rid="2", marks={"b"}), rec(rid="3"), rec(rid="4")]
    assert not assertions_all_true(spec, records)
    assert not oracles.reported_outcome_correct(records, spec)


def pin_order_assertions(order):
    """NEN certificate pinning a full elimination order (winner last)."""
    specs = []
    for k, loser in enumerate(order[:-1]):
        eliminated = frozenset(order[:k])
        for other in order[k + 1 :]:
            specs.append(
                IrvAssertionSpec(IrvAssertionKind.NEN, other, loser, eliminated)
            )
    return specs


def test_irv_one_sidedness():
    # if every assertion of a pin-the-order certificate holds, the claimed
    # winner matches the hand-count winner (sufficiency; never the converse)
    rng = np.random.default_rng(99)
    checked_true = checked_false = 0
    for _ in range(200):
        candidates, records = oracles.random_irv_election(rng)
        true_order = oracles.irv_elimination_order(
            records,
            ContestSpec(
                contest_id="c1",
                social_choice=SocialChoice.IRV,
                candidates=candidates,
                n_winners=1,
                reported_winners=(candidates[0],),
                upper_bound_cards=len(records),
            ),
        )
        if true_order is None:
            continue
        claimed = list(true_order)
        if rng.random() < 0.5:
            i, j = rng.choice(len(claimed), size=2, replace=False)
            claimed[i], claimed[j] = claimed[j], claimed[i]
        spec = ContestSpec(
            contest_id="c1",
            social_choice=SocialChoice.IRV,
            candidates=candidates,
            n_winners=1,
            reported_winners=(claimed[-1],),
            upper_bound_cards=len(records),
        )
        specs = pin_order_assertions(claimed)
        if assertions_all_true(spec, records, specs):
            assert claimed[-1] == true_order[-1]
            checked_true += 1
        else:
            checked_false += 1
    assert checked_true > 20 and checked_false > 20


def test_irv_requires_supplied_assertions():
    spec = ContestSpec(
        contest_id="c1",
        social_choice=SocialChoice.IRV,
        candidates=("a", "b", "c"),
        n_winners=1,
        reported_winners=("a",),
        upper_bound_cards=10,
    )
    with pytest.raises(Exception):
        assertions_for_contest(spec, None)
    assertions = assertions_for_contest(
        spec, [IrvAssertionSpec(IrvAssertionKind.NEB, "a", "b")]
    )
    assert len(assertions) == 1
    assert assertions[0].status is AssertionStatus.PENDING
