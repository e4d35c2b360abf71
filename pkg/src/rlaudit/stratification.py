"""Combine independent per-stratum tests into one p-value per assertion.

The overall null "assorter mean over all N cards <= 1/2" is implied by some
split of the half across strata: mean_s * N_s / N <= beta_s with
sum(beta_s) <= 1/2. Each candidate split is tested by combining the
per-stratum p-values with Fisher's statistic -2 * sum(log p_s), whose null
distribution is dominated by chi-square with 2S degrees of freedom; the
assertion's measured risk is the *maximum* combined p-value over a grid of
splits, so the audit certifies only if every admissible split is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

from .nonneg_mean import make_test_state

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class StratumSpec:
    """One stratum: its size and a tester mapping an error allowance to a p-value.

    The tester receives beta (this stratum's share of the half) and must
    return a valid p-value for the hypothesis "stratum assorter mean <=
    (N / N_s) * beta". Testers for different strata must be statistically
    independent (independent sampling is an input assumption).
    """

    stratum_id: str
    cards: int
    tester: Callable[[Fraction], float]


@dataclass(frozen=True)
class AllocationGrid:
    """All splits (beta_1..beta_S) of at most 1/2 on a per-coordinate grid.

    Each coordinate runs over {0, h, 2h, ..., 1/2} with h = (1/2)/resolution;
    points keep sum(beta) <= 1/2, so all vertices of the simplex are included.
    """

    strata: int
    resolution: int

    def __post_init__(self):
        if self.strata < 1:
            raise ValueError("need at least one stratum")
        if self.resolution < 1:
            raise ValueError("grid resolution must be >= 1")

    @property
    def step(self) -> Fraction:
        return HALF / self.resolution

    def points(self) -> Iterator[tuple[Fraction, ...]]:
        """Lexicographic enumeration of the grid (deterministic tie handling)."""

        def rec(prefix: tuple[Fraction, ...], budget: int, left: int):
            if left == 0:
                yield prefix
                return
            for g in range(budget + 1):
                yield from rec(prefix + (g * self.step,), budget - g, left - 1)

        yield from rec((), self.resolution, self.strata)


def default_grid(strata: int, resolution: int | None = None) -> AllocationGrid:
    """Grid with the default resolution: 100 for two strata, 25 for three.

    More strata require an explicit resolution; the grid grows like
    resolution**strata and an unstated default would be a footgun.
    """
    if resolution is None:
        if strata <= 2:
            resolution = 100
        elif strata == 3:
            resolution = 25
        else:
            raise ValueError("pass an explicit grid resolution for more than three strata")
    return AllocationGrid(strata=strata, resolution=resolution)


def chi_square_survival_even_df(x: float, df: int) -> float:
    """Upper-tail chi-square probability for even degrees of freedom.

    For df = 2k the survival function has the closed form
    exp(-x/2) * sum_{i<k} (x/2)**i / i!, evaluated with a running term to
    stay stable for large x.
    """
    if df % 2 != 0 or df < 2:
        raise ValueError("only even, positive degrees of freedom supported")
    if x < 0:
        raise ValueError("chi-square statistic cannot be negative")
    if math.isinf(x):
        return 0.0
    half = x / 2.0
    term = 1.0
    total = 1.0
    for i in range(1, df // 2):
        term *= half / i
        total += term
    return min(1.0, math.exp(-half) * total)


def fisher_combine(p_values: Sequence[float]) -> float:
    """Fisher's combination of independent p-values.

    Returns the chi-square (2S df) upper-tail probability of -2 sum(log p_s).
    With a single p-value this is the identity.
    """
    if not p_values:
        raise ValueError("need at least one p-value")
    ps = [float(p) for p in p_values]
    if any(p <= 0 for p in ps):
        raise ValueError("p-values must be in (0, 1]")
    if any(p > 1 for p in ps):
        raise ValueError("p-values must be in (0, 1]")
    statistic = -2.0 * sum(math.log(p) for p in ps)
    return chi_square_survival_even_df(statistic, 2 * len(ps))


def max_combined_pvalue(
    strata: Sequence[StratumSpec], grid: AllocationGrid | None = None
) -> tuple[float, tuple[Fraction, ...]]:
    """Maximize the combined p-value over all grid splits of the half.

    Returns (max p, the split attaining it); ties go to the lexicographically
    smallest split so the audit record is reproducible. A tester may return
    p = 0 for a split it can rule out outright (its hypothesis is impossible
    given the sample); such splits are rejected without combining.

    Certify the assertion iff the returned maximum is at most the risk limit.
    """
    if not strata:
        raise ValueError("need at least one stratum")
    if grid is None:
        grid = default_grid(len(strata))
    if grid.strata != len(strata):
        raise ValueError(f"grid is over {grid.strata} strata, got {len(strata)}")
    cache: list[dict[Fraction, float]] = [{} for _ in strata]

    def stratum_p(s: int, beta: Fraction) -> float:
        got = cache[s].get(beta)
        if got is None:
            got = float(strata[s].tester(beta))
            if not 0 <= got <= 1:
                raise ValueError(
                    f"stratum {strata[s].stratum_id} returned p={got} outside [0, 1]"
                )
            cache[s][beta] = got
        return got

    best_p = -1.0
    best_split: tuple[Fraction, ...] | None = None
    for split in grid.points():
        ps = [stratum_p(s, beta) for s, beta in enumerate(split)]
        combined = 0.0 if any(p == 0.0 for p in ps) else fisher_combine(ps)
        if combined > best_p:  # first hit wins ties: enumeration is lexicographic
            best_p = combined
            best_split = split
    assert best_split is not None
    return best_p, best_split


def clamped_null_mean(beta: Fraction, total_cards: int, stratum_cards: int) -> Fraction:
    """The stratum-level null mean (N / N_s) * beta implied by a split share."""
    return beta * Fraction(total_cards, stratum_cards)


def polling_tester(
    values: Sequence[Fraction],
    *,
    stratum_cards: int,
    total_cards: int,
    upper_bound: Fraction = Fraction(1),
    test: str = "kk",
    shift: Fraction | None = None,
    exact_limit: int = 0,
) -> Callable[[Fraction], float]:
    """Tester for a polling stratum: tests "stratum mean <= (N/N_s) * beta".

    The induced null mean is clamped against the value range: a null at or
    above the assorter upper bound can never be rejected (p = 1); a null of
    zero is contradicted by any positive draw (p = 0).
    """
    xs = [Fraction(x) for x in values]
    if shift is None:
        shift = Fraction(upper_bound) / 10

    def tester(beta: Fraction) -> float:
        t = clamped_null_mean(Fraction(beta), total_cards, stratum_cards)
        if t >= upper_bound:
            return 1.0
        if t <= 0:
            return 0.0 if any(x > 0 for x in xs) else 1.0
        state = make_test_state(
            test, stratum_cards, t, shift=shift, exact_limit=exact_limit
        )
        p = 1.0
        for x in xs:
            p = min(p, float(state.update(x)))
        return p

    return tester


def comparison_tester(
    taus: Sequence[Fraction],
    *,
    stratum_cards: int,
    total_cards: int,
    reported_stratum_mean: Fraction,
    upper_bound: Fraction,
    test: str = "kk",
    shift: Fraction | None = None,
    exact_limit: int = 0,
) -> Callable[[Fraction], float]:
    """Tester for a comparison stratum, fed scaled agreement values tau = 1 - omega/u.

    "stratum assorter mean <= m" is equivalent to "mean of tau <= 1 - (Ac - m)/u"
    where Ac is the stratum's reported assorter mean over its CVRs, so each
    split share is tested on the tau values (nonnegative, at most 2).
    """
    xs = [Fraction(x) for x in taus]
    if any(not 0 <= x <= 2 for x in xs):
        raise ValueError("tau values must lie in [0, 2]")
    u = Fraction(upper_bound)
    if shift is None:
        shift = Fraction(1, 5)  # 0.1 * the tau range bound of 2

    def tester(beta: Fraction) -> float:
        m = clamped_null_mean(Fraction(beta), total_cards, stratum_cards)
        t_tau = 1 - (reported_stratum_mean - m) / u
        if t_tau >= 2:
            return 1.0
        if t_tau <= 0:
            return 0.0 if any(x > 0 for x in xs) else 1.0
        state = make_test_state(
            test, stratum_cards, t_tau, shift=shift, exact_limit=exact_limit
        )
        p = 1.0
        for x in xs:
            p = min(p, float(state.update(x)))
        return p

    return tester
