"""Monte-Carlo harnesses: validity, martingale-mean, and conservatism checks.

These are the audit engine's own quality gates, exposed through the CLI so a
jurisdiction can reproduce the statistical guarantees on its own hardware.
Everything here runs in floating point for speed (the tests themselves use
exact arithmetic during real audits); traces are vectorized across trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def kk_trace(x: np.ndarray, N: int, t: float, shift: float = 0.0) -> np.ndarray:
    """Running product statistic Z, row-wise over a (trials, draws) matrix.

    Tests "mean <= t - shift" on the shifted draws x + shift; pass
    t = null + shift to test "mean <= null". Factors clamp to 1 once a row's
    shifted running sum reaches N*t.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xs = x + shift
    draws = x.shape[1]
    if draws > N:
        raise ValueError("more draws than the population holds")
    before = np.cumsum(xs, axis=1) - xs  # shifted running sum before each draw
    remaining = N * t - before
    k = np.arange(1, draws + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = xs * (N - k + 1) / remaining
    factors = np.where(remaining <= 0, 1.0, factors)
    return np.cumprod(factors, axis=1)


def kk_p_trace(x: np.ndarray, N: int, t: float, shift: float = 0.0) -> np.ndarray:
    """Per-draw p-values (max-so-far rule) for the product test."""
    z = kk_trace(x, N, t, shift)
    running_max = np.maximum.accumulate(np.maximum(z, 1.0), axis=1)
    return 1.0 / running_max


def km_trace(x: np.ndarray, N: int, t: float, nodes: int | None = None) -> np.ndarray:
    """Running integral statistic Y, row-wise over a (trials, draws) matrix.

    The degree-n polynomial integral is evaluated by Gauss-Legendre quadrature
    (exact for polynomials) on per-node running products, held in log space.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    trials, draws = x.shape
    if draws > N:
        raise ValueError("more draws than the population holds")
    if nodes is None:
        nodes = max(16, draws // 2 + 1)
    raw_nodes, raw_weights = np.polynomial.legendre.leggauss(nodes)
    g = (raw_nodes + 1.0) / 2.0  # quadrature points in (0, 1)
    w = raw_weights / 2.0
    before = np.cumsum(x, axis=1) - x
    remaining = N * t - before  # N * (t - St_{j-1})
    k = np.arange(1, draws + 1, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = x * (N - k + 1) / remaining - 1.0
    slopes = np.where(remaining <= 0, 0.0, slopes)  # exhausted null: factor is 1
    log_prod = np.zeros((trials, nodes))
    y = np.empty((trials, draws))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j in range(draws):
            log_prod += np.log1p(np.outer(slopes[:, j], g))
            m = log_prod.max(axis=1, keepdims=True)
            m_safe = np.where(np.isfinite(m), m, 0.0)
            y[:, j] = np.exp(m_safe[:, 0]) * (np.exp(log_prod - m_safe) @ w)
            y[np.isneginf(m[:, 0]), j] = 0.0
    return y


def km_p_trace(x: np.ndarray, N: int, t: float, nodes: int | None = None) -> np.ndarray:
    """Per-draw p-values (max-so-far rule) for the integral test."""
    y = km_trace(x, N, t, nodes)
    running_max = np.maximum.accumulate(np.maximum(y, 1.0), axis=1)
    return 1.0 / running_max


def p_trace(test: str, x: np.ndarray, N: int, t: float, shift: float = 0.0) -> np.ndarray:
    if test == "kk":
        return kk_p_trace(x, N, t + shift, shift)
    if test == "km":
        return km_p_trace(x, N, t)
    raise ValueError(f"unknown test {test!r}")


def sample_matrix(population: np.ndarray, trials: int, draws: int, rng) -> np.ndarray:
    """trials x draws matrix of without-replacement prefixes of random permutations."""
    population = np.asarray(population, dtype=float)
    order = np.argsort(rng.random((trials, population.size)), axis=1)[:, :draws]
    return population[order]


def tie_population(size: int) -> np.ndarray:
    """The hardest honest null for a pairwise assorter: half ones, half zeros."""
    if size % 2:
        raise ValueError("a tie population needs an even size")
    return np.concatenate([np.ones(size // 2), np.zeros(size // 2)])


@dataclass(frozen=True)
class ValidityResult:
    trials: int
    false_certifications: int
    rate: float
    bound: float  # alpha + 3 Monte-Carlo standard errors

    @property
    def passed(self) -> bool:
        return self.rate <= self.bound


def polling_validity(
    population: np.ndarray,
    *,
    test: str = "kk",
    alpha: float = 0.05,
    shift: float = 0.1,
    trials: int = 10_000,
    draws: int | None = None,
    seed: int = 20241105,
    batch: int = 2_000,
) -> ValidityResult:
    """Fraction of simulated audits of a true-null population that certify.

    Each trial samples the population without replacement (to exhaustion by
    default) and certifies the moment the sequential p-value drops to alpha.
    For any population whose mean is at most 1/2 the rate must stay within
    Monte-Carlo noise of alpha.
    """
    population = np.asarray(population, dtype=float)
    N = population.size
    draws = N if draws is None else min(draws, N)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        chunk = min(batch, trials - done)
        x = sample_matrix(population, chunk, draws, rng)
        p = p_trace(test, x, N, 0.5, shift if test == "kk" else 0.0)
        hits += int((p.min(axis=1) <= alpha).sum())
        done += chunk
    rate = hits / trials
    bound = alpha + 3.0 * math.sqrt(alpha * (1 - alpha) / trials)
    return ValidityResult(trials=trials, false_certifications=hits, rate=rate, bound=bound)


@dataclass(frozen=True)
class MartingaleMean:
    n: int
    mean: float
    se: float

    @property
    def within_3se(self) -> bool:
        return abs(self.mean - 1.0) <= 3.0 * self.se


def martingale_means(
    population: np.ndarray,
    checkpoints: tuple[int, ...],
    *,
    test: str = "kk",
    reps: int = 10_000,
    seed: int = 987,
) -> list[MartingaleMean]:
    """Monte-Carlo mean of the test statistic at the given draw counts.

    Sampling without replacement from a population whose mean is exactly the
    null keeps the statistic a martingale with expectation 1, so each
    checkpoint mean should sit within ~3 standard errors of 1.
    """
    population = np.asarray(population, dtype=float)
    N = population.size
    t = float(population.mean())
    rng = np.random.default_rng(seed)
    x = sample_matrix(population, reps, max(checkpoints), rng)
    stat = kk_trace(x, N, t) if test == "kk" else km_trace(x, N, t)
    out = []
    for n in checkpoints:
        col = stat[:, n - 1]
        out.append(
            MartingaleMean(n=n, mean=float(col.mean()), se=float(col.std(ddof=1) / math.sqrt(reps)))
        )
    return out


def multiassertion_soundness(
    *,
    trials: int = 10_000,
    N: int = 200,
    draws: int = 200,
    alpha: float = 0.05,
    shift: float = 0.1,
    test: str = "kk",
    seed: int = 424242,
) -> ValidityResult:
    """Certification rate when one of several simultaneous assertions is false.

    Each trial audits two assertions evaluated on the same draws: one clearly
    true, one a true-null tie. Certifying requires both sequential tests to
    cross alpha, so the rate is bounded by the tie assertion's alone; no
    multiplicity correction appears anywhere.
    """
    half = N // 2
    # candidate marks: winner-vote cards assort (1, 1), loser-vote cards (0, 1/2)
    tie_values = np.concatenate([np.ones(half), np.zeros(half)])
    easy_values = np.concatenate([np.ones(half), np.full(half, 0.5)])
    rng = np.random.default_rng(seed)
    hits = 0
    for start in range(0, trials, 2_000):
        chunk = min(2_000, trials - start)
        order = np.argsort(rng.random((chunk, N)), axis=1)[:, :draws]
        p_tie = p_trace(test, tie_values[order], N, 0.5, shift)
        p_easy = p_trace(test, easy_values[order], N, 0.5, shift)
        certified = (p_tie.min(axis=1) <= alpha) & (p_easy.min(axis=1) <= alpha)
        hits += int(certified.sum())
    rate = hits / trials
    bound = alpha + 3.0 * math.sqrt(alpha * (1 - alpha) / trials)
    return ValidityResult(trials=trials, false_certifications=hits, rate=rate, bound=bound)


def _kk_p_for_many_nulls(x: np.ndarray, N: int, ts: np.ndarray, shift: float) -> np.ndarray:
    """min-over-trace p for one sample row under a vector of null means.

    Returns an array aligned with ts; each null t is tested as mean <= t via
    the shifted product statistic.
    """
    xs = x + shift
    draws = xs.size
    before = np.cumsum(xs) - xs
    k = np.arange(1, draws + 1, dtype=float)
    tot = np.outer(N * (ts + shift), np.ones(draws))
    remaining = tot - before
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = xs * (N - k + 1) / remaining
    factors = np.where(remaining <= 0, 1.0, factors)
    z = np.cumprod(factors, axis=1)
    zmax = np.maximum(z.max(axis=1), 1.0)
    return 1.0 / zmax


def stratified_conservatism(
    *,
    trials: int = 10_000,
    stratum_sizes: tuple[int, int] = (300, 300),
    draws_per_stratum: tuple[int, int] = (60, 60),
    alpha: float = 0.05,
    grid_resolution: int = 100,
    shift: float = 0.1,
    seed: int = 777,
) -> ValidityResult:
    """Two-stratum (polling + comparison) certification rate under a true tie.

    Stratum 1 is ballot-polling over a 0/1 tie; stratum 2 is ballot-level
    comparison where the CVRs claim a comfortable win but the cards are
    actually tied (every "winner" CVR whose card shows a loser vote is a
    full overstatement). Overall the assertion's true mean is exactly 1/2, so
    the grid-maximized combined p-value must certify at most ~alpha of the
    time.
    """
    n1, n2 = stratum_sizes
    d1, d2 = draws_per_stratum
    N = n1 + n2
    g = grid_resolution
    betas = np.arange(g + 1) / (2.0 * g)  # 0 .. 1/2
    rng = np.random.default_rng(seed)

    # polling stratum population: tie
    pop1 = np.concatenate([np.ones(n1 // 2), np.zeros(n1 - n1 // 2)])
    # comparison stratum: CVRs all report winner votes, cards are tied, so tau
    # values are 1 (card matches) or 0 (two-vote overstatement, omega = u)
    reported_mean_2 = 1.0  # every CVR a winner vote
    tau_pop = np.concatenate([np.full(n2 // 2, 1.0), np.zeros(n2 - n2 // 2)])

    # per-stratum null means induced by each beta
    t1 = betas * (N / n1)
    t_tau = 1.0 - (reported_mean_2 - betas * (N / n2))  # u = 1
    simplex = (np.arange(g + 1)[:, None] + np.arange(g + 1)[None, :]) <= g

    hits = 0
    for _ in range(trials):
        x1 = pop1[rng.permutation(n1)[:d1]]
        x2 = tau_pop[rng.permutation(n2)[:d2]]
        p1 = np.ones(g + 1)
        feasible1 = (t1 > 0) & (t1 < 1.0)
        p1[feasible1] = _kk_p_for_many_nulls(x1, n1, t1[feasible1], shift)
        p1[t1 <= 0] = 0.0 if x1.max() > 0 else 1.0
        p2 = np.ones(g + 1)
        feasible2 = (t_tau > 0) & (t_tau < 2.0)
        p2[feasible2] = _kk_p_for_many_nulls(x2, n2, t_tau[feasible2], 2 * shift)
        p2[t_tau <= 0] = 0.0 if x2.max() > 0 else 1.0
        # grid max of the combined p over beta1 + beta2 <= 1/2 (index i + j <= g);
        # the chi-square survival at 4 df has the closed form exp(-s/2)(1 + s/2)
        with np.errstate(divide="ignore"):
            stat = -2.0 * (np.log(p1)[:, None] + np.log(p2)[None, :])
        stat_safe = np.where(np.isinf(stat), 0.0, stat)
        combined = np.where(
            np.isinf(stat), 0.0, np.exp(-stat_safe / 2.0) * (1.0 + stat_safe / 2.0)
        )
        best = float(np.where(simplex, combined, 0.0).max())
        if best <= alpha:
            hits += 1
    rate = hits / trials
    bound = alpha + 3.0 * math.sqrt(alpha * (1 - alpha) / trials)
    return ValidityResult(trials=trials, false_certifications=hits, rate=rate, bound=bound)
