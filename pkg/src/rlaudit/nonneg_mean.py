"""Sequential tests that the mean of a nonnegative finite population is <= t.

Both tests sample without replacement and are built on nonnegative closed
martingales: by Kolmogorov's inequality, the running maximum M of such a
martingale satisfies P(max M > 1/p) <= p, so 1/max is a valid p-value at any
stopping time.

* Kaplan-Kolmogorov (product form): multiply, draw by draw, the observed value
  over the conditional null mean of the remaining population. A shift gamma > 0
  guards against early zeros (a zero draw otherwise kills the product); with a
  shift the test addresses the hypothesis mean <= t - gamma, so callers test
  "mean <= t0" by passing t = t0 + gamma.

* Kaplan martingale (integral form): integrate the product of the linear
  factors gamma * (X_j * jt / (t - St_{j-1}) - 1) + 1 over gamma in [0, 1].
  The integrand is a polynomial with constant term 1, expanded and integrated
  coefficient-wise, exactly.

Arithmetic is exact rational up to ``exact_limit`` draws (default 2,000);
past that the state switches to floating point (log-space products with
compensated running sums; quadrature for the integral form), with agreement
to ~1e-9 at the switchover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

EXACT_LIMIT_DEFAULT = 2000

Number = Fraction | float | int


@dataclass(frozen=True)
class SequentialSample:
    """Values X_1..X_J in draw order from a population of N nonnegative items."""

    values: tuple[Fraction, ...]
    population_size: int
    null_mean: Fraction

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population size must be >= 1")
        if len(self.values) > self.population_size:
            raise ValueError(
                f"{len(self.values)} draws exceed the population size {self.population_size}"
            )
        if any(x < 0 for x in self.values):
            raise ValueError("negative value in a sample from a nonnegative population")
        if self.null_mean <= 0:
            raise ValueError("null mean must be positive")

    @classmethod
    def of(cls, values: Sequence, population_size: int, null_mean) -> "SequentialSample":
        return cls(
            values=tuple(Fraction(x) for x in values),
            population_size=population_size,
            null_mean=Fraction(null_mean),
        )


def poly_mul_linear(coeffs: Sequence[Number], a: Number) -> tuple[Number, ...]:
    """Coefficients of (a*g + 1) times the polynomial with the given coefficients.

    coeffs[k] is the coefficient of g**k. Multiplying by a == 0 returns the
    coefficients unchanged; the constant term is always preserved.
    """
    if a == 0:
        return tuple(coeffs)
    out = list(coeffs) + [0 * coeffs[-1]]
    for k in range(len(coeffs), 0, -1):
        out[k] = out[k] + a * coeffs[k - 1]
    return tuple(out)


def integrate_01(coeffs: Sequence[Number]) -> Number:
    """Integral over [0, 1] of the polynomial with the given coefficients."""
    total = 0
    for k, c in enumerate(coeffs):
        total = total + c / (k + 1)
    return total


def _log_fraction(f: Fraction) -> float:
    if f == 0:
        return -math.inf
    return math.log(f.numerator) - math.log(f.denominator)


class _KahanSum:
    """Compensated running sum, for the float continuation of long audits."""

    def __init__(self, value: float = 0.0):
        self.value = value
        self._c = 0.0

    def add(self, x: float):
        y = x - self._c
        t = self.value + y
        self._c = (t - self.value) - y
        self.value = t


class KaplanKolmogorovState:
    """Incremental product-test state for one assertion.

    Tests the hypothesis that the population mean is <= null_mean - shift,
    feeding shifted values X_j + shift. The running product clamps a factor to
    exactly 1 whenever the shifted running sum has already reached N * null_mean
    (the null's entire population total), and the p-value is 1/(max so far),
    capped at 1, so it never increases as draws accumulate.
    """

    kind = "kk"

    def __init__(
        self,
        population_size: int,
        null_mean: Fraction,
        shift: Fraction = Fraction(0),
        exact_limit: int = EXACT_LIMIT_DEFAULT,
    ):
        if null_mean <= 0:
            raise ValueError("null mean must be positive")
        if shift < 0:
            raise ValueError("shift must be nonnegative")
        self.population_size = population_size
        self.null_mean = Fraction(null_mean)
        self.shift = Fraction(shift)
        self.exact_limit = exact_limit
        self.draws_seen = 0
        self._total = self.population_size * self.null_mean  # N*t, the null population total
        # exact phase
        self._sum = Fraction(0)  # running sum of shifted values
        self._z = Fraction(1)
        self._z_max = Fraction(1)
        # float phase
        self._float = exact_limit <= 0
        self._sum_f = _KahanSum()
        self._log_z = 0.0
        self._log_z_max = 0.0

    @property
    def statistic(self) -> Number:
        """Current value of the running product Z."""
        return math.exp(self._log_z) if self._float else self._z

    @property
    def current_p(self) -> Number:
        if self._float:
            return min(1.0, math.exp(-self._log_z_max))
        return min(Fraction(1), 1 / self._z_max) if self._z_max > 0 else Fraction(1)

    def _to_float(self):
        self._sum_f = _KahanSum(float(self._sum))
        self._log_z = _log_fraction(self._z)
        self._log_z_max = _log_fraction(self._z_max)
        self._float = True

    def update(self, x: Fraction) -> Number:
        """Consume the next draw; returns the updated p-value."""
        if x < 0:
            raise ValueError("negative value in a sample from a nonnegative population")
        if self.draws_seen >= self.population_size:
            raise ValueError("more draws than the population holds")
        self.draws_seen += 1
        j = self.draws_seen
        if not self._float and self.draws_seen > self.exact_limit:
            self._to_float()
        if self._float:
            xs = float(x + self.shift)
            remaining = float(self._total) - self._sum_f.value
            if remaining <= 0:
                pass  # clamp: factor exactly 1
            elif xs == 0.0:
                self._log_z = -math.inf
            else:
                self._log_z += (
                    math.log(xs)
                    + math.log(self.population_size - j + 1)
                    - math.log(remaining)
                )
            self._sum_f.add(xs)
            self._log_z_max = max(self._log_z_max, self._log_z)
        else:
            xs = x + self.shift
            remaining = self._total - self._sum
            if remaining > 0:
                self._z *= xs * (self.population_size - j + 1) / remaining
            self._sum += xs
            self._z_max = max(self._z_max, self._z)
        return self.current_p


class KaplanMartingaleState:
    """Incremental integral-test state for one assertion.

    Maintains the coefficient vector of the product polynomial; each draw
    multiplies in one linear factor and re-integrates over [0, 1]. When the
    null's remaining total t - St_{j-1} is <= 0 the factor is taken to be the
    constant 1 (the sample has already exhausted the null total, mirroring the
    product test's clamp), which preserves the supermartingale property.

    The float continuation evaluates the integral by Gauss-Legendre quadrature,
    exact for polynomials, on log-scale node products.
    """

    kind = "km"

    def __init__(
        self,
        population_size: int,
        null_mean: Fraction,
        exact_limit: int = EXACT_LIMIT_DEFAULT,
    ):
        if null_mean <= 0:
            raise ValueError("null mean must be positive")
        self.population_size = population_size
        self.null_mean = Fraction(null_mean)
        self.exact_limit = exact_limit
        self.draws_seen = 0
        self._total = population_size * Fraction(null_mean)  # N*t
        self._sum = Fraction(0)
        self.coeffs: tuple[Number, ...] = (Fraction(1),)
        self._y = Fraction(1)
        self._y_max = Fraction(1)
        self._slopes: list[float] = []  # float history of the factor slopes
        # float phase
        self._float = exact_limit <= 0
        self._nodes: np.ndarray | None = None
        self._weights: np.ndarray | None = None
        self._log_prod: np.ndarray | None = None
        self._log_y = 0.0
        self._log_y_max = 0.0
        if self._float:
            self._grow_nodes(64)

    @property
    def statistic(self) -> Number:
        """Current value of the integral Y."""
        return math.exp(self._log_y) if self._float else self._y

    @property
    def current_p(self) -> Number:
        if self._float:
            return min(1.0, math.exp(-self._log_y_max))
        return min(Fraction(1), 1 / self._y_max) if self._y_max > 0 else Fraction(1)

    def _grow_nodes(self, min_degree: int):
        m = 256
        while 2 * m - 1 < min_degree:
            m *= 2
        raw_nodes, raw_weights = np.polynomial.legendre.leggauss(m)
        self._nodes = (raw_nodes + 1.0) / 2.0
        self._weights = raw_weights / 2.0
        log_prod = np.zeros(m)
        for c in self._slopes:
            log_prod += np.log1p(c * self._nodes)
        self._log_prod = log_prod

    def _to_float(self):
        self._grow_nodes(max(self.draws_seen * 2, 64))
        self._log_y = _log_fraction(self._y)
        self._log_y_max = _log_fraction(self._y_max)
        self._float = True

    def _integrate_nodes(self) -> float:
        m = self._log_prod.max()
        if m == -math.inf:
            return -math.inf
        return m + math.log(float(np.dot(self._weights, np.exp(self._log_prod - m))))

    def update(self, x: Fraction) -> Number:
        if x < 0:
            raise ValueError("negative value in a sample from a nonnegative population")
        if self.draws_seen >= self.population_size:
            raise ValueError("more draws than the population holds")
        self.draws_seen += 1
        j = self.draws_seen
        if not self._float and self.draws_seen > self.exact_limit:
            self._to_float()
        remaining = self._total - self._sum  # N*(t - St_{j-1})
        if remaining <= 0:
            slope: Number = Fraction(0)
        else:
            # X_j * (1 - (j-1)/N) / (t - St_{j-1}) - 1, cleared of the 1/N factors
            slope = x * (self.population_size - j + 1) / remaining - 1
        self._sum += x
        if self._float:
            if 2 * len(self._nodes) - 1 < j:
                self._slopes.append(float(slope))
                self._grow_nodes(j * 2)
            else:
                c = float(slope)
                self._slopes.append(c)
                if c != 0.0:
                    self._log_prod += np.log1p(c * self._nodes)
            self._log_y = self._integrate_nodes()
            self._log_y_max = max(self._log_y_max, self._log_y)
        else:
            self._slopes.append(float(slope))
            self.coeffs = poly_mul_linear(self.coeffs, slope)
            self._y = integrate_01(self.coeffs)
            self._y_max = max(self._y_max, self._y)
        return self.current_p


def make_test_state(
    kind: str,
    population_size: int,
    null_mean,
    shift=Fraction(0),
    exact_limit: int = EXACT_LIMIT_DEFAULT,
):
    """Build a sequential-test state; kind is "kk" or "km".

    For "kk" the shift is added to every draw and to the null, so the state
    tests "mean <= null_mean" as handed in. "km" takes no shift.
    """
    null_mean = Fraction(null_mean)
    shift = Fraction(shift)
    if kind == "kk":
        return KaplanKolmogorovState(
            population_size, null_mean + shift, shift=shift, exact_limit=exact_limit
        )
    if kind == "km":
        return KaplanMartingaleState(population_size, null_mean, exact_limit=exact_limit)
    raise ValueError(f"unknown test kind {kind!r}; expected 'kk' or 'km'")


def kk_pvalue(
    sample: SequentialSample,
    shift: Fraction = Fraction(0),
    exact_limit: int = EXACT_LIMIT_DEFAULT,
) -> Number:
    """Product-test p-value for "population mean <= null_mean - shift".

    The sample's null_mean parametrizes the shifted data X_j + shift directly:
    with shift == 0 this tests mean <= null_mean. An empty sample gives p = 1.
    """
    state = KaplanKolmogorovState(
        sample.population_size, sample.null_mean, shift=Fraction(shift), exact_limit=exact_limit
    )
    for x in sample.values:
        state.update(x)
    return state.current_p


def km_pvalue(sample: SequentialSample, exact_limit: int = EXACT_LIMIT_DEFAULT) -> Number:
    """Integral-test p-value for "population mean <= null_mean"."""
    state = KaplanMartingaleState(
        sample.population_size, sample.null_mean, exact_limit=exact_limit
    )
    for x in sample.values:
        state.update(x)
    return state.current_p


def _synthetic_polling(n: int, one_share: Fraction) -> np.ndarray:
    """Deterministic 0/1 sequence whose running one-count tracks one_share."""
    q = float(min(max(one_share, Fraction(0)), Fraction(1)))
    k = np.arange(1, n + 1)
    counts = np.floor(k * q + 1e-12)
    return np.diff(np.concatenate(([0.0], counts)))


def _error_positions(n: int, rate: float) -> np.ndarray:
    """Front-loaded deterministic error placement at the given rate."""
    if rate <= 0:
        return np.zeros(n, dtype=bool)
    k = np.arange(1, n + 1)
    counts = np.ceil(k * rate - 1e-12)
    return np.diff(np.concatenate(([0.0], counts))) > 0


def estimate_initial_sample_size(
    margin: Fraction,
    risk_limit,
    test: str = "kk",
    error_rate: float = 0.0,
    *,
    population_size: int,
    upper_bound: Fraction = Fraction(1),
    shift: Fraction | None = None,
    comparison: bool = False,
    max_draws: int | None = None,
) -> int:
    """Smallest draw count at which a synthetic audit reaches the risk limit.

    Builds a deterministic sequence consistent with the reported assorter
    margin (polling: ones and zeros in the reported proportion; comparison:
    the constant error-free value) with errors injected, front-loaded, at
    ``error_rate``, and runs the chosen test until p <= risk_limit. Returns
    ``max_draws`` (default: the population size) if the limit is never reached,
    which signals a full hand count at the assumed error rate.

    Deterministic for fixed inputs.
    """
    alpha = float(risk_limit)
    margin = Fraction(margin)
    if margin <= 0:
        raise ValueError("cannot size an audit for a non-positive reported margin")
    if not 0 < alpha:
        raise ValueError("risk limit must be positive")
    if alpha >= 1:
        return 0
    u = Fraction(upper_bound)
    limit = population_size if max_draws is None else min(max_draws, population_size)
    if comparison:
        b_zero = 1 / (2 - margin / u)  # perfect-agreement value of the error assorter
        b_err = b_zero / 2  # one-vote overstatement
        values = np.full(limit, float(b_zero))
        values[_error_positions(limit, error_rate)] = float(b_err)
        value_bound = 2 * b_zero
    else:
        one_share = (1 + margin) / 2 - Fraction(error_rate).limit_denominator(10**6)
        values = _synthetic_polling(limit, one_share)
        value_bound = u
    if shift is None:
        shift = value_bound / 10
    state = make_test_state(
        test, population_size, Fraction(1, 2), shift=Fraction(shift), exact_limit=0
    )
    for n, x in enumerate(values, start=1):
        p = state.update(Fraction(x).limit_denominator(10**9))
        if p <= alpha:
            return n
    return limit
