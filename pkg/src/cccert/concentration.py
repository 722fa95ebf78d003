"""Analytical toolbox for the sample-mean statistic of exponentiated draws.

Contains the lognormal-style confidence upper bound for the mean of
exp(X_i t) terms and its minimization over the temperature, closed-form
moments of exp(tX) for uniform X, the Berry-Esseen error estimate in two
conventions, and an FFT-based discrete density of the sample mean with
surplus/shortage bracketing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
BERRY_ESSEEN_C = 0.4784


@dataclass(frozen=True)
class MomentSummary:
    """Mean and variance of the underlying X, with the sample count and
    quantile multiplier entering the confidence term."""

    mu_hat: float
    sigma2_hat: float
    n: int
    q: float = 2.0

    def __post_init__(self):
        if self.sigma2_hat < 0.0:
            raise ValueError("variance must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @classmethod
    def from_samples(cls, xs, q: float = 2.0) -> "MomentSummary":
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size < 2:
            raise ValueError("need at least 2 samples for an unbiased variance")
        return cls(float(xs.mean()), float(xs.var(ddof=1)), int(xs.size), q)


def log_yup(t: float, a: float, moments: MomentSummary) -> float:
    """Exponent of the confidence upper bound, kept in log space."""
    if t <= 0.0:
        raise ValueError("t must be positive")
    m = moments
    half_var = t * t * m.sigma2_hat / 2.0
    conf = t * (m.q / math.sqrt(m.n)) * math.sqrt(m.sigma2_hat * (1.0 + half_var))
    return t * m.mu_hat + half_var + conf - a * t


def yup(t: float, a: float, moments: MomentSummary) -> float:
    """exp{ t mu + t^2 sigma^2/2 + t (q/sqrt n) sqrt(sigma^2 (1 + t^2 sigma^2/2)) - a t }."""
    e = log_yup(t, a, moments)
    if e > 700.0:
        return math.inf
    return math.exp(e)


def minimize_yup(a: float, moments: MomentSummary,
                 t_range: tuple[float, float] = (1e-8, 1e4),
                 tol: float = 1e-10) -> tuple[float, float]:
    """Golden-section search on log t for the single minimum of the bound.

    Returns (t_min, yup(t_min)).  Assumes unimodality of the exponent,
    which holds for the convex-plus-linear structure of log_yup.
    """
    lo, hi = t_range
    if not 0.0 < lo < hi:
        raise ValueError("t_range must be a positive increasing interval")
    f = lambda lt: log_yup(math.exp(lt), a, moments)
    a_, b_ = math.log(lo), math.log(hi)
    x1 = b_ - _GOLDEN * (b_ - a_)
    x2 = a_ + _GOLDEN * (b_ - a_)
    f1, f2 = f(x1), f(x2)
    if not (math.isfinite(f1) and math.isfinite(f2)):
        raise NumericError("bound exponent is not finite inside t_range")
    while (b_ - a_) > tol * max(1.0, abs(a_) + abs(b_)):
        if f1 < f2:
            b_, x2, f2 = x2, x1, f1
            x1 = b_ - _GOLDEN * (b_ - a_)
            f1 = f(x1)
        else:
            a_, x1, f1 = x1, x2, f2
            x2 = a_ + _GOLDEN * (b_ - a_)
            f2 = f(x2)
    lt = 0.5 * (a_ + b_)
    t_min = math.exp(lt)
    return t_min, yup(t_min, a, moments)


# ---------------------------------------------------------------------------
# closed-form moments of exp(tX), X ~ U(0, 1)

# even-series coefficients of t^2 + 2(t^2+6)cosh t - 9 t sinh t - 12, whose
# direct evaluation cancels catastrophically below |t| ~ 0.3
_BRACKET_SERIES = ((6, 1.0 / 40.0), (8, 13.0 / 10080.0), (10, 17.0 / 604800.0),
                   (12, 1.0 / 2851200.0), (14, 5.0 / 1743565824.0))


def exp_uniform_moments(t: float) -> tuple[float, float, float]:
    """(mean, variance, third central moment) of exp(tX) for X ~ U(0, 1)."""
    if t == 0.0:
        raise ValueError("t must be nonzero (limits: mu -> 1, sigma^2 -> 0)")
    mu = math.expm1(t) / t
    sigma2 = (math.exp(t) * t * math.sinh(t) - math.expm1(t) ** 2) / (t * t)
    if abs(t) < 0.3:
        bracket = sum(c * t**p for p, c in _BRACKET_SERIES)
    else:
        bracket = t * t + 2.0 * (t * t + 6.0) * math.cosh(t) - 9.0 * t * math.sinh(t) - 12.0
    rho = 2.0 * math.exp(1.5 * t) * math.sinh(t / 2.0) * bracket / (3.0 * t**3)
    return mu, sigma2, rho


def berry_esseen_rhs(t: float, n: int, mode: str = "paper") -> float:
    """Error estimate for the normal approximation of the scaled mean.

    mode="paper" evaluates C rho / (sigma^4 n) exactly as written in the
    source material; mode="standard" evaluates the classical
    C rho / (sigma^3 sqrt(n)).  The two disagree in rate and units, which
    is why both are exposed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    _, sigma2, rho = exp_uniform_moments(t)
    if mode == "paper":
        return BERRY_ESSEEN_C * rho / (sigma2**2 * n)
    if mode == "standard":
        return BERRY_ESSEEN_C * rho / (sigma2**1.5 * math.sqrt(n))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# FFT density of the sample mean of exp(X_i t)


@dataclass(frozen=True)
class DiscreteDensity:
    """Discrete approximation of the law of (1/n) sum exp(X_i t) on [1, e^t].

    ``masses`` sums to 1; ``lower``/``upper`` are the surplus/shortage
    bracket sequences (nominal, they do not sum to 1) satisfying
    lower <= masses <= upper elementwise up to transform round-off.
    """

    t: float
    n: int
    m: int
    support: np.ndarray
    masses: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)


def _convolve_power(v: np.ndarray, n: int, size: int) -> np.ndarray:
    V = np.zeros(size)
    V[: v.size] = v
    return np.fft.irfft(np.fft.rfft(V) ** n, size)


def fft_mean_density(t: float, n: int, m: int) -> DiscreteDensity:
    """n-fold self-convolution of the m-bin discretization of exp(tX).

    Bin probabilities are exact interval masses of exp(tX), the n-th
    convolution power is taken through a length n(m-1)+1 FFT (zero-padded,
    so the circular convolution is linear), negative round-off is clamped
    and the result renormalized.  The brackets come from shifting the
    discretization intervals by half a bin either way.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if n < 1 or m < 2:
        raise ValueError("need n >= 1 and m >= 2")
    if t > 700.0:
        raise NumericError(f"exp({t}) overflows; keep t below ~700")
    c = math.expm1(t)  # e^t - 1
    i = np.arange(1, m + 1, dtype=np.float64)
    v = (np.log1p(c * i / m) - np.log1p(c * (i - 1) / m)) / t

    # half-bin shifted variants; at i=1 the left shift needs 1 - c/(2m) > 0
    if c >= 2.0 * m:
        raise NumericError(
            f"bracket shift leaves the support: increase m above {c / 2.0:.3g} "
            f"or keep t below {math.log1p(2.0 * m):.3g}")
    v_left = (np.log1p(c * (i - 0.5) / m) - np.log1p(c * (i - 1.5) / m)) / t
    v_right = (np.log1p(c * (i + 0.5) / m) - np.log1p(c * (i - 0.5) / m)) / t

    size = n * (m - 1) + 1
    w = np.clip(_convolve_power(v, n, size), 0.0, None)
    w /= w.sum()
    # the log-difference is concave, so the left shift bounds from above
    upper = _convolve_power(v_left, n, size)
    lower = _convolve_power(v_right, n, size)

    # each term's bin i carries the midpoint value 1 + (i - 1/2) c/m
    delta = c / m
    j = np.arange(size, dtype=np.float64)
    support = 1.0 + delta / 2.0 + (delta / n) * j
    return DiscreteDensity(t=t, n=n, m=m, support=support, masses=w,
                           lower=lower, upper=upper)


def fft_error_bound(t: float, n: int, m: int) -> float:
    """Rough relative discretization error of the FFT density: (e^t - 1) n / m."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    return math.expm1(t) * n / m
