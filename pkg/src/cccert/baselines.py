"""Clopper-Pearson interval baseline and empirical robust accuracy.

The exact one-sided binomial upper limit comes from the quantile of a
Beta(k+1, n-k) distribution, computed here from first principles: the
regularized incomplete beta function via Lentz's continued fraction and a
bisection for the quantile, with no statistical library in the loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierHandle, predict
from .core import as_image
from .engine import TAG_ERA, predict_in_batches, substream
from .transforms import TransformSpec, apply, grid_params, sample_params

_CF_MAX_ITER = 300
_CF_EPS = 1e-15
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError(f"incomplete beta continued fraction failed for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _beta_quantile(a: float, b: float, prob: float, tol: float = 1e-12) -> float:
    """Inverse CDF of Beta(a, b) by bisection; I_x is monotone in x."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if regularized_incomplete_beta(a, b, mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def clopper_pearson_upper(n: int, k_fail: int, alpha: float) -> float:
    """Exact one-sided upper confidence limit for a binomial proportion.

    The (1-alpha) quantile of Beta(k_fail+1, n-k_fail); 1.0 when every
    trial failed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= k_fail <= n:
        raise ValueError("k_fail must lie in [0, n]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if k_fail == n:
        return 1.0
    return _beta_quantile(k_fail + 1.0, float(n - k_fail), 1.0 - alpha)


@dataclass(frozen=True)
class CPOutcome:
    n_trials: int
    n_failures: int
    alpha: float
    upper: float

    def __post_init__(self):
        if self.n_failures > self.n_trials:
            raise ValueError("n_failures cannot exceed n_trials")


def cp_certify_sample(f: ClassifierHandle, x: np.ndarray, y: int, spec: TransformSpec,
                      n: int, alpha: float, rng: np.random.Generator,
                      vs_label: bool = False, batch_size: int = 256) -> CPOutcome:
    """Count misleading transforms among n random draws and upper-bound the
    misleading probability.

    "Misleading" means the predicted class differs from the clean
    prediction; pass vs_label=True to count mismatches against the ground
    truth label instead.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = as_image(x)
    p = predict(f, x)
    reference = int(y) if vs_label else int(np.argmax(p))
    images = np.stack([apply(sample_params(spec, rng), x, rng) for _ in range(n)])
    probs = predict_in_batches(f, images, batch_size)
    k_fail = int(np.sum(np.argmax(probs, axis=1) != reference))
    return CPOutcome(n, k_fail, alpha, clopper_pearson_upper(n, k_fail, alpha))


def era(f: ClassifierHandle, images, labels, spec: TransformSpec, r: int,
        batch_size: int = 256, rng_seed: int = 0) -> float:
    """Empirical robust accuracy: fraction of samples classified correctly
    under every transformation on the r-point parameter grid.

    Stochastic kinds (noise) draw their realizations from per-(sample,
    grid-point) substreams of rng_seed, keeping the value reproducible.
    """
    if len(images) == 0:
        raise ValueError("dataset must be nonempty")
    grid = grid_params(spec, r)
    robust = 0
    for i in range(len(images)):
        transformed = np.stack([
            apply(params, images[i], substream(rng_seed, TAG_ERA, i, j))
            for j, params in enumerate(grid)
        ])
        preds = np.argmax(predict_in_batches(f, transformed, batch_size), axis=1)
        if np.all(preds == int(labels[i])):
            robust += 1
    return robust / len(images)
