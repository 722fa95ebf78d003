"""Shared domain types and the elementary prediction-gap quantities.

The certification criterion rests on two scalars derived from classifier
output vectors: the half-gap ``d`` between the two largest class
probabilities of the clean prediction, and the max-norm discrepancy ``Z``
between clean and transformed probability vectors.  Whenever ``Z < d`` the
argmax cannot move, so bounding the right tail of ``Z`` bounds the
probability of a prediction change.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_SUM_TOL = 1e-5  # tolerant enough for 32-bit softmax output


def as_prob_vector(values) -> np.ndarray:
    """Validate and return a probability vector as a float64 array.

    Requires K >= 2 components, each in [0, 1], summing to 1 within
    PROB_SUM_TOL.
    """
    p = np.asarray(values, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError(f"probability vector needs K >= 2 components, got shape {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probability vector components must lie in [0, 1]")
    s = float(p.sum())
    if abs(s - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probability vector sums to {s!r}, expected 1 within {PROB_SUM_TOL}")
    return p


def as_image(values) -> np.ndarray:
    """Validate and return an image as a (C, H, W) float64 array in [0, 1]."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ValueError(f"image must be (C, H, W) with positive dims, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    return x


def top2_gap(p) -> float:
    """Half the difference between the two largest components of p."""
    p = as_prob_vector(p)
    top2 = np.partition(p, -2)[-2:]
    return float((top2[1] - top2[0]) / 2.0)


def linf_discrepancy(p, q) -> float:
    """Max-norm distance between two probability vectors of equal length."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.max(np.abs(p - q)))


def predicted_class(p) -> int:
    """Index of the largest component; ties broken by the lowest index."""
    return int(np.argmax(as_prob_vector(p)))


@dataclass(frozen=True)
class LabeledSample:
    image: np.ndarray  # (C, H, W) in [0, 1]
    label: int


@dataclass(frozen=True)
class CertConfig:
    """Knobs of the bound-calculation algorithm.

    n_samples transform draws per repetition, k_repeats independent
    repetitions, the worst repetition divided by delta, and the bound
    minimized over t_grid temperatures.
    """

    n_samples: int = 200
    k_repeats: int = 30
    delta: float = 0.9
    t_grid: np.ndarray = field(default_factory=lambda: default_t_grid())
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.k_repeats < 1:
            raise ValueError("k_repeats must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        t = np.asarray(self.t_grid, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("t_grid must be a nonempty 1-D sequence")
        if np.any(t <= 0.0) or np.any(np.diff(t) <= 0.0):
            raise ValueError("t_grid must be strictly increasing and positive")
        object.__setattr__(self, "t_grid", t)


def default_t_grid(t_min: float = 1e-4, t_max: float = 1e4, count: int = 500) -> np.ndarray:
    """Evenly spaced temperature grid; defaults span [1e-4, 1e4] with 500 points."""
    return np.linspace(t_min, t_max, count)


@dataclass(frozen=True)
class BoundRecord:
    """Per-sample certification output.

    ``bound`` is min(1, max(k_bounds)/delta); ``k_bounds`` holds the raw
    per-repetition minima over temperatures (unclamped, may exceed 1);
    ``t_argmin`` is the temperature at which the worst repetition attained
    its minimum; ``cv_diag`` is the empirical coefficient of variation of
    exp(Z * t_argmin) in that repetition, reported as a diagnostic only.
    """

    bound: float
    hit: bool
    gap_d: float
    k_bounds: tuple[float, ...]
    t_argmin: float
    predicted: int
    cv_diag: float

    def __post_init__(self):
        if not 0.0 <= self.bound <= 1.0:
            raise ValueError("bound must lie in [0, 1]")
        if not 0.0 <= self.gap_d <= 0.5:
            raise ValueError("gap_d must lie in [0, 0.5]")
