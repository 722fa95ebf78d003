"""Parametric image transformations with uniform sampling and grid discretization.

Every transformation maps a (C, H, W) image in [0, 1] to another image of
identical shape in [0, 1].  Geometric kinds (rotation, translation, scale)
use inverse-mapped bilinear interpolation with zero padding: output pixels
whose source coordinates fall outside the input contribute nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RotationSpec:
    lo: float  # degrees
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("rotation range requires lo <= hi")

    kind = "rotation"


@dataclass(frozen=True)
class TranslationSpec:
    rho: float    # max displacement as a fraction of image width
    width: int    # image width in pixels, fixed at spec construction

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("translation fraction must lie in [0, 1)")
        if self.width < 1:
            raise ValueError("width must be >= 1")

    kind = "translation"

    @property
    def radius(self) -> float:
        return self.rho * self.width


@dataclass(frozen=True)
class ScaleSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 < self.lo <= self.hi:
            raise ValueError("scale range requires 0 < lo <= hi")

    kind = "scale"


@dataclass(frozen=True)
class BrightnessSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not (-1.0 <= self.lo <= self.hi <= 1.0):
            raise ValueError("brightness range must satisfy -1 <= lo <= hi <= 1")

    kind = "brightness"


@dataclass(frozen=True)
class ContrastSpec:
    lo: float
    hi: float

    def __post_init__(self):
        if not (-1.0 < self.lo <= self.hi):
            raise ValueError("contrast range must satisfy -1 < lo <= hi")

    kind = "contrast"


@dataclass(frozen=True)
class GaussianBlurSpec:
    sigma_max: float  # sigma is the squared kernel radius; space is (0, sigma_max]

    def __post_init__(self):
        if self.sigma_max <= 0.0:
            raise ValueError("sigma_max must be positive")

    kind = "blur"


@dataclass(frozen=True)
class AwgnSpec:
    sigma_max: float  # noise std dev; space is (0, sigma_max]

    def __post_init__(self):
        if self.sigma_max <= 0.0:
            raise ValueError("sigma_max must be positive")

    kind = "awgn"


@dataclass(frozen=True)
class CompositionSpec:
    children: tuple

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("composition needs at least 2 children")
        if any(isinstance(c, CompositionSpec) for c in self.children):
            raise ValueError("compositions cannot be nested")
        object.__setattr__(self, "children", tuple(self.children))

    kind = "compose"


TransformSpec = (
    RotationSpec | TranslationSpec | ScaleSpec | BrightnessSpec
    | ContrastSpec | GaussianBlurSpec | AwgnSpec | CompositionSpec
)


@dataclass(frozen=True)
class TransformParams:
    """Concrete parameter draw, tagged with the transformation kind.

    ``value`` is a float for scalar kinds, an (dx, dy) tuple for
    translation, and a tuple of child TransformParams for compositions.
    """

    kind: str
    value: object


def spec_to_dict(spec: TransformSpec) -> dict:
    """Serializable description of a spec, used for report config echoes."""
    if isinstance(spec, CompositionSpec):
        return {"kind": spec.kind, "children": [spec_to_dict(c) for c in spec.children]}
    if isinstance(spec, TranslationSpec):
        return {"kind": spec.kind, "rho": spec.rho, "width": spec.width}
    if isinstance(spec, (GaussianBlurSpec, AwgnSpec)):
        return {"kind": spec.kind, "sigma_max": spec.sigma_max}
    return {"kind": spec.kind, "lo": spec.lo, "hi": spec.hi}


def spec_from_dict(d: dict) -> TransformSpec:
    kind = d["kind"]
    if kind == "compose":
        return CompositionSpec(tuple(spec_from_dict(c) for c in d["children"]))
    if kind == "translation":
        return TranslationSpec(d["rho"], d["width"])
    if kind == "blur":
        return GaussianBlurSpec(d["sigma_max"])
    if kind == "awgn":
        return AwgnSpec(d["sigma_max"])
    cls = {"rotation": RotationSpec, "scale": ScaleSpec,
           "brightness": BrightnessSpec, "contrast": ContrastSpec}[kind]
    return cls(d["lo"], d["hi"])


# ---------------------------------------------------------------------------
# parameter sampling and grids


def sample_params(spec: TransformSpec, rng: np.random.Generator) -> TransformParams:
    """Draw parameters uniformly over the spec's space.

    Scalar ranges are uniform; translation is uniform over the disk of
    radius rho*width; composition children are drawn independently.
    """
    if isinstance(spec, CompositionSpec):
        return TransformParams("compose", tuple(sample_params(c, rng) for c in spec.children))
    if isinstance(spec, TranslationSpec):
        # area-uniform over the disk: radius ~ R*sqrt(U), angle uniform
        r = spec.radius * math.sqrt(rng.random())
        phi = rng.random() * 2.0 * math.pi
        return TransformParams("translation", (r * math.cos(phi), r * math.sin(phi)))
    if isinstance(spec, (GaussianBlurSpec, AwgnSpec)):
        # (0, sigma_max]: complement the half-open [0, 1) of random()
        return TransformParams(spec.kind, (1.0 - rng.random()) * spec.sigma_max)
    return TransformParams(spec.kind, rng.uniform(spec.lo, spec.hi))


def grid_params(spec: TransformSpec, r: int) -> list[TransformParams]:
    """Deterministic grid of r parameter points covering the spec's space."""
    if r < 2:
        raise ValueError("grid size r must be >= 2")
    if isinstance(spec, CompositionSpec):
        c = len(spec.children)
        g = max(2, math.ceil(r ** (1.0 / c)))
        child_grids = [grid_params(child, g) for child in spec.children]
        combos: list[TransformParams] = []
        for idx in np.ndindex(*[len(cg) for cg in child_grids]):
            combos.append(TransformParams(
                "compose", tuple(cg[i] for cg, i in zip(child_grids, idx))))
            if len(combos) >= r * r:
                break
        return combos
    if isinstance(spec, TranslationSpec):
        # center plus r-1 directions evenly spaced on the boundary circle
        pts = [TransformParams("translation", (0.0, 0.0))]
        R = spec.radius
        for j in range(r - 1):
            phi = 2.0 * math.pi * j / (r - 1)
            pts.append(TransformParams("translation", (R * math.cos(phi), R * math.sin(phi))))
        return pts[:r]
    if isinstance(spec, (GaussianBlurSpec, AwgnSpec)):
        # half-open (0, sigma_max]: even spacing that keeps the upper endpoint
        vals = np.linspace(spec.sigma_max / r, spec.sigma_max, r)
        return [TransformParams(spec.kind, float(v)) for v in vals]
    vals = np.linspace(spec.lo, spec.hi, r)
    return [TransformParams(spec.kind, float(v)) for v in vals]


# ---------------------------------------------------------------------------
# application


def apply(params: TransformParams, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply a concrete transformation to a (C, H, W) image in [0, 1].

    AWGN requires the seeded stream ``rng``; all other kinds are pure
    functions of (params, x).
    """
    kind = params.kind
    if kind == "compose":
        y = x
        for child in params.value:
            y = apply(child, y, rng)
        return y
    if kind == "brightness":
        return np.clip(x + params.value, 0.0, 1.0)
    if kind == "contrast":
        return np.clip(x * (1.0 + params.value), 0.0, 1.0)
    if kind == "rotation":
        return _warp_rotate(x, params.value)
    if kind == "translation":
        dx, dy = params.value
        return _warp_translate(x, dx, dy)
    if kind == "scale":
        return _warp_scale(x, params.value)
    if kind == "blur":
        return _gaussian_blur(x, params.value)
    if kind == "awgn":
        if rng is None:
            raise ValueError("awgn needs a seeded random stream")
        return np.clip(x + rng.normal(0.0, params.value, size=x.shape), 0.0, 1.0)
    raise ValueError(f"unknown transform kind {kind!r}")


def _bilinear_gather(x: np.ndarray, src_rows: np.ndarray, src_cols: np.ndarray) -> np.ndarray:
    """Sample x at fractional source coordinates; out-of-bounds reads give 0."""
    C, H, W = x.shape
    r0 = np.floor(src_rows).astype(np.int64)
    c0 = np.floor(src_cols).astype(np.int64)
    fr = src_rows - r0
    fc = src_cols - c0

    out = np.zeros((C,) + src_rows.shape, dtype=x.dtype)
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
        rs = np.where(valid, rr, 0)
        cs = np.where(valid, cc, 0)
        out += np.where(valid, x[:, rs, cs], 0.0) * w
    return np.clip(out, 0.0, 1.0)


def _output_grid(H: int, W: int):
    rows, cols = np.meshgrid(np.arange(H, dtype=np.float64),
                             np.arange(W, dtype=np.float64), indexing="ij")
    return rows, cols


def _warp_rotate(x: np.ndarray, angle_deg: float) -> np.ndarray:
    if angle_deg == 0.0:
        return x.copy()
    C, H, W = x.shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    phi = math.radians(angle_deg)
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    rows, cols = _output_grid(H, W)
    u = cols - cx
    v = rows - cy
    src_cols = cx + u * cos_p + v * sin_p
    src_rows = cy - u * sin_p + v * cos_p
    return _bilinear_gather(x, src_rows, src_cols)


def _warp_translate(x: np.ndarray, dx: float, dy: float) -> np.ndarray:
    if dx == 0.0 and dy == 0.0:
        return x.copy()
    C, H, W = x.shape
    rows, cols = _output_grid(H, W)
    return _bilinear_gather(x, rows - dy, cols - dx)


def _warp_scale(x: np.ndarray, s: float) -> np.ndarray:
    if s == 1.0:
        return x.copy()
    C, H, W = x.shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    rows, cols = _output_grid(H, W)
    src_rows = cy + (rows - cy) / s
    src_cols = cx + (cols - cx) / s
    return _bilinear_gather(x, src_rows, src_cols)


def blur_kernel(sigma: float) -> np.ndarray:
    """1-D kernel with taps proportional to exp(-k^2 / (2 sigma)).

    ``sigma`` is the squared kernel radius; taps are truncated at
    ceil(3*sqrt(sigma)) and renormalized to sum exactly 1.
    """
    if sigma <= 0.0:
        raise ValueError("blur sigma must be positive")
    radius = math.ceil(3.0 * math.sqrt(sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(k * k) / (2.0 * sigma))
    return kernel / kernel.sum()


def _gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    kernel = blur_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    C, H, W = x.shape
    # separable convolution, zero padding at borders
    padded = np.zeros((C, H + 2 * radius, W), dtype=np.float64)
    padded[:, radius:radius + H, :] = x
    tmp = np.zeros_like(x)
    for i, w in enumerate(kernel):
        tmp += w * padded[:, i:i + H, :]
    padded = np.zeros((C, H, W + 2 * radius), dtype=np.float64)
    padded[:, :, radius:radius + W] = tmp
    out = np.zeros_like(x)
    for i, w in enumerate(kernel):
        out += w * padded[:, :, i:i + W]
    return np.clip(out, 0.0, 1.0)
