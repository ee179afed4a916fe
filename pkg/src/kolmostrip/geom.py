"""Vectors, affine functions, hyperplanes, classical strips and seeded sampling.

Points are plain 1-D float64 numpy arrays; batches of points are ``(n, d)``
arrays. Dimension is a runtime parameter capped at :data:`MAX_DIM`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

MAX_DIM = 8
NORMAL_TOL = 1e-12


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Return ``x`` as a finite float64 vector, checking its dimension."""
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {p.shape}")
    if not 1 <= p.shape[0] <= MAX_DIM:
        raise DimensionError(f"dimension {p.shape[0]} outside 1..{MAX_DIM}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    return p


def as_points(xs, dim: int | None = None) -> np.ndarray:
    """Return ``xs`` as an ``(n, d)`` float64 array."""
    p = np.asarray(xs, dtype=np.float64)
    if p.ndim == 1:
        p = p.reshape(1, -1) if p.size else p.reshape(0, dim or 0)
    if p.ndim != 2:
        raise DimensionError(f"expected an (n, d) array, got shape {p.shape}")
    if dim is not None and p.shape[1] != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.shape[1]}")
    return p


@dataclass(frozen=True)
class AffineFunc:
    """``x -> <gradient, x> + offset``."""

    gradient: np.ndarray
    offset: float

    def __post_init__(self):
        g = as_point(self.gradient)
        g.setflags(write=False)
        object.__setattr__(self, "gradient", g)
        c = float(self.offset)
        if not np.isfinite(c):
            raise ValueError("offset must be finite")
        object.__setattr__(self, "offset", c)

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]

    def __call__(self, x) -> float:
        return eval_affine(self, x)


def eval_affine(a: AffineFunc, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.dim,):
        raise DimensionError(f"affine function has dimension {a.dim}, point has shape {x.shape}")
    return float(a.gradient @ x + a.offset)


@dataclass(frozen=True)
class Hyperplane:
    """The set ``{x : <normal, x> = offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = as_point(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > NORMAL_TOL:
            raise ValueError("hyperplane normal must have unit length")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_equation(cls, a, b: float) -> "Hyperplane":
        """Normalize ``{x : <a, x> = b}``."""
        a = as_point(a)
        s = np.linalg.norm(a)
        if s == 0.0:
            raise ValueError("degenerate hyperplane equation")
        n = a / s
        # renormalize once more so the unit-length check holds to the last ulp
        n = n / np.linalg.norm(n)
        return cls(n, b / s)

    def distance(self, xs) -> np.ndarray:
        xs = as_points(xs, self.normal.shape[0])
        return np.abs(xs @ self.normal - self.offset)


@dataclass(frozen=True)
class ClassicalStrip:
    """Closed slab ``{x : |<normal, x> - center| <= width / 2}``."""

    normal: np.ndarray
    center: float
    width: float

    def __post_init__(self):
        n = as_point(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > NORMAL_TOL:
            n = n / np.linalg.norm(n)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "center", float(self.center))
        if not self.width > 0:
            raise ValueError("strip width must be positive")
        object.__setattr__(self, "width", float(self.width))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def signed_gap(self, xs) -> np.ndarray:
        """``|<n, x> - b| - w/2``: negative inside, positive outside."""
        xs = as_points(xs, self.dim)
        return np.abs(xs @ self.normal - self.center) - self.width / 2


def strip_membership(s: ClassicalStrip, x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (s.dim,):
        raise DimensionError(f"strip has dimension {s.dim}, point has shape {x.shape}")
    return bool(abs(float(s.normal @ x) - s.center) <= s.width / 2)


def strip_membership_many(s: ClassicalStrip, xs) -> np.ndarray:
    xs = as_points(xs, s.dim)
    return np.abs(xs @ s.normal - s.center) <= s.width / 2


@dataclass(frozen=True)
class BoundingBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        lo = as_point(self.low)
        hi = as_point(self.high, lo.shape[0])
        if np.any(lo > hi):
            raise ValueError("bounding box has low > high")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.high - self.low))

    @property
    def center(self) -> np.ndarray:
        return (self.low + self.high) / 2

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.high - self.low))

    def contains(self, xs, pad: float = 0.0) -> np.ndarray:
        xs = as_points(xs, self.dim)
        return np.all((xs >= self.low - pad) & (xs <= self.high + pad), axis=1)

    def expanded(self, pad: float) -> "BoundingBox":
        return BoundingBox(self.low - pad, self.high + pad)

    def scaled(self, factor: float) -> "BoundingBox":
        half = (self.high - self.low) / 2 * factor
        return BoundingBox(self.center - half, self.center + half)


@dataclass
class SampleStream:
    """Counter-based random stream.

    Every draw builds a Philox generator keyed by ``(seed, counter)`` and then
    increments ``counter``, so a stream is fully described by those two
    integers and reproduces bit-identically across runs and platforms.
    """

    seed: int = 0
    counter: int = 0
    _lane: int = field(default=0, repr=False)

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, ((self._lane & 0xFFFFFFFF) << 32) | (self.counter & 0xFFFFFFFF)],
            dtype=np.uint64,
        )
        self.counter += 1
        return np.random.Generator(np.random.Philox(key=key))

    def split(self, lane: int) -> "SampleStream":
        """Independent child stream; children never share state with the parent."""
        return SampleStream(seed=self.seed, counter=0, _lane=(self._lane * 1_000_003 + lane + 1) & 0xFFFFFFFF)

    def uniform(self, low, high, size) -> np.ndarray:
        return self.generator().uniform(low, high, size)

    def integers(self, low, high, size) -> np.ndarray:
        return self.generator().integers(low, high, size)

    def normal(self, size) -> np.ndarray:
        return self.generator().standard_normal(size)


def sample_box(bb: BoundingBox, n: int, stream: SampleStream) -> np.ndarray:
    """``n`` points uniform in ``bb``; advances ``stream``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return np.empty((0, bb.dim))
    return stream.uniform(bb.low, bb.high, (n, bb.dim))


def sample_ball(center, radius: float, n: int, stream: SampleStream) -> np.ndarray:
    """``n`` points uniform in the closed ball."""
    center = as_point(center)
    d = center.shape[0]
    g = stream.generator()
    dirs = g.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = radius * g.uniform(0.0, 1.0, n) ** (1.0 / d)
    return center + dirs * r[:, None]


def unit_ball_volume(d: int) -> float:
    from math import gamma, pi

    return pi ** (d / 2) / gamma(d / 2 + 1)
