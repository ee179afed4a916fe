"""Polyhedral functions, their subdifferentials and exact proximal maps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._kernels_py import _solve_kkt
from .errors import DimensionError, ProxConvergenceError
from .geom import MAX_DIM, AffineFunc, as_point, as_points

ENUMERATION_MAX_PIECES = 12


@dataclass(frozen=True)
class Tolerances:
    """Classification tolerances.

    A piece i is active at y when ``f(y) - f_i(y) <= act_tol * (1 + |f(y)|)``.
    Two active gradients count as the same when they are within ``grad_tol``.
    """

    act_tol: float = 1e-11
    grad_tol: float = 1e-9
    cert_tol: float = 1e-7

    def __post_init__(self):
        if not (self.act_tol > 0 and self.grad_tol > 0 and self.cert_tol > 0):
            raise ValueError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerances()


class PolyhedralFunc:
    """``x -> max_i (<v_i, x> + c_i)``.

    Stored as a gradient matrix ``V`` (pieces x dim) and offset vector ``c``.
    Instances are immutable.
    """

    __slots__ = ("V", "c", "name")

    def __init__(self, V, c, name: str | None = None):
        V = np.array(V, dtype=np.float64, ndmin=2)
        c = np.array(c, dtype=np.float64, ndmin=1)
        if V.shape[0] == 0:
            raise ValueError("a polyhedral function needs at least one piece")
        if V.ndim != 2 or c.shape != (V.shape[0],):
            raise DimensionError(f"gradient matrix {V.shape} does not match offsets {c.shape}")
        if not 1 <= V.shape[1] <= MAX_DIM:
            raise DimensionError(f"dimension {V.shape[1]} outside 1..{MAX_DIM}")
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(c))):
            raise ValueError("pieces must be finite")
        V.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "name", name)

    def __setattr__(self, key, value):
        raise AttributeError("PolyhedralFunc is immutable")

    @classmethod
    def from_pieces(cls, pieces, name: str | None = None) -> "PolyhedralFunc":
        pieces = list(pieces)
        if not pieces:
            raise ValueError("a polyhedral function needs at least one piece")
        dims = {p.dim for p in pieces}
        if len(dims) != 1:
            raise DimensionError(f"pieces have mixed dimensions {sorted(dims)}")
        return cls([p.gradient for p in pieces], [p.offset for p in pieces], name)

    @classmethod
    def zero(cls, dim: int) -> "PolyhedralFunc":
        return cls(np.zeros((1, dim)), [0.0])

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    @property
    def n_pieces(self) -> int:
        return self.V.shape[0]

    @property
    def pieces(self) -> list[AffineFunc]:
        return [AffineFunc(v, c) for v, c in zip(self.V, self.c)]

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return evaluate(self, x)[0]
        return evaluate_many(self, x)[0]

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return PolyhedralFunc(self.V, self.c + float(other), self.name)
        return NotImplemented

    def scaled(self, s: float) -> "PolyhedralFunc":
        if s < 0:
            raise ValueError("negative scaling destroys convexity")
        return PolyhedralFunc(self.V * s, self.c * s)

    def lip(self) -> float:
        return lip(self)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<PolyhedralFunc{label} pieces={self.n_pieces} dim={self.dim}>"

    def __eq__(self, other):
        if not isinstance(other, PolyhedralFunc):
            return NotImplemented
        return np.array_equal(self.V, other.V) and np.array_equal(self.c, other.c)

    __hash__ = None


def evaluate(f: PolyhedralFunc, x) -> tuple[float, int]:
    """``(max_i f_i(x), lowest index attaining it)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (f.dim,):
        raise DimensionError(f"function has dimension {f.dim}, point has shape {x.shape}")
    vals = f.V @ x + f.c
    i = int(np.argmax(vals))
    return float(vals[i]), i


def evaluate_many(f: PolyhedralFunc, X) -> tuple[np.ndarray, np.ndarray]:
    X = as_points(X, f.dim)
    return _backend.kernels.eval_batch(f.V, f.c, X)


def lip(f: PolyhedralFunc) -> float:
    """Lipschitz constant ``max_i |v_i|``."""
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", f.V, f.V))))


def active_pieces(f: PolyhedralFunc, y, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    vals = f.V @ as_point(y, f.dim) + f.c
    fmax = vals.max()
    return np.nonzero(fmax - vals <= tol.act_tol * (1.0 + abs(fmax)))[0]


def differentiable_at(f: PolyhedralFunc, y, tol: Tolerances = DEFAULT_TOL) -> bool:
    """True iff every pair of pieces active at ``y`` has gradients within ``grad_tol``."""
    y = as_point(y, f.dim)
    nondiff, _, _ = _backend.kernels.classify_batch(f.V, f.c, y[None, :], tol.act_tol, tol.grad_tol)
    return not bool(nondiff[0])


@dataclass(frozen=True)
class ProxResult:
    """Prox point with its dual certificate.

    ``support`` and ``dual_weights`` give ``y = x - sum_k w_k v_{support_k}``;
    ``active`` lists every piece active at ``y``.
    """

    y: np.ndarray
    active: tuple[int, ...]
    differentiable: bool
    support: tuple[int, ...]
    dual_weights: np.ndarray
    flat_distance: float = math.inf


@dataclass(frozen=True)
class ProxBatch:
    """Vectorized prox output for ``n`` points."""

    x: np.ndarray
    y: np.ndarray
    support: np.ndarray
    weights: np.ndarray
    nondiff: np.ndarray
    flat_distance: np.ndarray
    piece: np.ndarray
    fallbacks: int = field(default=0)

    @property
    def displacement(self) -> np.ndarray:
        return self.x - self.y

    def __len__(self):
        return self.x.shape[0]


def _max_iter(m: int) -> int:
    return max(10 * m * m, 100)


def prox_many(f: PolyhedralFunc, X, tol: Tolerances = DEFAULT_TOL) -> ProxBatch:
    """Prox at each row of ``X``.

    Points where the active-set solver stalls are re-solved by exhaustive
    active-set enumeration when ``f`` has at most 12 pieces; otherwise a
    :class:`ProxConvergenceError` is raised.
    """
    X = as_points(X, f.dim)
    kern = _backend.kernels
    Y, W, L, status, nondiff, flat, piece = kern.prox_batch(
        f.V, f.c, X, tol.act_tol, tol.grad_tol, _max_iter(f.n_pieces)
    )
    bad = np.nonzero(status)[0]
    if bad.size:
        if f.n_pieces > ENUMERATION_MAX_PIECES:
            r = int(bad[0])
            raise ProxConvergenceError(
                f"active-set prox failed at {bad.size} point(s) and f has {f.n_pieces} > "
                f"{ENUMERATION_MAX_PIECES} pieces",
                best=Y[r].copy(),
                residual=_kkt_residual(f, X[r], Y[r]),
            )
        for r in bad:
            y, supp, lam = prox_enumerate(f, X[r])
            Y[r] = y
            W[r] = -1
            L[r] = 0.0
            W[r, : len(supp)] = supp
            L[r, : len(supp)] = lam
        nd, fl, pc = kern.classify_batch(f.V, f.c, Y[bad], tol.act_tol, tol.grad_tol)
        nondiff[bad] = nd
        flat[bad] = fl
        piece[bad] = pc
    return ProxBatch(X, Y, W, L, nondiff.astype(bool), flat, piece, int(bad.size))


def support_kinks(f: PolyhedralFunc, b: ProxBatch, tol: Tolerances = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Kink classification read off the dual certificate instead of activity slack.

    A prox point is a certified kink when two pieces with positive weight have
    gradients farther apart than ``grad_tol``. Returns that flag and the
    distance from ``y`` to the nearest such pair's equality hyperplane. Points
    where this disagrees with ``b.nondiff`` sit in the activity band.
    """
    n, k = b.support.shape
    nd = np.zeros(n, dtype=bool)
    dist = np.full(n, np.inf)
    for a in range(k):
        for c in range(a + 1, k):
            ia, ic = b.support[:, a], b.support[:, c]
            ok = (ia >= 0) & (ic >= 0) & (b.weights[:, a] > 0.0) & (b.weights[:, c] > 0.0)
            if not ok.any():
                continue
            r = np.nonzero(ok)[0]
            dv = f.V[ia[r]] - f.V[ic[r]]
            gap = np.linalg.norm(dv, axis=1)
            far = gap > tol.grad_tol
            r, dv, gap = r[far], dv[far], gap[far]
            nd[r] = True
            dc = f.c[ia[r]] - f.c[ic[r]]
            d = np.abs(np.einsum("ij,ij->i", b.y[r], dv) + dc) / gap
            dist[r] = np.minimum(dist[r], d)
    return nd, dist


def prox(f: PolyhedralFunc, x, tol: Tolerances = DEFAULT_TOL) -> ProxResult:
    """``argmin_y f(y) + |x - y|^2 / 2`` with its dual certificate."""
    x = as_point(x, f.dim)
    b = prox_many(f, x[None, :], tol)
    k = int(np.sum(b.support[0] >= 0))
    y = b.y[0]
    return ProxResult(
        y=y,
        active=tuple(int(i) for i in active_pieces(f, y, tol)),
        differentiable=not bool(b.nondiff[0]),
        support=tuple(int(i) for i in b.support[0, :k]),
        dual_weights=b.weights[0, :k].copy(),
        flat_distance=float(b.flat_distance[0]),
    )


def prox_enumerate(f: PolyhedralFunc, x) -> tuple[np.ndarray, list[int], list[float]]:
    """Exact prox by enumerating affinely independent working sets.

    For each candidate set the KKT system is solved in closed form; the set is
    accepted when its multipliers are nonnegative and no other piece exceeds
    the common value. Among accepted candidates the one with the smallest
    objective wins.
    """
    x = as_point(x, f.dim)
    V, c = f.V, f.c
    vals_x = V @ x + c
    best = None
    for k in range(1, min(f.n_pieces, f.dim + 1) + 1):
        for W in itertools.combinations(range(f.n_pieces), k):
            sol = _solve_kkt(V, vals_x, list(W), k)
            if sol is None:
                continue
            lam, t = sol
            if min(lam) < -1e-12:
                continue
            y = x - np.asarray(lam) @ V[list(W)]
            fy = float(np.max(V @ y + c))
            if fy - t > 1e-10 * (1.0 + abs(t)):
                continue
            obj = fy + 0.5 * float((x - y) @ (x - y))
            if best is None or obj < best[0]:
                best = (obj, y, list(W), [float(v) for v in lam])
    if best is None:
        raise ProxConvergenceError("no admissible working set found", best=x, residual=math.inf)
    return best[1], best[2], best[3]


def _kkt_residual(f: PolyhedralFunc, x, y) -> float:
    _, res = subgradient_certificate(f, x, y)
    return res


def min_norm_in_hull(P: np.ndarray, tol: float = 1e-15, max_iter: int = 500) -> tuple[float, np.ndarray]:
    """Distance from the origin to ``conv(rows of P)`` (Wolfe's algorithm).

    Returns the distance and the convex weights of the nearest point.
    """
    P = np.asarray(P, dtype=np.float64)
    m = P.shape[0]
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", P, P))))
    j0 = int(np.argmin(np.einsum("ij,ij->i", P, P)))
    S = [j0]
    lam = np.array([1.0])
    z = P[j0].copy()
    for _ in range(max_iter):
        j = int(np.argmin(P @ z))
        if z @ z - P[j] @ z <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            Ps = P[S]
            k = len(S)
            A = np.zeros((k + 1, k + 1))
            A[:k, :k] = Ps @ Ps.T
            A[:k, k] = 1.0
            A[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            try:
                alpha = np.linalg.solve(A, rhs)[:k]
            except np.linalg.LinAlgError:
                alpha = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
            if np.all(alpha > tol):
                lam = alpha
                break
            neg = alpha <= tol
            theta = min(1.0, float(np.min(lam[neg] / (lam[neg] - alpha[neg]))))
            lam = theta * alpha + (1 - theta) * lam
            keep = lam > tol
            if not np.any(keep):
                keep[np.argmax(lam)] = True
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam = lam / lam.sum()
        z = lam @ P[S]
    weights = np.zeros(m)
    weights[S] = lam
    return float(np.linalg.norm(z)), weights


def subgradient_certificate(f: PolyhedralFunc, x, y, tol: Tolerances = DEFAULT_TOL) -> tuple[bool, float]:
    """Check ``x - y`` against the subdifferential of ``f`` at ``y``.

    The residual is the distance from ``x - y`` to the convex hull of the
    gradients of pieces active at ``y``.
    """
    x = as_point(x, f.dim)
    y = as_point(y, f.dim)
    act = active_pieces(f, y, tol)
    g = x - y
    res, _ = min_norm_in_hull(f.V[act] - g)
    return res <= tol.cert_tol, res


def prox_oracle(
    f: PolyhedralFunc,
    x,
    grid_radius: float | None = None,
    levels: int = 6,
    points_per_axis: int = 21,
    inner_tol: float = 1e-13,
) -> np.ndarray:
    """Brute-force prox by nested multilevel grid refinement.

    Coordinates are minimized one at a time over the box ``x +- grid_radius``:
    each refinement samples ``points_per_axis`` values of one coordinate, the
    next coordinates being minimized recursively at every sample. The window
    then shrinks to the bracket around the best sample, which contains the
    minimizer because a partial minimum of a convex function is convex. The
    outermost coordinate gets ``levels`` refinements (each shrinks the window
    by ``(points_per_axis - 1) / 2``); inner coordinates refine until
    ``inner_tol`` relative precision.
    """
    x = as_point(x, f.dim)
    L = lip(f)
    R = L if grid_radius is None else float(grid_radius)
    if R < L * (1 - 1e-12):
        raise ValueError(f"grid_radius {R} is below lip(f) = {L}; the minimizer may lie outside")
    R = max(R, 1e-12)
    d = f.dim
    n = int(points_per_axis)
    if n < 5:
        raise ValueError("points_per_axis must be at least 5")
    V, c = f.V, f.c
    lo, hi = x - R, x + R
    shrink = 2.0 / (n - 1)
    inner = max(levels, math.ceil(math.log(inner_tol) / math.log(shrink)))
    per_axis = [levels] + [inner] * (d - 1)
    slope = 2 * L + 2 * R
    inner_err = 4 * slope * 2 * R * shrink**inner
    ticks = np.linspace(0.0, 1.0, n)

    def objective(P):
        return np.max(P @ V.T + c, axis=1) + 0.5 * np.sum((P - x) ** 2, axis=1)

    def nested(P):
        k, j = P.shape
        if j == d:
            return objective(P), P
        a = np.full(k, lo[j])
        b = np.full(k, hi[j])
        rows = np.arange(k)
        err = 0.0 if j == d - 1 else inner_err
        for _ in range(per_axis[j]):
            t = a[:, None] + (b - a)[:, None] * ticks[None, :]
            Q = np.concatenate([np.repeat(P, n, axis=0), t.reshape(-1, 1)], axis=1)
            vals, args = nested(Q)
            vals = vals.reshape(k, n)
            args = args.reshape(k, n, d)
            ib = np.argmin(vals, axis=1)
            vb = vals[rows, ib]
            near = vals <= vb[:, None] + 2 * err + 1e-15 * (1 + np.abs(vb[:, None]))
            first = np.argmax(near, axis=1)
            last = n - 1 - np.argmax(near[:, ::-1], axis=1)
            a = t[rows, np.maximum(first - 1, 0)]
            b = t[rows, np.minimum(last + 1, n - 1)]
        return vb, args[rows, ib]

    _, y = nested(np.zeros((1, 0)))
    return y[0].copy()


def prox_objective(f: PolyhedralFunc, x, y) -> float:
    x = as_point(x, f.dim)
    y = as_point(y, f.dim)
    return evaluate(f, y)[0] + 0.5 * float((x - y) @ (x - y))
