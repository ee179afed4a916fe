"""Generalized strips ``S(f) = {x : f is not differentiable at prox_f(x)}``.

A strip is stored through its polyhedral function; ``width_bound`` is the
representation bound ``2 * lip(f)``, an upper bound on the true width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .errors import DimensionError, PieceCapError
from .geom import BoundingBox, ClassicalStrip, Hyperplane, SampleStream, as_points, sample_box, unit_ball_volume
from .polyfun import DEFAULT_TOL, PolyhedralFunc, Tolerances, lip, prox_many

DEFAULT_PIECE_CAP = 4096
PRUNE_CERT_TOL = 1e-12


@dataclass(frozen=True)
class GenStrip:
    f: PolyhedralFunc

    @property
    def width_bound(self) -> float:
        return 2.0 * lip(self.f)

    @property
    def dim(self) -> int:
        return self.f.dim

    def __repr__(self):
        return f"<GenStrip pieces={self.f.n_pieces} width_bound={self.width_bound:.6g}>"


def from_classical(s: ClassicalStrip) -> GenStrip:
    """Embed a slab as ``S(|<v, x> + c|)`` with ``v = (w/2) n``, ``c = -(w/2) b``.

    ``S(|f0|) = f0^{-1}([-|v|^2, |v|^2])``, which is exactly the slab.
    """
    h = s.width / 2
    v = h * s.normal
    c = -h * s.center
    return GenStrip(PolyhedralFunc([v, -v], [c, -c]))


def member(S: GenStrip, x, tol: Tolerances = DEFAULT_TOL) -> bool:
    return bool(member_many(S, np.asarray(x, dtype=np.float64)[None, :], tol)[0])


def member_many(S: GenStrip, X, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    return prox_many(S.f, X, tol).nondiff


def _merge_raw(f: PolyhedralFunc, g: PolyhedralFunc) -> PolyhedralFunc:
    if f.dim != g.dim:
        raise DimensionError(f"cannot merge strips of dimension {f.dim} and {g.dim}")
    # pieces f_i + g_j + <v_i, u_j>, gradient v_i + u_j
    V = (f.V[:, None, :] + g.V[None, :, :]).reshape(-1, f.dim)
    c = (f.c[:, None] + g.c[None, :] + f.V @ g.V.T).reshape(-1)
    return PolyhedralFunc(V, c)


def merge(a: GenStrip, b: GenStrip, cap: int = DEFAULT_PIECE_CAP, do_prune: bool = True) -> GenStrip:
    """Strip containing ``S(a) | S(b)`` with ``lip(h) <= lip(f) + lip(g)``.

    ``h = max_{i,j} (f_i + g_j + <v_i, u_j>)``, optionally pruned. Raises
    :class:`PieceCapError` when the pruned piece count exceeds ``cap``.
    """
    h = _merge_raw(a.f, b.f)
    if do_prune:
        h = prune(h)
    if h.n_pieces > cap:
        raise PieceCapError(
            f"merged function has {h.n_pieces} pieces after pruning (cap {cap}); "
            "merge in a balanced order or raise the cap"
        )
    return GenStrip(h)


def merge_all(strips, cap: int = DEFAULT_PIECE_CAP) -> GenStrip:
    """Balanced binary merge with pruning after every step."""
    level = list(strips)
    if not level:
        raise ValueError("merge_all needs at least one strip")
    dims = {s.dim for s in level}
    if len(dims) != 1:
        raise DimensionError(f"strips have mixed dimensions {sorted(dims)}")
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1], cap) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def _dedupe(V, c):
    keys = {}
    V = V + 0.0  # -0.0 and 0.0 must hash alike
    for i in range(V.shape[0]):
        k = V[i].tobytes()
        j = keys.get(k)
        if j is None or c[i] > c[j]:
            keys[k] = i
    keep = np.array(sorted(keys.values()), dtype=np.int64)
    return keep


@dataclass
class _UpperHull:
    coords: np.ndarray  # gradients in their affine span
    basis: np.ndarray
    vertices: np.ndarray
    simplices: np.ndarray
    equations: np.ndarray


def _upper_hull(V, c) -> _UpperHull | None:
    """Upper convex hull of the lifted points ``(v_j, c_j)``, or None if qhull fails.

    Gradients are first expressed in their own affine span so that
    lower-dimensional gradient sets (parallel slabs) still get a hull.
    """
    m = V.shape[0]
    center = V.mean(axis=0)
    _, s, Wt = np.linalg.svd(V - center, full_matrices=False)
    scale = max(float(s[0]) if s.size else 0.0, 1e-300)
    r = int(np.sum(s > 1e-10 * scale))
    if r == 0 or m < r + 2:
        return None
    coords = (V - center) @ Wt[:r].T
    try:
        hull = ConvexHull(np.column_stack([coords, c]))
    except (QhullError, ValueError):
        return None
    up = hull.equations[:, r] > 1e-12
    if not np.any(up):
        return None
    simp = hull.simplices[up]
    return _UpperHull(coords, Wt[:r], np.unique(simp.ravel()), simp, hull.equations[up])


def _facet_certificates(H: _UpperHull, V, c, cand) -> np.ndarray:
    """Which candidates lie on or below the upper hull, with verified weights.

    Each candidate is located in the facet whose plane is lowest above it;
    its barycentric coordinates there are convex weights ``mu`` with
    ``sum mu_j v_j = v_k``, and ``sum mu_j c_j >= c_k`` is checked directly.
    """
    r = H.coords.shape[1]
    ok = np.zeros(cand.size, dtype=bool)
    E = H.equations
    for lo in range(0, cand.size, 2048):
        ks = cand[lo : lo + 2048]
        heights = -(H.coords[ks] @ E[:, :r].T + E[:, r + 1]) / E[:, r]
        best = np.argmin(heights, axis=1)
        for t, k in enumerate(ks):
            verts = H.simplices[best[t]]
            A = np.vstack([H.coords[verts].T, np.ones(len(verts))])
            rhs = np.concatenate([H.coords[k], [1.0]])
            try:
                mu = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(mu < -1e-14):
                continue
            mu = np.maximum(mu, 0.0)
            if abs(mu.sum() - 1.0) > PRUNE_CERT_TOL:
                continue
            ok[lo + t] = _certified(mu, V[verts], c[verts], V[k], c[k])
    return ok


def _certified(mu, Vs, cs, vk, ck) -> bool:
    """``sum mu_j f_j >= f_k`` up to a gradient residual relative to the gradients involved.

    The offset inequality is checked with no slack. If ``e`` is the gradient
    residual, dropping ``f_k`` changes the max by at most ``|e| |x|`` at
    ``x``, i.e. ``PRUNE_CERT_TOL * |v| * |x|``: rounding level. Exact
    rational certificates would be sharper but almost never hold for
    float-rounded merged gradients, so pieces would pile up.
    """
    gscale = max(float(np.max(np.abs(Vs))), float(np.max(np.abs(vk))))
    if float(np.max(np.abs(mu @ Vs - vk))) > PRUNE_CERT_TOL * gscale:
        return False
    return float(mu @ cs) >= float(ck)


def _dominated(V, c, k, others) -> bool:
    """LP certificate that piece ``k`` never exceeds the max of ``others``.

    Looks for convex weights ``mu`` with ``sum mu_j v_j = v_k`` and
    ``sum mu_j c_j >= c_k``; then ``f_k <= sum mu_j f_j <= max_j f_j``
    everywhere. The LP solution is polished on its support and re-verified
    in floating point; anything inconclusive keeps the piece.
    """
    Vo = V[others]
    co = c[others]
    n = len(others)
    A_eq = np.vstack([Vo.T, np.ones((1, n))])
    b_eq = np.concatenate([V[k], [1.0]])
    try:
        res = linprog(-co, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    except ValueError:
        return False
    if res.status != 0:
        return False
    mu = np.asarray(res.x)
    supp = np.nonzero(mu > 1e-12)[0]
    if supp.size == 0:
        return False
    sol, *_ = np.linalg.lstsq(A_eq[:, supp], b_eq, rcond=None)
    if np.any(sol < -1e-14):
        return False
    sol = np.maximum(sol, 0.0)
    if abs(sol.sum() - 1.0) > PRUNE_CERT_TOL:
        return False
    return _certified(sol, Vo[supp], co[supp], V[k], c[k])


def prune(f: PolyhedralFunc, lp_limit: int = 400) -> PolyhedralFunc:
    """Drop pieces that are globally dominated by the others.

    Exact duplicates keep the larger offset. Lifted points ``(v_k, c_k)``
    strictly inside the upper convex hull are removed once their facet
    weights verify the domination. When the hull is unavailable or a
    certificate fails, a linear program decides, one piece at a time; the
    LP is skipped (the piece kept) beyond ``lp_limit`` pieces. The function
    never changes.
    """
    V, c = f.V, f.c
    keep = _dedupe(V, c)
    if keep.size <= 1:
        return PolyhedralFunc(V[keep], c[keep], f.name)
    Vk, ck = V[keep], c[keep]
    H = _upper_hull(Vk, ck)
    if H is None:
        undecided = np.arange(keep.size)
        alive = np.ones(keep.size, dtype=bool)
    else:
        alive = np.zeros(keep.size, dtype=bool)
        alive[H.vertices] = True
        cand = np.nonzero(~alive)[0]
        certified = _facet_certificates(H, Vk, ck, cand)
        undecided = cand[~certified]
        alive[undecided] = True
    if keep.size <= lp_limit:
        for k in undecided:
            others = np.nonzero(alive)[0]
            others = others[others != k]
            if others.size and _dominated(Vk, ck, k, others):
                alive[k] = False
    idx = keep[alive]
    return PolyhedralFunc(V[idx], c[idx], f.name)


@dataclass(frozen=True)
class ImageHyperplanes:
    """Hyperplanes ``{f_i = f_j}`` (``k == -1``) or ``{(f_i - f_j)(x - v_k) = 0}``."""

    normals: np.ndarray
    offsets: np.ndarray
    provenance: np.ndarray

    def __len__(self):
        return self.normals.shape[0]

    @property
    def hyperplanes(self) -> list[Hyperplane]:
        return [Hyperplane(n, b) for n, b in zip(self.normals, self.offsets)]

    def distance(self, X) -> np.ndarray:
        """Distance from each row of ``X`` to the union of the hyperplanes."""
        X = as_points(X)
        if len(self) == 0:
            return np.full(X.shape[0], np.inf)
        out = np.full(X.shape[0], np.inf)
        for lo in range(0, len(self), 512):
            D = np.abs(X @ self.normals[lo : lo + 512].T - self.offsets[lo : lo + 512])
            out = np.minimum(out, D.min(axis=1))
        return out


def _pieces_meet(V, c, i, j) -> bool:
    """Is there a point where pieces ``i`` and ``j`` are both maximal?"""
    A_ub = V - V[i]
    b_ub = c[i] - c
    A_eq = (V[i] - V[j])[None, :]
    b_eq = np.array([c[j] - c[i]])
    res = linprog(
        np.zeros(V.shape[1]), A_ub=A_ub, b_ub=b_ub + 1e-12 * (1 + np.abs(b_ub)), A_eq=A_eq, b_eq=b_eq,
        bounds=(None, None), method="highs",
    )
    # anything but a proven infeasibility keeps the pair
    return res.status != 2


def image_hyperplanes(
    S: GenStrip, shifted: bool = False, adjacent_only: bool = False, tol: Tolerances = DEFAULT_TOL
) -> ImageHyperplanes:
    """Piece-equality hyperplanes, which contain ``prox_f(S)``.

    Every pair with distinct gradients contributes. ``adjacent_only`` keeps
    just the pairs that are simultaneously maximal somewhere (one LP per
    pair), which still contains the image. With ``shifted=True`` the
    candidates ``{(f_i - f_j)(x - v_k) = 0}`` that cover the boundary of ``S``
    itself are appended.
    """
    V, c = S.f.V, S.f.c
    m = V.shape[0]
    I, J = np.triu_indices(m, 1)
    D = V[I] - V[J]
    nrm = np.linalg.norm(D, axis=1)
    ok = nrm > tol.grad_tol
    if adjacent_only:
        ok &= np.array([_pieces_meet(V, c, i, j) for i, j in zip(I, J)], dtype=bool)
    I, J, D, nrm = I[ok], J[ok], D[ok], nrm[ok]
    normals = D / nrm[:, None]
    offsets = (c[J] - c[I]) / nrm
    prov = np.column_stack([I, J, np.full(I.shape[0], -1)])
    if shifted and I.size:
        # (v_i - v_j).(x - v_k) + c_i - c_j = 0
        shift = (D @ V.T) / nrm[:, None]
        K = np.broadcast_to(np.arange(m), shift.shape)
        normals = np.concatenate([normals, np.repeat(normals, m, axis=0)])
        offsets = np.concatenate([offsets, (offsets[:, None] + shift).ravel()])
        prov = np.concatenate(
            [prov, np.column_stack([np.repeat(I, m), np.repeat(J, m), K.ravel()])]
        )
    return ImageHyperplanes(normals, offsets, prov.astype(np.int64))


def gamma_upper_bound(cover) -> float:
    return math.fsum(s.width_bound for s in cover)


def measure_constant(d: int, r: float, shape: str = "cube") -> float:
    """``c`` with ``area(S(f) & K) <= c * lip(f)`` for the window ``K``.

    ``S(f)`` is where the Laplacian of the Moreau envelope of ``f`` is at
    least 1, and the envelope's gradient is bounded by ``lip(f)``, so the
    divergence theorem bounds the area by ``lip(f) * perimeter(K)``.
    ``shape`` is ``"cube"`` for ``[-r, r]^d`` or ``"ball"`` for ``B(0, r)``.
    """
    if shape == "cube":
        return 2 * d * (2 * r) ** (d - 1)
    if shape == "ball":
        return d * unit_ball_volume(d) * r ** (d - 1)
    raise ValueError(f"unknown window shape {shape!r}")


def strip_area_monte_carlo(
    S: GenStrip, r: float, n: int, stream: SampleStream, tol: Tolerances = DEFAULT_TOL
) -> tuple[float, float]:
    """Monte-Carlo ``(area, stderr)`` of ``S & [-r, r]^d``."""
    bb = BoundingBox(np.full(S.dim, -r), np.full(S.dim, r))
    X = sample_box(bb, n, stream)
    p = float(np.mean(member_many(S, X, tol)))
    vol = bb.volume
    return p * vol, vol * math.sqrt(max(p * (1 - p), 1.0 / n) / n)
