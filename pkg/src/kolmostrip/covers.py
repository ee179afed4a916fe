"""Explicit strip covers: convex neighborhoods, DC graphs, C^2 surfaces, annuli."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import PreconditionError
from .geom import BoundingBox, SampleStream, as_points, sample_box
from .gstrip import GenStrip, gamma_upper_bound, member_many, prune
from .polyfun import DEFAULT_TOL, PolyhedralFunc, Tolerances, lip, min_norm_in_hull

CONTAINMENT_SAMPLES = 10_000


def _sum_down(a: float, b: float) -> float:
    """The largest float not above the exact sum ``a + b``."""
    s = a + b
    return s if Fraction(s) <= Fraction(a) + Fraction(b) else math.nextafter(s, -math.inf)


def _row_norms(V: np.ndarray) -> np.ndarray:
    # same arithmetic as polyfun.lip, so the caps below are seen exactly there
    return np.sqrt(np.einsum("ij,ij->i", V, V))


def _cap_norms(V: np.ndarray, L: float, rescale: bool) -> np.ndarray:
    """Rows scaled to norm ``L`` (or only those above ``L``), nudged down until ``lip`` sees ``<= L``."""
    V = np.array(V, dtype=np.float64)
    n = _row_norms(V)
    sel = np.ones(V.shape[0], dtype=bool) if rescale else n > L
    V[sel] *= (L / n[sel])[:, None]
    while True:
        over = _row_norms(V) > L
        if not np.any(over):
            return V
        V[over] *= 1 - 2.0**-52


@dataclass(frozen=True)
class ConvexBody:
    """A bounded convex set given by a point cloud or by oracles.

    Oracle bodies provide ``inside(X) -> bool`` (closed membership),
    ``interior(X) -> bool`` and a bounding box; ``distance`` (to the set,
    zero inside) is optional and used only for containment checks.
    ``center`` must be an interior point. ``extent(dirs)``, when given,
    returns the exact distance from ``center`` to the boundary along each
    unit direction and replaces bisection.
    """

    dim: int
    points: np.ndarray | None = None
    inside: Callable | None = None
    interior: Callable | None = None
    bbox: BoundingBox | None = None
    center: np.ndarray | None = None
    distance: Callable | None = None
    extent: Callable | None = None
    name: str = "convex body"

    @classmethod
    def from_points(cls, pts, name: str = "polytope") -> "ConvexBody":
        P = as_points(pts)
        if P.shape[0] == 0:
            raise ValueError("point cloud is empty")
        return cls(dim=P.shape[1], points=P, bbox=BoundingBox(P.min(0), P.max(0)), center=P.mean(0), name=name)

    @classmethod
    def ball(cls, center, radius: float) -> "ConvexBody":
        c = np.asarray(center, dtype=np.float64)
        R = float(radius)
        if not R > 0:
            raise ValueError("radius must be positive")
        return cls(
            dim=c.shape[0],
            inside=lambda X: np.linalg.norm(as_points(X) - c, axis=1) <= R,
            interior=lambda X: np.linalg.norm(as_points(X) - c, axis=1) < R,
            bbox=BoundingBox(c - R, c + R),
            center=c,
            distance=lambda X: np.maximum(np.linalg.norm(as_points(X) - c, axis=1) - R, 0.0),
            extent=lambda dirs: np.full(dirs.shape[0], R),
            name=f"ball(r={R:g})",
        )

    def boundary_dense(self, spacing: float) -> tuple[np.ndarray, float]:
        """Boundary points with gap at most about ``spacing``, plus the measured gap.

        Point clouds return their hull vertices (gap 0: the hull is exact).
        Oracle bodies are probed by bisection along rays from ``center``;
        only d = 2 and d = 3 are supported.
        """
        if self.points is not None:
            try:
                hull = ConvexHull(self.points)
            except (QhullError, ValueError) as exc:
                raise PreconditionError(
                    f"point cloud is degenerate (lower-dimensional); thicken the input: {exc}"
                ) from exc
            return self.points[hull.vertices], 0.0
        if self.dim not in (2, 3):
            raise PreconditionError("oracle convex bodies are supported in dimension 2 and 3 only")
        reach = float(np.max(np.linalg.norm(_box_corners(self.bbox) - self.center, axis=1)))
        if self.dim == 2:
            k = max(16, int(math.ceil(2 * math.pi * reach / spacing)))
            t = np.arange(k) * (2 * math.pi / k)
            dirs = np.column_stack([np.cos(t), np.sin(t)])
        else:
            k = max(64, int(math.ceil(4 * math.pi * reach**2 / spacing**2)))
            i = np.arange(k) + 0.5
            phi = np.arccos(1 - 2 * i / k)
            theta = math.pi * (1 + 5**0.5) * i
            dirs = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
        c = self.center
        if self.extent is not None:
            lo = self.extent(dirs)
        else:
            if not self.inside(c[None, :])[0]:
                raise PreconditionError("center of the convex body is not inside it")
            lo = np.zeros(k)
            hi = np.full(k, reach)
            for _ in range(55):
                mid = (lo + hi) / 2
                ins = self.inside(c + dirs * mid[:, None])
                lo = np.where(ins, mid, lo)
                hi = np.where(ins, hi, mid)
        pts = c + dirs * lo[:, None]
        if self.dim == 2:
            gap = float(np.max(np.linalg.norm(pts - np.roll(pts, 1, axis=0), axis=1)))
        else:
            gap = float(reach * math.sqrt(8 * math.pi / k))
        return pts, gap

    def dist(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        if self.distance is not None:
            return self.distance(X)
        if self.points is not None:
            hull = ConvexHull(self.points)
            verts = self.points[hull.vertices]
            if self.dim == 2:
                return _polygon_distance(X, verts, hull.equations)
            return np.array([min_norm_in_hull(verts - x)[0] for x in X])
        raise ValueError("this convex body has no distance oracle")

    def in_interior(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        if self.interior is not None:
            return self.interior(X)
        hull = ConvexHull(self.points)
        return np.all(X @ hull.equations[:, :-1].T + hull.equations[:, -1] < -1e-12, axis=1)


def _polygon_distance(X, verts, eqs) -> np.ndarray:
    """Distance to a convex polygon with vertices in hull order (zero inside)."""
    inside = np.all(X @ eqs[:, :-1].T + eqs[:, -1] <= 0, axis=1)
    A = verts
    B = np.roll(verts, -1, axis=0)
    AB = B - A
    t = np.einsum("nkd,kd->nk", X[:, None, :] - A[None], AB) / np.einsum("kd,kd->k", AB, AB)
    t = np.clip(t, 0.0, 1.0)
    P = A[None] + t[..., None] * AB[None]
    d = np.min(np.linalg.norm(X[:, None, :] - P, axis=2), axis=1)
    return np.where(inside, 0.0, d)


@dataclass(frozen=True)
class ScalarField:
    """A scalar function on a box ``U`` with declared constants.

    ``f`` and ``grad`` act on ``(n, k)`` arrays. Without ``grad``, central
    differences with step ``1e-6 * box size`` are used.
    """

    f: Callable
    U: BoundingBox
    L: float
    grad: Callable | None = None
    M: float | None = None
    name: str = "f"

    @property
    def dim(self) -> int:
        return self.U.dim

    def __call__(self, X) -> np.ndarray:
        return np.asarray(self.f(as_points(X, self.dim)), dtype=np.float64).reshape(-1)

    def gradient(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        if self.grad is not None:
            return np.asarray(self.grad(X), dtype=np.float64).reshape(X.shape)
        h = 1e-6 * max(float(np.max(self.U.high - self.U.low)), 1e-300)
        G = np.empty_like(X)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            G[:, k] = (self(X + e) - self(X - e)) / (2 * h)
        return G


@dataclass
class CoverResult:
    strips: list
    total_width_bound: float
    target_description: str
    containment_samples_checked: int = 0
    violations: int = 0
    slack: float = 0.0
    band_resampled: int = 0
    details: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.violations == 0


def _cover_result(strips, description, slack=0.0, **details) -> CoverResult:
    return CoverResult(list(strips), gamma_upper_bound(strips), description, slack=slack, details=details)


def _check_containment(cover: CoverResult, X: np.ndarray, tol: Tolerances) -> CoverResult:
    """Count target samples not in any strip of the cover."""
    covered = np.zeros(X.shape[0], dtype=bool)
    for s in cover.strips:
        todo = ~covered
        if not np.any(todo):
            break
        covered[todo] = member_many(s, X[todo], tol)
    cover.containment_samples_checked += int(X.shape[0])
    cover.violations += int(np.sum(~covered))
    return cover


def ordered_net(P: np.ndarray, radius: float) -> np.ndarray:
    """Net of a closed polyline ``P`` (points in boundary order) in one pass.

    A point is kept when the next one would be farther than ``radius`` from
    the last kept point, so every point lies within ``radius`` of a kept one.
    """
    keep = [0]
    last = P[0]
    for i in range(1, P.shape[0]):
        if np.linalg.norm(P[i] - last) > radius:
            keep.append(i - 1 if keep[-1] != i - 1 else i)
            last = P[keep[-1]]
    return P[sorted(set(keep))]


def greedy_net(P: np.ndarray, radius: float) -> np.ndarray:
    """Farthest-point insertion until every point of ``P`` is within ``radius``."""
    chosen = [0]
    d = np.linalg.norm(P - P[0], axis=1)
    while d.max() > radius:
        j = int(np.argmax(d))
        chosen.append(j)
        d = np.minimum(d, np.linalg.norm(P - P[j], axis=1))
    return P[chosen]


def polytope_halfspaces(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit outward normals ``n_i`` and offsets ``e_i`` with ``conv(D) = {n_i.x + e_i <= 0}``."""
    try:
        hull = ConvexHull(D)
    except (QhullError, ValueError) as exc:
        raise PreconditionError(f"net is degenerate; thicken the input: {exc}") from exc
    eq = np.round(hull.equations, 12)
    _, first = np.unique(eq, axis=0, return_index=True)
    eq = hull.equations[np.sort(first)]
    return eq[:, :-1], eq[:, -1]


def convex_neighborhood_cover(
    C: ConvexBody,
    r: float,
    eps: float,
    samples: int = CONTAINMENT_SAMPLES,
    stream: SampleStream | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> CoverResult:
    """One strip containing ``C_r \\ Int C`` with width bound ``<= 2 (r + eps)``.

    A net ``D`` of the boundary of ``C`` gives the polytope ``P = conv(D)``
    with ``P <= C <= P + B(eps)``; each facet ``n_i.x + e_i <= 0`` becomes the
    piece ``(r + eps)(n_i.x + e_i)`` and ``f = max(0, max_i f_i)``.
    ``samples = 0`` skips the containment check.
    """
    if not (r > 0 and eps > 0):
        raise ValueError("r and eps must be positive")
    pts, gap = C.boundary_dense(eps / 8)
    if gap == 0.0:
        D = pts
    elif C.dim == 2:
        D = ordered_net(pts, eps - gap)
    else:
        D = greedy_net(pts, eps - gap)
    normals, offsets = polytope_halfspaces(D)
    L = _sum_down(float(r), float(eps))
    V = _cap_norms(normals, L, rescale=True)
    c = offsets * (L / np.linalg.norm(normals, axis=1))
    f = PolyhedralFunc(np.vstack([np.zeros(C.dim), V]), np.concatenate([[0.0], c]), name="neighborhood")
    cover = _cover_result([GenStrip(f)], f"{C.name} neighborhood r={r:g}", slack=2 * eps, net_size=int(D.shape[0]))
    if samples:
        stream = stream or SampleStream(0)
        X = sample_neighborhood_shell(C, r, samples, stream)
        _check_containment(cover, X, tol)
    return cover


def sample_neighborhood_shell(C: ConvexBody, r: float, n: int, stream: SampleStream) -> np.ndarray:
    """``n`` points of ``C_r \\ Int C`` by rejection from the padded bounding box."""
    box = C.bbox.expanded(r)
    out = []
    got = 0
    while got < n:
        X = sample_box(box, max(4 * n, 1000), stream)
        X = X[~C.in_interior(X)]
        X = X[C.dist(X) <= r]
        out.append(X)
        got += X.shape[0]
    return np.vstack(out)[:n]


def convex_polyhedral_approx(
    f: ScalarField,
    U: BoundingBox | None = None,
    eps: float = 0.1,
    net: np.ndarray | None = None,
    spacing: float | None = None,
    check_pairs: int = 1000,
    stream: SampleStream | None = None,
) -> PolyhedralFunc:
    """Tangent-plane minorant ``g = max_i (<v_i, x - x_i> + f(x_i))``.

    The default net is a grid on ``U`` with every point within
    ``eps / (2 L)`` of a node. Midpoint convexity is spot-checked on
    ``check_pairs`` random pairs first.
    """
    U = U or f.U
    k = U.dim
    if check_pairs:
        stream = stream or SampleStream(0)
        A = sample_box(U, check_pairs, stream)
        B = sample_box(U, check_pairs, stream)
        M = (A + B) / 2
        gap = f(M) - (f(A) + f(B)) / 2
        bad = np.nonzero(gap > 1e-9 * (1 + np.abs(f(M))))[0]
        if bad.size:
            i = int(bad[0])
            raise PreconditionError(
                f"{f.name} is not convex: midpoint test fails at a={A[i].tolist()}, b={B[i].tolist()}, "
                f"mid={M[i].tolist()} (excess {gap[i]:.3g})"
            )
    if net is None:
        if spacing is None:
            spacing = eps / (f.L * math.sqrt(k)) if f.L > 0 else math.inf
        axes = []
        for lo, hi in zip(U.low, U.high):
            cnt = max(1, int(math.ceil((hi - lo) / spacing)))
            axes.append(lo + (np.arange(cnt) + 0.5) * (hi - lo) / cnt)
        net = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    net = as_points(net, k)
    G = f.gradient(net)
    norms = np.linalg.norm(G, axis=1)
    if np.any(norms > f.L * (1 + 1e-9) + 1e-15):
        i = int(np.argmax(norms))
        raise PreconditionError(f"gradient norm {norms[i]:.6g} at {net[i].tolist()} exceeds declared L={f.L:g}")
    G = _cap_norms(G, f.L, rescale=False)
    c = f(net) - np.einsum("ij,ij->i", G, net)
    return prune(PolyhedralFunc(G, c))


DC_LIP_MAX = 1.0 / 3.0


def dc_graph_cover(g: PolyhedralFunc, h: PolyhedralFunc, eps: float) -> GenStrip:
    """Strip containing the band ``|y - (g - h)(x)| <= eps``, width bound ``<= 8 eps``.

    ``F(x, y) = 2 eps max(2 g(x) - y, y + 2 h(x))`` on ``R^{d-1} x R``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if g.dim != h.dim:
        raise PreconditionError("g and h must share a dimension")
    for name, fn in (("g", g), ("h", h)):
        L = lip(fn)
        if L > DC_LIP_MAX:
            raise PreconditionError(f"lip({name}) = {L!r} exceeds 1/3")
    s = 2 * eps
    Vg = np.column_stack([2 * s * g.V, np.full(g.n_pieces, -s)])
    Vh = np.column_stack([2 * s * h.V, np.full(h.n_pieces, s)])
    return GenStrip(PolyhedralFunc(np.vstack([Vg, Vh]), np.concatenate([2 * s * g.c, 2 * s * h.c]), name="dc"))


def _box_corners(U: BoundingBox) -> np.ndarray:
    grids = np.meshgrid(*[[lo, hi] for lo, hi in zip(U.low, U.high)], indexing="ij")
    return np.stack(grids, axis=-1).reshape(-1, U.dim)


def surface_cover(
    f: ScalarField,
    eps: float,
    samples: int = CONTAINMENT_SAMPLES,
    stream: SampleStream | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> CoverResult:
    """One strip over the graph of ``f`` on ``W = f.U`` with width bound ``<= 16 eps``.

    Requires ``|grad f| <= 1/6`` on ``W`` and ``W`` inside ``B(0, 1/(6M))``.
    Then ``g = f + M|x|^2/2`` and ``h = M|x|^2/2`` are convex and
    1/3-Lipschitz on ``W``; their polyhedral minorants (gap ``<= eps``) feed
    :func:`dc_graph_cover` at ``2 eps``.
    """
    if f.M is None:
        raise PreconditionError("surface_cover needs the gradient-Lipschitz constant M")
    stream = stream or SampleStream(0)
    W = f.U
    M = float(f.M)
    corners = _box_corners(W)
    if M > 0 and np.max(np.linalg.norm(corners, axis=1)) > 1 / (6 * M):
        raise PreconditionError(f"domain is not inside B(0, 1/(6M)) = B(0, {1 / (6 * M):.6g}); rescale the chart")
    probe = np.vstack([corners, sample_box(W, 1000, stream)])
    gn = np.linalg.norm(f.gradient(probe), axis=1)
    if gn.max() > 1 / 6 + 1e-12:
        raise PreconditionError(f"|grad f| reaches {gn.max():.6g} > 1/6 on the domain; rescale the chart")

    sq = lambda X: 0.5 * M * np.sum(as_points(X) ** 2, axis=1)
    g_field = ScalarField(
        lambda X: f(X) + sq(X), W, DC_LIP_MAX, grad=lambda X: f.gradient(X) + M * as_points(X), name="f + M|x|^2/2"
    )
    h_field = ScalarField(sq, W, DC_LIP_MAX, grad=lambda X: M * as_points(X), name="M|x|^2/2")
    g = convex_polyhedral_approx(g_field, W, eps, stream=stream.split(1))
    h = convex_polyhedral_approx(h_field, W, eps, stream=stream.split(2))
    S = dc_graph_cover(g, h, 2 * eps)
    cover = _cover_result([S], f"graph of {f.name}", slack=0.0, g_pieces=g.n_pieces, h_pieces=h.n_pieces)
    if samples:
        X = sample_box(W, samples, stream.split(3))
        _check_containment(cover, np.column_stack([X, f(X)]), tol)
    return cover


def radial_cover(
    intervals,
    eps: float,
    dim: int = 2,
    samples: int = CONTAINMENT_SAMPLES,
    stream: SampleStream | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> CoverResult:
    """One annulus strip per interval ``[a, b]``: the neighborhood cover of ``B(0, a)`` with ``r = b - a``.

    Total width bound ``<= 2 sum(b - a) + 2 n eps``; the second term is reported as slack.
    """
    iv = sorted((float(a), float(b)) for a, b in intervals)
    for a, b in iv:
        if not 0 < a < b:
            raise PreconditionError(f"interval [{a}, {b}] is not a nondegenerate subset of (0, inf)")
    for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
        if a1 <= b0:
            raise PreconditionError(f"intervals [{a0}, {b0}] and [{a1}, {b1}] overlap")
    stream = stream or SampleStream(0)
    strips = []
    checked = viol = 0
    for i, (a, b) in enumerate(iv):
        cov = convex_neighborhood_cover(
            ConvexBody.ball(np.zeros(dim), a), b - a, eps, samples=samples, stream=stream.split(i), tol=tol
        )
        strips += cov.strips
        checked += cov.containment_samples_checked
        viol += cov.violations
    out = _cover_result(strips, f"radial shells {iv}", slack=2 * eps * len(iv))
    out.containment_samples_checked = checked
    out.violations = viol
    return out
