"""Target sets: membership oracles, boundary samplers, exact areas."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .covers import ScalarField
from .errors import PreconditionError
from .geom import BoundingBox, SampleStream, as_points, sample_box

BAND = 1e-9

OUTSIDE = 0
INSIDE = 1
BOUNDARY = 2


@dataclass(frozen=True)
class SetSpec:
    """A bounded set ``A`` in the plane (or ``R^d``).

    ``classify(X)`` returns ``INSIDE``, ``OUTSIDE`` or ``BOUNDARY`` (within
    :data:`BAND` of the boundary) per row. ``boundary_sampler(n, stream)``
    returns points on the boundary. ``segments`` lists boundary segments for
    polygonal sets as an ``(m, 2, 2)`` array.
    """

    name: str
    dim: int
    classify: Callable
    boundary_sampler: Callable
    bbox: BoundingBox
    exact_area: float | None = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    segments: np.ndarray | None = None

    def contains(self, X) -> np.ndarray:
        """Closed membership (inside or on the boundary band)."""
        return self.classify(as_points(X, self.dim)) != OUTSIDE

    def sample_boundary(self, n: int, stream: SampleStream) -> np.ndarray:
        return self.boundary_sampler(n, stream)

    def sample_inside(self, n: int, stream: SampleStream) -> np.ndarray:
        """``n`` points of ``A`` (closed) by rejection from the bounding box."""
        out = []
        got = 0
        for _ in range(10_000):
            if got >= n:
                break
            X = sample_box(self.bbox, max(2 * n, 256), stream)
            X = X[self.contains(X)]
            out.append(X)
            got += X.shape[0]
        else:
            raise PreconditionError(f"{self.name}: rejection sampling found too few points")
        return np.vstack(out)[:n]


def _segment_distance(X, A, B) -> np.ndarray:
    """Distance from each row of ``X`` to the union of segments ``[A_k, B_k]``."""
    out = np.full(X.shape[0], np.inf)
    AB = B - A
    L2 = np.einsum("kd,kd->k", AB, AB)
    for lo in range(0, A.shape[0], 256):
        a, ab, l2 = A[lo : lo + 256], AB[lo : lo + 256], L2[lo : lo + 256]
        rel = X[:, None, :] - a[None]
        t = np.clip(np.einsum("nkd,kd->nk", rel, ab) / l2, 0.0, 1.0)
        d = np.linalg.norm(rel - t[..., None] * ab[None], axis=2)
        out = np.minimum(out, d.min(axis=1))
    return out


def _crossings_inside(X, A, B) -> np.ndarray:
    """Even-odd rule for the polygon with edges ``[A_k, B_k]``."""
    inside = np.zeros(X.shape[0], dtype=bool)
    x, y = X[:, 0:1], X[:, 1:2]
    for lo in range(0, A.shape[0], 256):
        ax, ay = A[lo : lo + 256, 0], A[lo : lo + 256, 1]
        bx, by = B[lo : lo + 256, 0], B[lo : lo + 256, 1]
        straddle = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = ax + (y - ay) * (bx - ax) / (by - ay)
        hit = straddle & (x < xc)
        inside ^= (np.sum(hit, axis=1) % 2).astype(bool)
    return inside


def _segment_sampler(A, B):
    lengths = np.linalg.norm(B - A, axis=1)
    cum = np.cumsum(lengths)
    total = float(cum[-1])

    def sample(n: int, stream: SampleStream) -> np.ndarray:
        g = stream.generator()
        s = g.uniform(0.0, total, n)
        k = np.minimum(np.searchsorted(cum, s, side="right"), A.shape[0] - 1)
        t = (s - (cum[k] - lengths[k])) / lengths[k]
        t = np.clip(t, 0.0, 1.0)
        return A[k] + t[:, None] * (B[k] - A[k])

    return sample


def _segments_intersect(A, B) -> bool:
    """True if two non-adjacent edges of the closed polygon intersect."""
    m = A.shape[0]

    def orient(p, q, r):
        a = q - p
        b = r - p
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        scale = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
        return np.where(np.abs(cross) <= 1e-12 * scale, 0.0, np.sign(cross))

    for i in range(m):
        j = np.arange(i + 2, m)
        if i == 0:
            j = j[j != m - 1]
        if j.size == 0:
            continue
        p, q = A[i], B[i]
        r, s = A[j], B[j]
        o1, o2 = orient(p, q, r), orient(p, q, s)
        o3, o4 = orient(r, s, p), orient(r, s, q)
        collinear = (o1 == 0) & (o2 == 0)
        proper = ~collinear & (o1 * o2 <= 0) & (o3 * o4 <= 0)
        if np.any(proper):
            return True
        if np.any(collinear):
            # same line: overlap of the projections onto the edge direction
            d = q - p
            t0 = (r[collinear] - p) @ d
            t1 = (s[collinear] - p) @ d
            if np.any((np.maximum(t0, t1) >= 0) & (np.minimum(t0, t1) <= d @ d)):
                return True
    return False


def _shoelace(V) -> float:
    x, y = V[:, 0], V[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def make_polygon(vertices, name: str = "polygon", kind: str = "polygon", exact_area: float | None = None) -> SetSpec:
    """Simple polygon from its vertices in order (either orientation)."""
    V = as_points(vertices, 2)
    if V.shape[0] < 3:
        raise PreconditionError("a polygon needs at least 3 vertices")
    A = V
    B = np.roll(V, -1, axis=0)
    if np.any(np.all(A == B, axis=1)):
        raise PreconditionError("polygon has repeated consecutive vertices")
    if _segments_intersect(A, B):
        raise PreconditionError("polygon is self-intersecting")

    def classify(X):
        X = as_points(X, 2)
        out = np.where(_crossings_inside(X, A, B), INSIDE, OUTSIDE)
        out[_segment_distance(X, A, B) <= BAND] = BOUNDARY
        return out

    area = _shoelace(V) if exact_area is None else exact_area
    return SetSpec(
        name=name,
        dim=2,
        classify=classify,
        boundary_sampler=_segment_sampler(A, B),
        bbox=BoundingBox(V.min(0), V.max(0)),
        exact_area=area,
        kind=kind,
        params={"vertices": V},
        segments=np.stack([A, B], axis=1),
    )


def make_square(side: float = 1.0) -> SetSpec:
    """The square ``[0, side]^2``."""
    s = float(side)
    return make_polygon([[0, 0], [s, 0], [s, s], [0, s]], name="square", kind="square", exact_area=s * s)


def make_disk(r: float = 1.0, center=(0.0, 0.0)) -> SetSpec:
    if not r > 0:
        raise PreconditionError("disk radius must be positive")
    c = np.asarray(center, dtype=np.float64)
    R = float(r)

    def classify(X):
        d = np.linalg.norm(as_points(X, 2) - c, axis=1)
        out = np.where(d < R, INSIDE, OUTSIDE)
        out[np.abs(d - R) <= BAND] = BOUNDARY
        return out

    def sample(n, stream):
        t = stream.uniform(0.0, 2 * math.pi, n)
        return c + R * np.column_stack([np.cos(t), np.sin(t)])

    return SetSpec(
        name="disk",
        dim=2,
        classify=classify,
        boundary_sampler=sample,
        bbox=BoundingBox(c - R, c + R),
        exact_area=math.pi * R * R,
        kind="disk",
        params={"r": R, "center": c},
    )


def koch_vertices(depth: int) -> np.ndarray:
    """Vertices of the depth-``k`` snowflake with unit initial side, counterclockwise."""
    if not 0 <= depth <= 8:
        raise PreconditionError("Koch depth must be in 0..8")
    h = math.sqrt(3) / 2
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, h]])
    rot = np.array([[0.5, -h], [h, 0.5]])  # row vectors times rot turn clockwise by 60 degrees
    for _ in range(depth):
        A = P
        B = np.roll(P, -1, axis=0)
        d = (B - A) / 3
        p1 = A + d
        p3 = A + 2 * d
        # bumps point away from the interior (to the right of a ccw edge)
        p2 = p1 + d @ rot
        P = np.stack([A, p1, p2, p3], axis=1).reshape(-1, 2)
    return P


def koch_area(depth: int, side: float = 1.0) -> float:
    """Area of the depth-``k`` snowflake from the geometric series of its construction.

    Step ``j`` adds ``3 * 4^(j-1)`` triangles of side ``side / 3^j``.
    """
    tri = math.sqrt(3) / 4
    area = tri * side**2
    for j in range(1, depth + 1):
        area += 3 * 4 ** (j - 1) * tri * (side / 3**j) ** 2
    return area


def make_koch(depth: int) -> SetSpec:
    V = koch_vertices(depth)
    return make_polygon(V, name=f"koch(k={depth})", kind="koch", exact_area=koch_area(depth))


def _carpet_open_test(X, depth) -> np.ndarray:
    """Digit test for points off the grid lines ``i * 3^-k``."""
    ok = np.all((X > 0) & (X < 1), axis=1)
    for j in range(1, depth + 1):
        dig = np.floor(X * 3**j).astype(np.int64) % 3
        ok &= ~((dig[:, 0] == 1) & (dig[:, 1] == 1))
    return ok


def carpet_cells(depth: int) -> np.ndarray:
    """Lower-left integer corners (in units of ``3^-k``) of the ``8^k`` kept cells."""
    cells = np.zeros((1, 2), dtype=np.int64)
    for _ in range(depth):
        sub = np.array([(a, b) for a in range(3) for b in range(3) if (a, b) != (1, 1)], dtype=np.int64)
        cells = (3 * cells[:, None, :] + sub[None]).reshape(-1, 2)
    return cells


def make_carpet(depth: int) -> SetSpec:
    """``A_k``: the union of the ``8^k`` closed squares kept after ``k`` steps."""
    if not 0 <= depth <= 6:
        raise PreconditionError("carpet depth must be in 0..6")
    n = 3**depth
    cells = carpet_cells(depth)
    kept = np.zeros((n, n), dtype=bool)
    kept[cells[:, 0], cells[:, 1]] = True
    A_, B_ = [], []
    for i, j in cells:
        for di, dj, a, b in ((-1, 0, (i, j), (i, j + 1)), (1, 0, (i + 1, j), (i + 1, j + 1)),
                             (0, -1, (i, j), (i + 1, j)), (0, 1, (i, j + 1), (i + 1, j + 1))):
            ni, nj = i + di, j + dj
            if not (0 <= ni < n and 0 <= nj < n and kept[ni, nj]):
                A_.append(a)
                B_.append(b)
    A = np.array(A_, dtype=np.float64) / n
    B = np.array(B_, dtype=np.float64) / n
    h = 1.0 / n
    offs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]]) * 4 * BAND

    def classify(X):
        X = as_points(X, 2)
        near = np.min(np.abs(X * n - np.round(X * n)), axis=1) * h <= 2 * BAND
        out = np.where(_carpet_open_test(X, depth), INSIDE, OUTSIDE)
        if np.any(near):
            Xn = X[near]
            votes = np.stack([_carpet_open_test(Xn + o, depth) for o in offs], axis=1)
            band = votes.any(axis=1) & ~votes.all(axis=1)
            sub = np.where(votes.all(axis=1), INSIDE, OUTSIDE)
            sub[band] = BOUNDARY
            # a point exactly on the boundary can still see four inside neighbours
            sub[(_segment_distance(Xn, A, B) <= BAND)] = BOUNDARY
            out[near] = sub
        return out

    return SetSpec(
        name=f"carpet(k={depth})",
        dim=2,
        classify=classify,
        boundary_sampler=_segment_sampler(A, B),
        bbox=BoundingBox([0.0, 0.0], [1.0, 1.0]),
        exact_area=(8 / 9) ** depth,
        kind="carpet",
        params={"depth": depth},
        segments=np.stack([A, B], axis=1),
    )


def carpet_deep_member(X, depth: int = 12) -> np.ndarray:
    """Closed digit test for the exact carpet truncated at ``depth`` (used for external covers)."""
    X = as_points(X, 2)
    ok = np.all((X >= 0) & (X <= 1), axis=1)
    for j in range(1, depth + 1):
        t = X * 3**j
        # grid-line points off by rounding are snapped back onto the line
        r = np.round(t)
        t = np.where(np.abs(t - r) <= 1e-12 * 3**j, r, t)
        dig = np.floor(t).astype(np.int64) % 3
        frac = t - np.floor(t)
        # the open middle square only: points on its closed edge stay in
        mid = (dig == 1) & (frac > 0)
        ok &= ~(mid[:, 0] & mid[:, 1])
    return ok


def sample_carpet_points(n: int, stream: SampleStream, depth: int = 12) -> np.ndarray:
    """Points of the exact carpet: lower-left corners of random kept cells at ``depth``.

    The corner of a kept cell keeps its corner subcell at every later step,
    so it lies in the limit set.
    """
    sub = np.array([(a, b) for a in range(3) for b in range(3) if (a, b) != (1, 1)], dtype=np.int64)
    k = stream.integers(0, 8, (n, depth))
    cells = np.zeros((n, 2), dtype=np.int64)
    for j in range(depth):
        cells = 3 * cells + sub[k[:, j]]
    return cells / float(3**depth)


def make_radial(intervals, dim: int = 2) -> SetSpec:
    """``{x : |x| in union of intervals}``."""
    iv = sorted((float(a), float(b)) for a, b in intervals)
    if not iv:
        raise PreconditionError("radial set needs at least one interval")
    for a, b in iv:
        if not 0 < a < b:
            raise PreconditionError(f"interval [{a}, {b}] is not a nondegenerate subset of (0, inf)")
    for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
        if a1 <= b0:
            raise PreconditionError("intervals overlap")
    edges = np.array([e for pair in iv for e in pair])
    R = iv[-1][1]

    def classify(X):
        d = np.linalg.norm(as_points(X, dim), axis=1)
        out = np.zeros(d.shape[0], dtype=np.int64)
        for a, b in iv:
            out[(d > a) & (d < b)] = INSIDE
        out[np.min(np.abs(d[:, None] - edges[None]), axis=1) <= BAND] = BOUNDARY
        return out

    weights = edges ** (dim - 1)

    def sample(n, stream):
        g = stream.generator()
        k = g.choice(edges.shape[0], size=n, p=weights / weights.sum())
        u = g.standard_normal((n, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * edges[k][:, None]

    ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    return SetSpec(
        name=f"radial{iv}",
        dim=dim,
        classify=classify,
        boundary_sampler=sample,
        bbox=BoundingBox(np.full(dim, -R), np.full(dim, R)),
        exact_area=math.fsum(ball * (b**dim - a**dim) for a, b in iv),
        kind="radial",
        params={"intervals": iv},
    )


def make_subgraph(f: ScalarField, W: BoundingBox | None = None, floor: float | None = None) -> SetSpec:
    """``{(x, y) : x in W, floor <= y <= f(x)}`` for a scalar field on an interval.

    The boundary sampler covers the graph of ``f`` only; the two vertical
    sides and the floor are listed in ``segments``.
    """
    W = W or f.U
    if W.dim != 1:
        raise PreconditionError("subgraph sets are implemented for one-variable fields")
    a, b = float(W.low[0]), float(W.high[0])
    xs = np.linspace(a, b, 2049)[:, None]
    top = float(np.max(f(xs)))
    bottom = float(np.min(f(xs)))
    if floor is None:
        floor = bottom - max(b - a, 1e-3)
    if floor >= bottom:
        raise PreconditionError("floor must lie below the graph")
    fa, fb = float(f([[a]])[0]), float(f([[b]])[0])

    def classify(X):
        X = as_points(X, 2)
        x, y = X[:, 0], X[:, 1]
        inx = (x >= a) & (x <= b)
        fx = np.full(x.shape[0], np.nan)
        fx[inx] = f(np.clip(x[inx], a, b)[:, None])
        out = np.where(inx & (y > floor) & (y < fx) & (x > a) & (x < b), INSIDE, OUTSIDE)
        band = inx & (np.abs(y - np.nan_to_num(fx)) <= BAND)
        band |= inx & (np.abs(y - floor) <= BAND)
        band |= ((np.abs(x - a) <= BAND) | (np.abs(x - b) <= BAND)) & (y >= floor - BAND) & (y <= top + BAND)
        out[band] = BOUNDARY
        return out

    def sample(n, stream):
        x = stream.uniform(a, b, n)
        return np.column_stack([x, f(x[:, None])])

    sides = np.array([[[a, floor], [b, floor]], [[a, floor], [a, fa]], [[b, floor], [b, fb]]])
    return SetSpec(
        name=f"subgraph({f.name})",
        dim=2,
        classify=classify,
        boundary_sampler=sample,
        bbox=BoundingBox([a, floor], [b, top]),
        exact_area=None,
        kind="subgraph",
        params={"field": f, "W": W, "floor": floor},
        segments=sides,
    )


def area_monte_carlo(A: SetSpec, n: int, stream: SampleStream) -> tuple[float, float]:
    """Hit-count area estimate over the bounding box with its binomial standard error."""
    if n < 100:
        raise ValueError("area_monte_carlo needs n >= 100")
    X = sample_box(A.bbox, n, stream)
    p = float(np.mean(A.contains(X)))
    vol = A.bbox.volume
    return p * vol, vol * math.sqrt(p * (1 - p) / n)
