"""End-to-end pipeline: cover the boundary, merge, take the prox, verify.

For a bounded set ``A`` the boundary is covered by generalized strips of
total width below ``2 eps``; merging gives one strip ``S(f)`` with
``lip(f) < eps`` and ``F = prox_f`` is then 1-Lipschitz, moves points by at
most ``eps`` and sends ``A & S`` onto finitely many hyperplanes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .covers import ConvexBody, CoverResult, _check_containment, convex_neighborhood_cover, surface_cover
from .errors import BudgetError, InvariantError, PreconditionError
from .geom import BoundingBox, ClassicalStrip, SampleStream
from .gstrip import DEFAULT_PIECE_CAP, GenStrip, from_classical, gamma_upper_bound, image_hyperplanes, measure_constant, merge_all
from .polyfun import DEFAULT_TOL, PolyhedralFunc, Tolerances, lip, prox_many, support_kinks
from .setlib import SetSpec, area_monte_carlo

STRATEGIES = ("grid-lines", "convex", "surface", "radial", "external-file")
DEFAULT_STRATEGY = {
    "square": "grid-lines",
    "polygon": "grid-lines",
    "koch": "grid-lines",
    "carpet": "grid-lines",
    "disk": "convex",
    "radial": "radial",
    "subgraph": "surface",
}
MIN_SLAB_WIDTH = 1e-6
LIP_PAIR_TOL = 1e-9
DISPLACEMENT_TOL = 1e-9
FLATTEN_TOL = 1e-7
TRANSLATION_VAR_TOL = 1e-12

# max(y, -2y, x - y - 4, -2x + y - 4) and the two triangles it collapses to points
FIGURE_GRADIENTS = [[0.0, 1.0], [0.0, -2.0], [1.0, -1.0], [-2.0, 1.0]]
FIGURE_OFFSETS = [0.0, 0.0, -4.0, -4.0]
FIGURE_TRIANGLES = {
    "left": (np.array([[-2.0, 1.0], [-2.0, -2.0], [-4.0, 1.0]]), np.array([-2.0, 0.0])),
    "right": (np.array([[4.0, 1.0], [5.0, -1.0], [4.0, -2.0]]), np.array([4.0, 0.0])),
}


def figure_function() -> PolyhedralFunc:
    return PolyhedralFunc(FIGURE_GRADIENTS, FIGURE_OFFSETS, name="figure")


@dataclass
class PipelineConfig:
    eps_target: float
    cover_strategy: str | None = None
    n_samples: int = 20_000
    n_boundary: int = 5_000
    n_pairs: int = 100_000
    area_samples: int = 100_000
    raster: int | None = None
    raster_delta: float | None = None
    tol: Tolerances = DEFAULT_TOL
    seed: int = 0
    margin: float = 0.01
    piece_cap: int = DEFAULT_PIECE_CAP
    external_strips: list | None = None
    thicken: bool = False

    def __post_init__(self):
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if self.cover_strategy is not None and self.cover_strategy not in STRATEGIES:
            raise ValueError(f"unknown cover strategy {self.cover_strategy!r}; choose from {STRATEGIES}")
        if not 0 < self.margin < 2:
            raise ValueError("margin must lie in (0, 2)")

    @property
    def budget(self) -> float:
        """Total width handed to the cover: ``eps (2 - margin)``, strictly below ``2 eps``."""
        return self.eps_target * (2 - self.margin)


class ProxMap:
    """The map ``F = prox_f`` on batches of points."""

    def __init__(self, f: PolyhedralFunc, tol: Tolerances = DEFAULT_TOL):
        self.f = f
        self.tol = tol

    def __call__(self, X) -> np.ndarray:
        return prox_many(self.f, X, self.tol).y

    def batch(self, X):
        return prox_many(self.f, X, self.tol)


def _supporting_lines(segments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct lines through the given segments as unit normals and offsets."""
    d = segments[:, 1] - segments[:, 0]
    n = np.column_stack([-d[:, 1], d[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    flip = (n[:, 0] < -1e-12) | ((np.abs(n[:, 0]) <= 1e-12) & (n[:, 1] < 0))
    n[flip] *= -1
    b = np.einsum("ij,ij->i", n, segments[:, 0])
    key = np.round(np.column_stack([n, b]), 9) + 0.0
    _, idx = np.unique(key, axis=0, return_index=True)
    idx = np.sort(idx)
    return n[idx], b[idx]


def _slab_strips(normals, offsets, width) -> list[GenStrip]:
    return [from_classical(ClassicalStrip(n, b, width)) for n, b in zip(normals, offsets)]


def build_boundary_cover(A: SetSpec, cfg: PipelineConfig) -> CoverResult:
    """Finitely many strips containing the sampled boundary, total width ``< 2 eps``."""
    strategy = cfg.cover_strategy or DEFAULT_STRATEGY.get(A.kind)
    if strategy is None:
        raise PreconditionError(f"no default cover strategy for set kind {A.kind!r}")
    budget = cfg.budget
    stream = SampleStream(cfg.seed).split(11)
    extra = np.empty((0, A.dim))

    if strategy == "grid-lines":
        if A.segments is None:
            raise PreconditionError(f"grid-lines needs a polygonal boundary; {A.name} has none")
        normals, offsets = _supporting_lines(A.segments)
        w = budget / len(normals)
        if w < MIN_SLAB_WIDTH:
            raise BudgetError(
                f"{len(normals)} boundary lines need total width >= {len(normals) * MIN_SLAB_WIDTH:.3g}",
                minimum=len(normals) * MIN_SLAB_WIDTH / (2 - cfg.margin),
            )
        strips = _slab_strips(normals, offsets, w)
        desc = f"{len(strips)} slabs of width {w:.6g}"
    elif strategy == "convex":
        if A.kind == "disk":
            body = ConvexBody.ball(A.params["center"], A.params["r"])
        elif A.kind in ("square", "polygon") and "vertices" in A.params:
            body = ConvexBody.from_points(A.params["vertices"])
        else:
            raise PreconditionError(f"convex strategy needs a disk or convex polygon, got {A.kind!r}")
        r = budget / 4
        cov = convex_neighborhood_cover(body, r, r, samples=0, tol=cfg.tol)
        strips = cov.strips
        desc = cov.target_description
    elif strategy == "radial":
        if A.kind != "radial":
            raise PreconditionError("radial strategy needs a radial set")
        radii = sorted({e for pair in A.params["intervals"] for e in pair})
        r = budget / (4 * len(radii))
        strips = []
        for rho in radii:
            body = ConvexBody.ball(np.zeros(A.dim), rho)
            strips += convex_neighborhood_cover(body, r, r, samples=0, tol=cfg.tol).strips
        desc = f"{len(strips)} annulus strips"
    elif strategy == "surface":
        if A.kind != "subgraph":
            raise PreconditionError("surface strategy needs a subgraph set")
        field_ = A.params["field"]
        eps_s = budget / 2 / 16
        surf = surface_cover(field_, eps_s, samples=0, tol=cfg.tol)
        # the floor and the two vertical sides are segments
        normals, offsets = _supporting_lines(A.segments)
        strips = surf.strips + _slab_strips(normals, offsets, budget / 2 / len(normals))
        sides = A.segments
        t = stream.uniform(0.0, 1.0, cfg.n_boundary // 4)
        k = stream.integers(0, sides.shape[0], t.shape[0])
        extra = sides[k, 0] + t[:, None] * (sides[k, 1] - sides[k, 0])
        desc = f"graph strip plus {len(normals)} side slabs"
    else:
        if not cfg.external_strips:
            raise PreconditionError("external-file strategy needs strips loaded from a cover file")
        strips = list(cfg.external_strips)
        desc = f"{len(strips)} external strips"

    if cfg.thicken:
        strips = thicken_strips(strips, cfg.eps_target * cfg.margin / 2)
    total = gamma_upper_bound(strips)
    if not total < 2 * cfg.eps_target:
        raise BudgetError(
            f"cover of {A.name} has total width bound {total:.6g} >= 2 eps = {2 * cfg.eps_target:.6g}",
            minimum=total / 2,
        )
    cover = CoverResult(strips, total, f"{A.name}: {desc}", details={"strategy": strategy})
    X = np.vstack([A.sample_boundary(cfg.n_boundary, stream), extra])
    return _check_containment(cover, X, cfg.tol)


def thicken_strips(strips, eps: float, tol: Tolerances = DEFAULT_TOL) -> list[GenStrip]:
    """Pad the boundary hyperplanes of the ``j``-th strip with slabs of total width ``eps / 2^j``.

    Useful when an external cover only contains the target as a closed set
    up to its own boundary. Adds at most ``eps`` of total width.
    """
    out = list(strips)
    for j, S in enumerate(strips, start=1):
        H = image_hyperplanes(S, shifted=True, tol=tol)
        shifted = H.provenance[:, 2] >= 0
        if not np.any(shifted):
            continue
        key = np.round(np.column_stack([H.normals[shifted], H.offsets[shifted]]), 12) + 0.0
        _, idx = np.unique(key, axis=0, return_index=True)
        normals = H.normals[shifted][idx]
        offsets = H.offsets[shifted][idx]
        out += _slab_strips(normals, offsets, eps / 2**j / len(idx))
    return out


def verify_lipschitz(F, samples, stream: SampleStream, n_pairs: int = 100_000, tol: float = LIP_PAIR_TOL, images=None) -> int:
    """Pairs with ``|F(x) - F(x')| > |x - x'| + tol``.

    All pairs when there are at most ``n_pairs`` of them, otherwise
    ``n_pairs`` random pairs of distinct samples.
    """
    X = np.asarray(samples, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    Y = F(X) if images is None else images
    if n * (n - 1) // 2 <= n_pairs:
        I, J = np.triu_indices(n, 1)
    else:
        g = stream.generator()
        I = g.integers(0, n, n_pairs)
        J = (I + g.integers(1, n, n_pairs)) % n
    bad = 0
    for lo in range(0, I.shape[0], 200_000):
        i, j = I[lo : lo + 200_000], J[lo : lo + 200_000]
        dy = np.linalg.norm(Y[i] - Y[j], axis=1)
        dx = np.linalg.norm(X[i] - X[j], axis=1)
        bad += int(np.sum(dy > dx + tol))
    return bad


@dataclass
class TranslationCheck:
    components: int
    max_variance: float
    grid: int
    outside_points: int
    probes: int = 3


def _min_gradient_gap(f: PolyhedralFunc, tol: Tolerances) -> float:
    V = f.V
    best = math.inf
    for lo in range(0, V.shape[0], 256):
        D = np.linalg.norm(V[lo : lo + 256, None, :] - V[None], axis=2)
        D = D[D > tol.grad_tol]
        if D.size:
            best = min(best, float(D.min()))
    return best


def translation_check(
    f: PolyhedralFunc, bbox: BoundingBox, grid: int | None = None, tol: Tolerances = DEFAULT_TOL, max_grid: int = 768,
    max_probes: int = 64,
) -> TranslationCheck:
    """Cluster raster points outside ``S(f)`` and measure displacement variance per cluster.

    Grid neighbours outside the strip are joined when their prox points
    share the maximal piece (one convex translate), or otherwise when evenly
    spaced probes between them, closer together than the smallest gradient
    gap, are all outside too. Outside ``S(f)`` the prox is a
    translation on each component, so every variance should vanish.
    """
    gap = _min_gradient_gap(f, tol)
    side = float(np.max(bbox.high - bbox.low))
    if grid is None:
        grid = int(np.clip(math.ceil(2 * side / gap), 64, max_grid)) if math.isfinite(gap) else 64
    # any strip crossed between two pieces is at least ``gap`` wide
    step = side / (grid - 1)
    n_probe = int(np.clip(math.ceil(2 * step / gap), 3, max_probes)) if math.isfinite(gap) else 3
    axes = [np.linspace(lo, hi, grid) for lo, hi in zip(bbox.low, bbox.high)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shape = G.shape[:-1]
    P = G.reshape(-1, bbox.dim)
    b = prox_many(f, P, tol)
    out = ~b.nondiff
    disp = P - b.y
    idx = np.arange(P.shape[0]).reshape(shape)
    rows, cols = [], []
    for axis in range(bbox.dim):
        a = np.moveaxis(idx, axis, 0)[:-1].ravel()
        c = np.moveaxis(idx, axis, 0)[1:].ravel()
        ok = out[a] & out[c]
        a, c = a[ok], c[ok]
        # same maximal piece: both lie in one convex translate, joined directly
        same = b.piece[a] == b.piece[c]
        rows.append(a[same])
        cols.append(c[same])
        a, c = a[~same], c[~same]
        for t in np.arange(1, n_probe + 1) / (n_probe + 1):
            if a.size == 0:
                break
            mids = P[a] + t * (P[c] - P[a])
            keep = ~prox_many(f, mids, tol).nondiff
            a, c = a[keep], c[keep]
        rows.append(a)
        cols.append(c)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    n = P.shape[0]
    graph = coo_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    lab = labels[out]
    D = disp[out]
    if lab.size == 0:
        return TranslationCheck(0, 0.0, grid, 0, n_probe)
    uniq, inv = np.unique(lab, return_inverse=True)
    cnt = np.bincount(inv)
    mean = np.stack([np.bincount(inv, weights=D[:, k]) / cnt for k in range(D.shape[1])], axis=1)
    var = np.bincount(inv, weights=np.sum((D - mean[inv]) ** 2, axis=1)) / cnt
    return TranslationCheck(int(uniq.size), float(var.max()), grid, int(lab.size), n_probe)


@dataclass
class MeasureCheck:
    area_before: float
    stderr: float
    area_after: float
    loss: float
    constant: float
    radius: float
    bound: float
    delta: float
    bias_band: float
    ok: bool


def raster_image_area(F, A: SetSpec, delta: float, pad: float = 0.0) -> float:
    """Area of ``F(A)`` from a half-spacing lattice of ``A`` binned into ``delta`` cells.

    Each cell holds four lattice points, so ``min(1, hits / 4)`` of a cell
    counts as covered. The bias is of order ``perimeter * delta``.
    """
    lo = A.bbox.low
    hi = A.bbox.high
    h = delta / 2
    axes = [np.arange(l + h / 2, u, h) for l, u in zip(lo, hi)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, A.dim)
    P = P[A.contains(P)]
    if P.shape[0] == 0:
        return 0.0
    Y = F(P)
    origin = lo - math.ceil(pad / delta) * delta - delta
    cells = np.floor((Y - origin) / delta).astype(np.int64)
    _, hits = np.unique(cells, axis=0, return_counts=True)
    per_cell = 2**A.dim
    return float(np.sum(np.minimum(1.0, hits / per_cell))) * delta**A.dim


def verify_measure_loss(
    A: SetSpec,
    F,
    r: float | None,
    n: int,
    stream: SampleStream,
    lip_f: float,
    delta: float | None = None,
) -> MeasureCheck:
    """Compare the Monte-Carlo area of ``A`` with the raster area of ``F(A)``.

    The loss is bounded by ``area(A & S) <= C lip(f)`` with
    ``C = measure_constant(d, r, "ball")`` (``2 pi r`` in the plane), where
    ``r`` is the radius of a ball around the bounding-box center containing
    ``A``; the check allows four standard errors on top.
    """
    center = A.bbox.center
    r_need = float(np.linalg.norm(A.bbox.high - center))
    if r is None:
        r = r_need
    elif r < r_need * (1 - 1e-12):
        # A bounded: its farthest point from the center is on the boundary
        B = A.sample_boundary(20_000, stream.split(7))
        far = float(np.max(np.linalg.norm(B - center, axis=1)))
        if far > r * (1 + 1e-12):
            raise PreconditionError(f"radius {r} does not contain the set (sampled boundary reaches {far:.6g})")
    r = float(r)
    diam = A.bbox.diameter
    if delta is None:
        delta = diam / 256 if lip_f == 0 else min(max(lip_f / 4, diam / 1024), diam / 64)
        # whole cells across the box, so box-aligned sets raster without edge loss
        side = float(np.max(A.bbox.high - A.bbox.low))
        delta = side / math.ceil(side / delta)
    if lip_f > 0 and delta > lip_f:
        raise PreconditionError(f"raster cell {delta:.3g} is coarser than lip(f) = {lip_f:.3g}; use a finer raster")
    area, se = area_monte_carlo(A, n, stream)
    after = raster_image_area(F, A, delta, pad=lip_f)
    loss = area - after
    C = measure_constant(A.dim, r, "ball")
    bound = C * lip_f + 4 * se
    perimeter = 2 * float(np.sum(A.bbox.high - A.bbox.low))
    return MeasureCheck(area, se, after, loss, C, r, bound, delta, perimeter * delta, loss <= bound)


@dataclass
class PipelineReport:
    set_name: str
    strategy: str
    eps_target: float
    n_strips: int
    strip_width_bound: float
    merged_pieces: int
    merged_lip: float
    boundary_samples_checked: int
    boundary_violations: int
    n_samples: int
    max_displacement: float
    lipschitz_pairs_checked: int
    lipschitz_pair_violations: int
    n_in_strip: int
    flatten_residual: float
    flatten_band_points: int
    translation_components: int
    translation_max_variance: float
    translation_grid: int
    area_before: float
    area_before_stderr: float
    area_after: float
    measure_loss: float
    measure_loss_bound: float
    measure_constant: float
    measure_radius: float
    measure_loss_bound_constant: float
    raster_delta: float
    raster_bias_band: float
    seed: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def run_pipeline(A: SetSpec, cfg: PipelineConfig, strict: bool = False) -> tuple[ProxMap, PipelineReport]:
    """Build ``F = prox_f`` for a merged boundary cover of ``A`` and verify it by sampling.

    Returns the map and its report; with ``strict`` a failed invariant raises
    :class:`InvariantError` carrying the report.
    """
    cover = build_boundary_cover(A, cfg)
    merged = merge_all(cover.strips, cfg.piece_cap)
    f = merged.f
    lip_f = lip(f)
    F = ProxMap(f, cfg.tol)
    root = SampleStream(cfg.seed)
    failures = []
    if cover.violations:
        failures.append(f"{cover.violations} boundary samples outside the cover")
    if lip_f > cfg.eps_target:
        failures.append(f"lip(f) = {lip_f:.6g} exceeds eps = {cfg.eps_target:g}")

    X = A.sample_inside(cfg.n_samples, root.split(1))
    b = prox_many(f, X, cfg.tol)
    disp = float(np.max(np.linalg.norm(X - b.y, axis=1)))
    if disp > lip_f + DISPLACEMENT_TOL:
        failures.append(f"max displacement {disp:.6g} exceeds lip(f) = {lip_f:.6g}")

    n_pairs = min(cfg.n_pairs, X.shape[0] * (X.shape[0] - 1) // 2)
    viol = verify_lipschitz(F, X, root.split(2), cfg.n_pairs, images=b.y)
    if viol:
        failures.append(f"{viol} Lipschitz pair violations")

    B = A.sample_boundary(cfg.n_boundary, root.split(3))
    bb = prox_many(f, B, cfg.tol)
    # activity-slack kinks that the dual certificate does not confirm and
    # that sit off every equality hyperplane are band points, not failures
    flat, band = [], 0
    for batch in (b, bb):
        cert, _ = support_kinks(f, batch, cfg.tol)
        fd = batch.flat_distance
        amb = batch.nondiff & ~cert & (fd > FLATTEN_TOL)
        flat.append(fd[batch.nondiff & ~amb])
        band += int(np.sum(amb))
    flat = np.concatenate(flat)
    flatten = float(flat.max()) if flat.size else 0.0
    if flatten > FLATTEN_TOL:
        failures.append(f"flatten residual {flatten:.3g} exceeds {FLATTEN_TOL:g}")

    tc = translation_check(f, A.bbox.expanded(0.05 * A.bbox.diameter), cfg.raster, cfg.tol)
    if tc.max_variance > TRANSLATION_VAR_TOL:
        failures.append(f"displacement variance {tc.max_variance:.3g} on a translation component")

    mc = verify_measure_loss(A, F, None, cfg.area_samples, root.split(4), lip_f, cfg.raster_delta)
    if not mc.ok:
        failures.append(f"measure loss {mc.loss:.4g} exceeds bound {mc.bound:.4g}")

    report = PipelineReport(
        set_name=A.name,
        strategy=cover.details.get("strategy", ""),
        eps_target=cfg.eps_target,
        n_strips=len(cover.strips),
        strip_width_bound=cover.total_width_bound,
        merged_pieces=f.n_pieces,
        merged_lip=lip_f,
        boundary_samples_checked=cover.containment_samples_checked,
        boundary_violations=cover.violations,
        n_samples=int(X.shape[0]),
        max_displacement=disp,
        lipschitz_pairs_checked=int(n_pairs),
        lipschitz_pair_violations=viol,
        n_in_strip=int(np.sum(b.nondiff) + np.sum(bb.nondiff)),
        flatten_residual=flatten,
        flatten_band_points=band,
        translation_components=tc.components,
        translation_max_variance=tc.max_variance,
        translation_grid=tc.grid,
        area_before=mc.area_before,
        area_before_stderr=mc.stderr,
        area_after=mc.area_after,
        measure_loss=mc.loss,
        measure_loss_bound=mc.bound,
        measure_constant=mc.constant,
        measure_radius=mc.radius,
        measure_loss_bound_constant=mc.loss / lip_f if lip_f > 0 else 0.0,
        raster_delta=mc.delta,
        raster_bias_band=mc.bias_band,
        seed=cfg.seed,
        failures=failures,
    )
    if strict and failures:
        err = InvariantError("; ".join(failures))
        err.report = report
        raise err
    return F, report
