"""Command-line interface, JSON file formats and SVG output.

Files
-----
FuncFile::

    {"format": "kolmostrip.func", "dim": 2, "name": "abs",
     "pieces": [{"gradient": [0, 1], "offset": 0}, ...]}

CoverFile::

    {"format": "kolmostrip.cover", "target": "...", "claimed_width_bound": 0.3,
     "strips": [<FuncFile>, ...]}

Floats are written with 17 significant digits so files round-trip bit for bit.

Set specifications are ``name[:key=value,...]``, e.g. ``square``,
``disk:r=1``, ``carpet:k=2``, ``koch:k=3``, ``radial:intervals=0.5/0.6;0.8/0.9``,
``polygon:vertices=0/0;1/0;0/1`` or ``subgraph:f=sin``.

Exit codes: 0 success, 1 parse error, 2 precondition or dimension error,
3 invariant failure, 4 infeasible budget.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covers import ConvexBody, CoverResult, ScalarField, _check_containment, convex_neighborhood_cover
from .errors import DimensionError, InvariantError, KolmostripError, ParseError, PreconditionError
from .geom import BoundingBox, SampleStream, as_points, sample_box
from .gstrip import GenStrip, gamma_upper_bound, image_hyperplanes, merge_all
from .kolmap import (
    DISPLACEMENT_TOL,
    STRATEGIES,
    PipelineConfig,
    ProxMap,
    build_boundary_cover,
    run_pipeline,
    verify_lipschitz,
)
from .polyfun import PolyhedralFunc, Tolerances, lip, prox, prox_many, prox_oracle
from .setlib import (
    SetSpec,
    carpet_deep_member,
    make_carpet,
    make_disk,
    make_koch,
    make_polygon,
    make_radial,
    make_square,
    make_subgraph,
    sample_carpet_points,
)

FUNC_FORMAT = "kolmostrip.func"
COVER_FORMAT = "kolmostrip.cover"
CLAIM_TOL = 1e-12
CARPET_DEEP = 12


# ---------------------------------------------------------------- JSON output


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        # JSON has no inf/nan; reports use null for "not applicable"
        return "null"
    if x == int(x) and abs(x) < 2**53:
        return str(int(x)) if not (x == 0 and math.copysign(1, x) < 0) else "-0.0"
    return format(x, ".17g")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits, keys in insertion order."""

    def enc(o, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, depth + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, depth + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, depth + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), depth)
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _num(o)
        if o is None:
            return "null"
        return json.dumps(str(o))

    return enc(obj, 0) + "\n"


def func_to_dict(f: PolyhedralFunc) -> dict:
    d = {"format": FUNC_FORMAT, "dim": f.dim}
    if f.name:
        d["name"] = f.name
    d["pieces"] = [{"gradient": [float(t) for t in v], "offset": float(c)} for v, c in zip(f.V, f.c)]
    return d


def cover_to_dict(strips, target: str, claimed: float | None = None) -> dict:
    claimed = gamma_upper_bound(strips) if claimed is None else claimed
    return {
        "format": COVER_FORMAT,
        "target": target,
        "claimed_width_bound": float(claimed),
        "strips": [func_to_dict(s.f) for s in strips],
    }


# ---------------------------------------------------------------- parsing


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from e


def func_from_dict(d, where: str = "function") -> PolyhedralFunc:
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object")
    if d.get("format", FUNC_FORMAT) != FUNC_FORMAT:
        raise ParseError(f"{where}: format is {d.get('format')!r}, expected {FUNC_FORMAT!r}")
    pieces = d.get("pieces")
    if not isinstance(pieces, list) or not pieces:
        raise ParseError(f"{where}: 'pieces' must be a nonempty list")
    try:
        V = [[float(t) for t in p["gradient"]] for p in pieces]
        c = [float(p["offset"]) for p in pieces]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: bad piece ({e})") from e
    dims = {len(v) for v in V}
    if len(dims) != 1:
        raise DimensionError(f"{where}: pieces have mixed dimensions {sorted(dims)}")
    dim = d.get("dim")
    if dim is not None and dims != {int(dim)}:
        raise DimensionError(f"{where}: declared dim {dim} but gradients have dimension {dims.pop()}")
    try:
        return PolyhedralFunc(V, c, name=d.get("name"))
    except DimensionError:
        raise
    except ValueError as e:
        raise ParseError(f"{where}: {e}") from e


def load_func(path) -> PolyhedralFunc:
    return func_from_dict(_load_json(path), str(path))


def cover_from_dict(d, where: str = "cover") -> tuple[list[GenStrip], str, float]:
    """Strips, target and claimed bound; an understated claim is a parse error."""
    if not isinstance(d, dict) or d.get("format") != COVER_FORMAT:
        raise ParseError(f"{where}: not a {COVER_FORMAT} document")
    raw = d.get("strips")
    if not isinstance(raw, list):
        raise ParseError(f"{where}: 'strips' must be a list")
    strips = [GenStrip(func_from_dict(s, f"{where}: strip {i}")) for i, s in enumerate(raw)]
    if len({s.dim for s in strips}) > 1:
        raise DimensionError(f"{where}: strips have mixed dimensions")
    try:
        claimed = float(d["claimed_width_bound"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: missing or bad 'claimed_width_bound'") from e
    actual = math.fsum(2 * lip(s.f) for s in strips)
    if not claimed >= actual - CLAIM_TOL:
        raise ParseError(
            f"{where}: claimed width bound {claimed!r} is below the recomputed sum {actual!r}"
        )
    return strips, str(d.get("target", "")), claimed


def load_cover(path) -> tuple[list[GenStrip], str, float]:
    return cover_from_dict(_load_json(path), str(path))


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as e:
        raise ParseError(f"bad {what} {text!r}") from e


def _pairs(text: str, what: str) -> list[tuple[float, ...]]:
    try:
        return [tuple(float(t) for t in item.split("/")) for item in text.split(";") if item]
    except ValueError as e:
        raise ParseError(f"bad {what} {text!r}") from e


FIELDS = {
    # name: (value, derivative, Lipschitz bound on the chart, gradient Lipschitz bound)
    "sin": (lambda x: np.sin(x) / 10, lambda x: np.cos(x) / 10, 0.1, 0.1),
    "quad": (lambda x: x**2 / 20, lambda x: x / 10, 1 / 120, 0.1),
}


def scalar_field(name: str, half_width: float = 1 / 12) -> ScalarField:
    if name not in FIELDS:
        raise ParseError(f"unknown field {name!r}; choose from {sorted(FIELDS)}")
    val, der, L, M = FIELDS[name]
    U = BoundingBox([-half_width], [half_width])
    return ScalarField(
        lambda X: val(as_points(X, 1)[:, 0]), U, L, grad=lambda X: der(as_points(X, 1)), M=M, name=name
    )


def parse_set(text: str) -> SetSpec:
    """Build a :class:`SetSpec` from ``name[:key=value,...]``."""
    name, _, rest = text.partition(":")
    kv = {}
    for item in rest.split(",") if rest else []:
        if "=" not in item:
            raise ParseError(f"set parameter {item!r} is not key=value")
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()

    def num(key, default):
        try:
            return float(kv.pop(key)) if key in kv else default
        except ValueError as e:
            raise ParseError(f"set parameter {key}={kv.get(key)!r} is not a number") from e

    name = name.strip()
    if name == "square":
        A = make_square(num("side", 1.0))
    elif name == "disk":
        A = make_disk(num("r", 1.0), (num("cx", 0.0), num("cy", 0.0)))
    elif name in ("carpet", "koch"):
        k = num("k", 2 if name == "carpet" else 3)
        if k != int(k) or k < 0:
            raise ParseError(f"{name} depth must be a nonnegative integer")
        A = make_carpet(int(k)) if name == "carpet" else make_koch(int(k))
    elif name == "radial":
        iv = _pairs(kv.pop("intervals", "0.5/0.6"), "intervals")
        if any(len(p) != 2 for p in iv):
            raise ParseError("radial intervals are a/b pairs separated by ';'")
        A = make_radial(iv, int(num("dim", 2)))
    elif name == "polygon":
        if "vertices" not in kv:
            raise ParseError("polygon needs vertices=x/y;x/y;...")
        A = make_polygon(_pairs(kv.pop("vertices"), "vertices"))
    elif name == "subgraph":
        A = make_subgraph(scalar_field(kv.pop("f", "sin")))
    else:
        raise ParseError(f"unknown set {name!r}")
    if kv:
        raise ParseError(f"unused set parameters {sorted(kv)} for {name!r}")
    return A


def _bbox(text: str) -> BoundingBox:
    v = _floats(text, "bbox")
    if len(v) % 2 or not v:
        raise ParseError("bbox is lo_1,...,lo_d,hi_1,...,hi_d")
    d = len(v) // 2
    return BoundingBox(v[:d], v[d:])


def _points(args, dim: int) -> np.ndarray:
    rows = []
    for p in args.point or []:
        rows.append(_floats(p, "point"))
    if args.points:
        try:
            P = np.loadtxt(args.points, delimiter=",", ndmin=2)
        except (OSError, ValueError) as e:
            raise ParseError(f"cannot read points from {args.points}: {e}") from e
        rows.extend(P.tolist())
    if not rows:
        raise ParseError("no input points; use --point or --points")
    if len({len(r) for r in rows}) != 1:
        raise DimensionError("input points have mixed dimensions")
    return as_points(rows, dim)


def _tol(args) -> Tolerances:
    t = Tolerances()
    return Tolerances(
        act_tol=args.act_tol if args.act_tol is not None else t.act_tol,
        grad_tol=args.grad_tol if args.grad_tol is not None else t.grad_tol,
        cert_tol=args.cert_tol if args.cert_tol is not None else t.cert_tol,
    )


def _check_dim(args, dim: int):
    if args.dim is not None and args.dim != dim:
        raise DimensionError(f"--dim {args.dim} does not match the input dimension {dim}")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- SVG

_LIGHT = ["#f2e6c9", "#cfe3f1", "#d9ecd0", "#f3d3d8", "#e4dbf0", "#f6e0c4", "#d3eeea", "#ece9c6"]
_MID = ["#a9a9a9", "#9fb4c4", "#b4a79a", "#a3b39c", "#b8a0ab", "#a6a6c0"]
_DARK = "#3a3a3a"


class SvgScene:
    """Raster regions plus vector overlays, written as SVG 1.1."""

    def __init__(self, bbox: BoundingBox, width: int, height: int | None = None):
        if bbox.dim != 2:
            raise DimensionError("SVG output is for planar data")
        self.bbox = bbox
        span = bbox.high - bbox.low
        self.width = int(width)
        self.height = int(height or max(1, round(width * span[1] / span[0])))
        self.scale = np.array([self.width / span[0], self.height / span[1]])
        self.layers: list[str] = []

    def pixel_centers(self) -> np.ndarray:
        lo = self.bbox.low
        xs = lo[0] + (np.arange(self.width) + 0.5) / self.scale[0]
        ys = self.bbox.high[1] - (np.arange(self.height) + 0.5) / self.scale[1]
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def _xy(self, P) -> np.ndarray:
        P = as_points(P, 2)
        return np.column_stack(
            [(P[:, 0] - self.bbox.low[0]) * self.scale[0], (self.bbox.high[1] - P[:, 1]) * self.scale[1]]
        )

    def raster(self, colors: np.ndarray, label: str):
        """``colors`` is one string per pixel in :meth:`pixel_centers` order; runs become rects."""
        C = np.asarray(colors).reshape(self.height, self.width)
        out = [f'<g id="{label}" shape-rendering="crispEdges">']
        for r in range(self.height):
            row = C[r]
            start = 0
            for c in range(1, self.width + 1):
                if c == self.width or row[c] != row[start]:
                    if row[start]:
                        out.append(
                            f'<rect x="{start}" y="{r}" width="{c - start}" height="1" fill="{row[start]}"/>'
                        )
                    start = c
        out.append("</g>")
        self.layers.append("\n".join(out))

    def lines(self, normals, offsets, label: str, color: str = "#b03030"):
        """Lines ``n.x = b`` clipped to the box."""
        lo, hi = self.bbox.low, self.bbox.high
        out = [f'<g id="{label}" stroke="{color}" stroke-width="1" fill="none">']
        for n, b in zip(np.asarray(normals), np.asarray(offsets)):
            pts = []
            for x in (lo[0], hi[0]):
                if abs(n[1]) > 1e-14:
                    y = (b - n[0] * x) / n[1]
                    if lo[1] - 1e-12 <= y <= hi[1] + 1e-12:
                        pts.append((x, y))
            for y in (lo[1], hi[1]):
                if abs(n[0]) > 1e-14:
                    x = (b - n[1] * y) / n[0]
                    if lo[0] - 1e-12 <= x <= hi[0] + 1e-12:
                        pts.append((x, y))
            if len(pts) >= 2:
                P = self._xy(np.array(pts[:2]))
                out.append(
                    f'<line x1="{P[0, 0]:.3f}" y1="{P[0, 1]:.3f}" x2="{P[1, 0]:.3f}" y2="{P[1, 1]:.3f}"/>'
                )
        out.append("</g>")
        self.layers.append("\n".join(out))

    def points(self, P, label: str, color: str = "#000000", radius: float = 0.8):
        Q = self._xy(P)
        out = [f'<g id="{label}" fill="{color}">']
        out += [f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{radius}"/>' for x, y in Q]
        out.append("</g>")
        self.layers.append("\n".join(out))

    def segments(self, S, label: str, color: str = "#000000"):
        out = [f'<g id="{label}" stroke="{color}" stroke-width="1">']
        for a, b in np.asarray(S):
            P = self._xy(np.array([a, b]))
            out.append(f'<line x1="{P[0, 0]:.3f}" y1="{P[0, 1]:.3f}" x2="{P[1, 0]:.3f}" y2="{P[1, 1]:.3f}"/>')
        out.append("</g>")
        self.layers.append("\n".join(out))

    def to_svg(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f"<!-- kolmostrip {__version__} -->\n"
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
        )
        return head + "\n".join(self.layers) + "\n</svg>\n"


def signature_colors(f: PolyhedralFunc, P: np.ndarray, tol: Tolerances) -> tuple[np.ndarray, int]:
    """Color each point by the sorted active-index signature of its prox point.

    One active piece gives a light color, two a mid tone, three or more dark.
    Returns the colors and the number of distinct signatures.
    """
    b = prox_many(f, P, tol)
    vals = b.y @ f.V.T + f.c
    top = vals.max(axis=1, keepdims=True)
    act = top - vals <= tol.act_tol * (1 + np.abs(top))
    sigs, inv = np.unique(act, axis=0, return_inverse=True)
    inv = inv.ravel()
    size = sigs.sum(axis=1)
    table = []
    for k, s in enumerate(sigs):
        if size[k] == 1:
            table.append(_LIGHT[int(np.argmax(s)) % len(_LIGHT)])
        elif size[k] == 2:
            table.append(_MID[k % len(_MID)])
        else:
            table.append(_DARK)
    return np.array(table, dtype=object)[inv], sigs.shape[0]


def render_function(f: PolyhedralFunc, bbox: BoundingBox, width: int, tol: Tolerances, lines: bool = True) -> tuple[str, dict]:
    scene = SvgScene(bbox, width)
    P = scene.pixel_centers()
    if f.n_pieces <= 64:
        colors, n_sig = signature_colors(f, P, tol)
    else:
        # too many pieces for signatures: strip versus translation regions
        nd = prox_many(f, P, tol).nondiff
        colors = np.where(nd, _MID[0], _LIGHT[0]).astype(object)
        n_sig = 2
    scene.raster(colors, "regions")
    n_lines = 0
    if lines and f.n_pieces <= 64:
        H = image_hyperplanes(GenStrip(f), adjacent_only=True, tol=tol)
        scene.lines(H.normals, H.offsets, "hyperplanes")
        n_lines = len(H)
    return scene.to_svg(), {"signatures": int(n_sig), "hyperplanes": n_lines, "width": scene.width, "height": scene.height}


def render_pipeline(A: SetSpec, F: ProxMap, width: int, seed: int, n_points: int = 3000) -> str:
    """The set, the merged strip inside and around it, and the image ``F(A)``."""
    bbox = A.bbox.expanded(0.05 * A.bbox.diameter)
    scene = SvgScene(bbox, width)
    P = scene.pixel_centers()
    inside = A.contains(P)
    in_strip = F.batch(P).nondiff
    colors = np.full(P.shape[0], "", dtype=object)
    colors[inside] = _LIGHT[1]
    colors[in_strip & ~inside] = _MID[0]
    colors[in_strip & inside] = _MID[1]
    scene.raster(colors, "set-and-strip")
    if A.segments is not None and A.segments.shape[0] <= 5000:
        scene.segments(A.segments, "boundary", "#555555")
    X = A.sample_inside(n_points, SampleStream(seed).split(7))
    scene.points(F(X), "image", "#202020", 0.6)
    return scene.to_svg()


# ---------------------------------------------------------------- commands


def cmd_prox(args) -> int:
    f = load_func(args.func)
    _check_dim(args, f.dim)
    tol = _tol(args)
    X = _points(args, f.dim)
    out = []
    for x in X:
        r = prox(f, x, tol)
        out.append(
            {
                "x": x,
                "y": r.y,
                "active": list(r.active),
                "differentiable": r.differentiable,
                "support": list(r.support),
                "dual_weights": r.dual_weights,
            }
        )
    _emit(dumps(out), args.out)
    return 0


def cmd_member(args) -> int:
    f = load_func(args.func)
    _check_dim(args, f.dim)
    X = _points(args, f.dim)
    b = prox_many(f, X, _tol(args))
    _emit(dumps([{"x": x, "member": bool(m)} for x, m in zip(X, b.nondiff)]), args.out)
    return 0


def cmd_merge(args) -> int:
    fs = [load_func(p) for p in args.func]
    dims = {f.dim for f in fs}
    if len(dims) != 1:
        raise DimensionError(f"input functions have dimensions {sorted(dims)}")
    _check_dim(args, dims.pop())
    S = merge_all([GenStrip(f) for f in fs], args.cap)
    bound = math.fsum(lip(f) for f in fs)
    if lip(S.f) > bound + 1e-12:
        raise InvariantError(f"merged lip {lip(S.f)!r} exceeds the sum of inputs {bound!r}")
    _emit(dumps(func_to_dict(PolyhedralFunc(S.f.V, S.f.c, name="merged"))), args.out)
    return 0


def cmd_cover(args) -> int:
    A = parse_set(args.set)
    _check_dim(args, A.dim)
    tol = _tol(args)
    stream = SampleStream(args.seed)
    if args.strategy == "convex" and args.r is not None:
        if A.kind == "disk":
            C = ConvexBody.ball(A.params["center"], A.params["r"])
        elif "vertices" in A.params:
            C = ConvexBody.from_points(A.params["vertices"])
        else:
            raise PreconditionError(f"convex cover needs a disk or convex polygon, got {A.kind!r}")
        cov = convex_neighborhood_cover(C, args.r, args.eps, samples=args.samples, stream=stream, tol=tol)
    else:
        if args.strategy == "external-file":
            raise PreconditionError("an external cover is read by 'verify --cover', not built")
        cfg = PipelineConfig(args.eps, args.strategy, n_boundary=args.samples, tol=tol, seed=args.seed)
        cov = build_boundary_cover(A, cfg)
    doc = cover_to_dict(cov.strips, cov.target_description)
    _emit(dumps(doc), args.out)
    sys.stderr.write(
        f"{len(cov.strips)} strip(s), width bound {cov.total_width_bound:.6g}, "
        f"{cov.violations} of {cov.containment_samples_checked} samples uncovered\n"
    )
    return 0 if cov.accepted else 3


def cmd_pipeline(args) -> int:
    A = parse_set(args.set)
    _check_dim(args, A.dim)
    external = None
    strategy = args.strategy
    if args.cover:
        external, _, _ = load_cover(args.cover)
        strategy = "external-file"
    cfg = PipelineConfig(
        args.eps,
        strategy,
        n_samples=args.samples,
        tol=_tol(args),
        seed=args.seed,
        external_strips=external,
        thicken=args.thicken,
    )
    F, rep = run_pipeline(A, cfg)
    text = dumps(rep.to_dict())
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    if args.svg:
        Path(args.svg).write_text(render_pipeline(A, F, args.width, args.seed))
    for msg in rep.failures:
        sys.stderr.write(f"invariant failed: {msg}\n")
    return 0 if rep.passed else 3


def cmd_verify(args) -> int:
    tol = _tol(args)
    stream = SampleStream(args.seed)
    result = {}
    ok = True
    if args.cover:
        strips, target, claimed = load_cover(args.cover)
        result["cover"] = {"target": target, "claimed_width_bound": claimed, "strips": len(strips)}
        if args.set:
            A = parse_set(args.set)
            if strips and strips[0].dim != A.dim:
                raise DimensionError(f"cover is {strips[0].dim}-dimensional, set is {A.dim}-dimensional")
            cov = CoverResult(strips, gamma_upper_bound(strips), target)
            cov = _check_containment(cov, A.sample_boundary(args.samples, stream.split(1)), tol)
            result["cover"].update(samples=cov.containment_samples_checked, violations=cov.violations)
            ok &= cov.violations == 0
            if args.limit_set:
                # the cover claims the limit carpet, not just the boundary of stage k
                if A.kind != "carpet":
                    raise PreconditionError("--limit-set applies to carpet targets only")
                P = sample_carpet_points(args.samples, stream.split(4), CARPET_DEEP)
                deep = CoverResult(strips, cov.total_width_bound, target)
                _check_containment(deep, P[carpet_deep_member(P, CARPET_DEEP)], tol)
                result["cover"].update(deep_depth=CARPET_DEEP, deep_samples=deep.containment_samples_checked,
                                       deep_violations=deep.violations)
                ok &= deep.violations == 0
    if args.func:
        f = load_func(args.func)
        _check_dim(args, f.dim)
        if args.set:
            A = parse_set(args.set)
            if A.dim != f.dim:
                raise DimensionError(f"function is {f.dim}-dimensional, set is {A.dim}-dimensional")
            X = A.sample_inside(args.samples, stream.split(2))
        elif args.bbox:
            X = sample_box(_bbox(args.bbox), args.samples, stream.split(2))
        else:
            raise ParseError("verify --func needs --set or --bbox for sample points")
        P = ProxMap(f, tol)
        F = P if args.corrupt == 1.0 else (lambda Z, s=args.corrupt: s * P(Z))
        Y = F(X)
        L = lip(f)
        disp = float(np.max(np.linalg.norm(Y - X, axis=1)))
        viol = verify_lipschitz(F, X, stream.split(3), args.pairs, images=Y)
        result["map"] = {
            "lip": L,
            "corrupt_scale": args.corrupt,
            "samples": X.shape[0],
            "max_displacement": disp,
            "displacement_ok": disp <= L + DISPLACEMENT_TOL,
            "lipschitz_pair_violations": viol,
        }
        ok &= viol == 0 and disp <= L + DISPLACEMENT_TOL
    if not result:
        raise ParseError("verify needs --cover and/or --func")
    result["passed"] = bool(ok)
    _emit(dumps(result), args.out)
    return 0 if ok else 3


def cmd_render(args) -> int:
    f = load_func(args.func)
    _check_dim(args, f.dim)
    if f.dim != 2:
        raise DimensionError("render draws planar functions only")
    svg, info = render_function(f, _bbox(args.bbox), args.width, _tol(args), lines=not args.no_lines)
    _emit(svg, args.out)
    sys.stderr.write(f"{info['signatures']} active signatures, {info['hyperplanes']} hyperplanes\n")
    return 0


def cmd_oracle(args) -> int:
    f = load_func(args.func)
    _check_dim(args, f.dim)
    tol = _tol(args)
    out = []
    for x in _points(args, f.dim):
        y = prox(f, x, tol).y
        z = prox_oracle(f, x, levels=args.levels)
        out.append({"x": x, "prox": y, "oracle": z, "difference": float(np.linalg.norm(y - z))})
    _emit(dumps(out), args.out)
    return 0


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        where = self.prog.partition(" ")[2]
        raise ParseError(f"{where}: {message}" if where else message)


# values that may start with a minus sign, e.g. ``--bbox -7,-4,8,5``
_VALUE_FLAGS = ("--bbox", "--point")


def _glue_values(argv: list[str]) -> list[str]:
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def _common(samples: int = 10_000) -> argparse.ArgumentParser:
    # one parent per subcommand: parents share their Action objects
    c = _Parser(add_help=False)
    c.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    c.add_argument("--samples", type=int, default=samples, help=f"sample count for checks (default {samples})")
    c.add_argument("--dim", type=int, default=None, help="expected ambient dimension")
    c.add_argument("--act-tol", type=float, default=None)
    c.add_argument("--grad-tol", type=float, default=None)
    c.add_argument("--cert-tol", type=float, default=None)
    c.add_argument("--out", default=None, help="output file (default stdout)")
    return c


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kolmostrip", description="Generalized strips and polyhedral prox maps.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def points(q):
        q.add_argument("--point", action="append", help="comma-separated coordinates (repeatable)")
        q.add_argument("--points", help="CSV file with one point per row")

    q = sub.add_parser("prox", parents=[_common()], help="prox points with dual certificates")
    q.add_argument("--func", required=True)
    points(q)
    q.set_defaults(run=cmd_prox)

    q = sub.add_parser("member", parents=[_common()], help="generalized strip membership")
    q.add_argument("--func", required=True)
    points(q)
    q.set_defaults(run=cmd_member)

    q = sub.add_parser("merge", parents=[_common()], help="merge strips into one")
    q.add_argument("--func", nargs="+", required=True)
    q.add_argument("--cap", type=int, default=4096, help="piece cap after pruning")
    q.set_defaults(run=cmd_merge)

    q = sub.add_parser("cover", parents=[_common()], help="build a boundary cover file")
    q.add_argument("strategy", choices=[s for s in STRATEGIES if s != "external-file"])
    q.add_argument("--set", required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--r", type=float, default=None, help="neighborhood radius (convex strategy)")
    q.set_defaults(run=cmd_cover)

    q = sub.add_parser("pipeline", parents=[_common(20_000)], help="build and verify F = prox_f for a set")
    q.add_argument("--set", required=True)
    q.add_argument("--eps", type=float, required=True)
    q.add_argument("--strategy", choices=STRATEGIES, default=None)
    q.add_argument("--cover", help="external CoverFile (implies --strategy external-file)")
    q.add_argument("--thicken", action="store_true")
    q.add_argument("--report", help="report JSON path (default stdout)")
    q.add_argument("--svg", help="write a figure of the run")
    q.add_argument("--width", type=int, default=480, help="SVG width in pixels")
    q.set_defaults(run=cmd_pipeline)

    q = sub.add_parser("verify", parents=[_common()], help="check a cover file and/or a prox map")
    q.add_argument("--cover")
    q.add_argument("--func")
    q.add_argument("--set")
    q.add_argument("--bbox")
    q.add_argument("--pairs", type=int, default=100_000)
    q.add_argument("--corrupt", type=float, default=1.0, help="scale F by this factor (harness self-test)")
    q.add_argument("--limit-set", action="store_true", help="also check points of the exact carpet (depth 12)")
    q.set_defaults(run=cmd_verify)

    q = sub.add_parser("render", parents=[_common()], help="SVG of a planar function's strip")
    q.add_argument("--func", required=True)
    q.add_argument("--bbox", required=True, help="xmin,ymin,xmax,ymax")
    q.add_argument("--width", type=int, default=480)
    q.add_argument("--no-lines", action="store_true")
    q.set_defaults(run=cmd_render)

    q = sub.add_parser("oracle", parents=[_common()], help="compare prox with the brute-force oracle")
    q.add_argument("--func", required=True)
    q.add_argument("--levels", type=int, default=6)
    points(q)
    q.set_defaults(run=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_glue_values(list(sys.argv[1:] if argv is None else argv)))
        return args.run(args)
    except KolmostripError as e:
        sys.stderr.write(f"kolmostrip: {e}\n")
        return e.exit_code
    except ValueError as e:
        # constructor validation outside the error hierarchy is bad input
        sys.stderr.write(f"kolmostrip: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
