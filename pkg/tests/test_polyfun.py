import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import random_func
from kolmostrip import polyfun
from kolmostrip.errors import DimensionError, ProxConvergenceError
from kolmostrip.kolmap import figure_function
from kolmostrip.polyfun import (
    DEFAULT_TOL,
    PolyhedralFunc,
    Tolerances,
    active_pieces,
    differentiable_at,
    evaluate,
    lip,
    min_norm_in_hull,
    prox,
    prox_enumerate,
    prox_many,
    prox_objective,
    prox_oracle,
    subgradient_certificate,
)

ABS = PolyhedralFunc([[0, 1], [0, -1]], [0, 0])
ZERO = PolyhedralFunc.zero(2)
FIG = figure_function()


# ---- frozen examples


def test_eval_examples():
    assert evaluate(FIG, [0, 10]) == (10.0, 0)
    assert evaluate(ZERO, [4, -2]) == (0.0, 0)
    assert evaluate(ABS, [3, -2]) == (2.0, 1)


def test_lip_examples():
    assert lip(ZERO) == 0
    assert lip(ABS) == 1
    assert lip(FIG) == math.sqrt(5)


def test_prox_examples(backend):
    r = prox(ZERO, [1.5, -2])
    assert np.array_equal(r.y, [1.5, -2]) and r.differentiable

    r = prox(ABS, [3, 0.4])
    assert np.allclose(r.y, [3, 0], atol=1e-15)
    assert not r.differentiable
    assert set(r.active) == {0, 1}
    # x - y = (0, 0.4) = 0.7 (0, 1) + 0.3 (0, -1)
    w = dict(zip(r.support, r.dual_weights))
    assert w[0] == pytest.approx(0.7, abs=1e-15) and w[1] == pytest.approx(0.3, abs=1e-15)

    r = prox(ABS, [3, 2])
    assert np.array_equal(r.y, [3, 1]) and r.differentiable

    assert np.allclose(prox(FIG, [0, 10]).y, [0, 9], atol=1e-14)


def test_oracle_examples():
    assert np.allclose(prox_oracle(ZERO, [0.3, 0.7]), [0.3, 0.7], atol=1e-12)
    assert np.linalg.norm(prox_oracle(ABS, [3, 0.4], levels=6) - [3, 0]) <= 1e-4


def test_oracle_rejects_small_window():
    with pytest.raises(ValueError):
        prox_oracle(ABS, [0, 0], grid_radius=0.5)


def test_certificate_examples():
    ok, res = subgradient_certificate(ABS, [3, 0.4], [3, 0])
    assert ok and res == pytest.approx(0, abs=1e-15)
    ok, _ = subgradient_certificate(ABS, [3, 0.4], [3, 0.2])
    assert not ok
    ok, res = subgradient_certificate(ZERO, [1, 1], [1, 1])
    assert ok and res == 0


def test_differentiable_at_examples():
    assert not differentiable_at(ABS, [0, 0])
    assert differentiable_at(ABS, [0, 5])
    dup = PolyhedralFunc([[0, 1], [0, 1]], [0, 0])
    assert differentiable_at(dup, [2, 3])


def test_activity_is_relative():
    f = PolyhedralFunc([[1.0], [1.0 + 1e-6]], [1e6, 1e6])
    # f_0 and f_1 differ by 1e-6 at y = 1, which is below act_tol * (1 + 1e6)
    assert set(active_pieces(f, [1.0]).tolist()) == {0, 1}


# ---- type contracts


def test_polyhedral_func_validation_and_immutability():
    with pytest.raises(ValueError):
        PolyhedralFunc(np.zeros((0, 2)), [])
    with pytest.raises(DimensionError):
        PolyhedralFunc([[1, 2]], [0, 1])
    with pytest.raises(DimensionError):
        PolyhedralFunc(np.zeros((1, 9)), [0])
    with pytest.raises(ValueError):
        PolyhedralFunc([[np.inf, 0]], [0])
    with pytest.raises(AttributeError):
        ABS.V = np.zeros((2, 2))
    with pytest.raises(ValueError):
        ABS.V[0, 0] = 5
    assert (ABS + 1)([0, 2]) == 3
    assert ABS.scaled(2).lip() == 2


def test_tolerances_positive():
    with pytest.raises(ValueError):
        Tolerances(act_tol=0)


def test_min_norm_in_hull():
    d, w = min_norm_in_hull(np.array([[1.0, 1.0], [1.0, -1.0]]))
    assert d == pytest.approx(1.0)
    assert np.allclose(w, [0.5, 0.5])
    d, _ = min_norm_in_hull(np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert d == pytest.approx(0.0, abs=1e-15)


# ---- backends and fallbacks


def test_backends_agree():
    from kolmostrip import _backend

    if _backend.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(5)
    for d, m in [(1, 3), (2, 7), (3, 20), (5, 9), (8, 30)]:
        f = random_func(rng, m, d)
        X = rng.normal(scale=2, size=(300, d))
        a = _backend.kernels.prox_batch(f.V, f.c, X, 1e-11, 1e-9, 10 * m * m + 100)
        b = _backend.python_kernels.prox_batch(f.V, f.c, X, 1e-11, 1e-9, 10 * m * m + 100)
        assert np.all(a[3] == 0) and np.all(b[3] == 0)
        assert np.max(np.abs(a[0] - b[0])) <= 1e-12
        assert np.array_equal(a[4], b[4])


def test_enumeration_fallback(monkeypatch):
    rng = np.random.default_rng(2)
    f = random_func(rng, 6, 2)
    X = rng.normal(scale=2, size=(50, 2))
    exact = prox_many(f, X).y
    monkeypatch.setattr(polyfun, "_max_iter", lambda m: 1)
    b = prox_many(f, X)
    assert b.fallbacks > 0
    assert np.max(np.abs(b.y - exact)) <= 1e-12


def test_convergence_error_carries_iterate(monkeypatch):
    rng = np.random.default_rng(3)
    f = random_func(rng, 30, 2)
    monkeypatch.setattr(polyfun, "_max_iter", lambda m: 1)
    with pytest.raises(ProxConvergenceError) as e:
        prox_many(f, rng.normal(scale=3, size=(200, 2)))
    assert e.value.best.shape == (2,)
    assert np.isfinite(e.value.residual)


def test_degenerate_vertex_ties(backend):
    """Merged surface cover: nearly parallel pieces meet in many-way near-ties.

    A full working set with a leftover rounding step once made the solver give up here.
    """
    from kolmostrip.cli import parse_set
    from kolmostrip.geom import SampleStream
    from kolmostrip.gstrip import merge_all
    from kolmostrip.kolmap import PipelineConfig, build_boundary_cover

    A = parse_set("subgraph:f=sin")
    f = merge_all(build_boundary_cover(A, PipelineConfig(0.05, n_boundary=500)).strips).f
    assert f.n_pieces > polyfun.ENUMERATION_MAX_PIECES
    n = 20_000 if backend == "compiled" else 4_000
    X = A.sample_inside(n, SampleStream(0).split(1))
    b = prox_many(f, X)
    assert b.fallbacks == 0
    for x, y in zip(X[::97], b.y[::97]):
        assert subgradient_certificate(f, x, y)[0]


# ---- properties


dims = st.integers(1, 4)


@st.composite
def functions(draw, max_pieces=12):
    d = draw(dims)
    m = draw(st.integers(1, max_pieces))
    V = draw(hnp.arrays(np.float64, (m, d), elements=st.floats(-1, 1)))
    c = draw(hnp.arrays(np.float64, (m,), elements=st.floats(-2, 2)))
    x = draw(hnp.arrays(np.float64, (d,), elements=st.floats(-4, 4)))
    return PolyhedralFunc(V, c), x


@given(functions())
def test_prox_certificate_and_displacement(fx):
    f, x = fx
    r = prox(f, x)
    ok, res = subgradient_certificate(f, x, r.y)
    assert ok, res
    assert np.linalg.norm(x - r.y) <= lip(f) + 1e-9
    assert np.allclose(x - r.dual_weights @ f.V[list(r.support)], r.y, atol=1e-9)
    assert np.all(r.dual_weights >= -1e-12)
    assert math.isclose(r.dual_weights.sum(), 1.0, abs_tol=1e-9)


@given(functions(max_pieces=6))
def test_active_set_matches_enumeration(fx):
    f, x = fx
    y = prox(f, x).y
    z, _, _ = prox_enumerate(f, x)
    assert prox_objective(f, x, y) <= prox_objective(f, x, z) + 1e-10
    assert np.linalg.norm(y - z) <= 1e-7


@given(functions(), hnp.arrays(np.float64, (4,), elements=st.floats(-4, 4)))
def test_contraction(fx, x2):
    f, x = fx
    x2 = x2[: f.dim]
    y1, y2 = prox(f, x).y, prox(f, x2).y
    assert np.linalg.norm(y1 - y2) <= np.linalg.norm(x - x2) + 1e-9


@given(functions(), st.floats(-3, 3))
def test_constant_shift_does_not_move_prox(fx, s):
    f, x = fx
    assert np.allclose(prox(f, x).y, prox(f + s, x).y, atol=1e-9)


def test_oracle_agrees_on_random_planar_instances():
    rng = np.random.default_rng(11)
    for _ in range(15):
        f = random_func(rng, int(rng.integers(1, 7)), 2)
        x = rng.normal(scale=2, size=2)
        assert np.linalg.norm(prox(f, x).y - prox_oracle(f, x)) <= 1e-4
