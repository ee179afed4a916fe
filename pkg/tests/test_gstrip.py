import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kolmostrip.errors import DimensionError, PieceCapError
from kolmostrip.geom import BoundingBox, ClassicalStrip, SampleStream, sample_box, strip_membership_many
from kolmostrip.gstrip import (
    PRUNE_CERT_TOL,
    GenStrip,
    from_classical,
    gamma_upper_bound,
    image_hyperplanes,
    measure_constant,
    member,
    member_many,
    merge,
    merge_all,
    prune,
    strip_area_monte_carlo,
)
from kolmostrip.kolmap import figure_function
from kolmostrip.polyfun import PolyhedralFunc, evaluate_many, lip, prox_many

ABS = GenStrip(PolyhedralFunc([[0, 1], [0, -1]], [0, 0]))
FIG = GenStrip(figure_function())


def abs_1d(shift=0.0):
    return GenStrip(PolyhedralFunc([[1.0], [-1.0]], [-shift, shift]))


def test_from_classical_examples():
    S = from_classical(ClassicalStrip([0, 1], 0, 2))
    assert np.array_equal(S.f.V, [[0, 1], [0, -1]]) and np.array_equal(S.f.c, [0, 0])
    assert S.width_bound == 2
    S = from_classical(ClassicalStrip([0, 1], 0, 0.1))
    assert S.width_bound == pytest.approx(0.1)
    assert member(S, [7, 0.049]) and not member(S, [7, 0.051])


def test_member_examples():
    assert member(ABS, [3, 0.4])
    assert not member(ABS, [3, 2])
    assert not member(GenStrip(PolyhedralFunc.zero(2)), [0.3, -0.2])
    assert member(FIG, [-2.5, 0])


def test_merge_orthogonal_abs():
    a = GenStrip(PolyhedralFunc([[0.5, 0], [-0.5, 0]], [0, 0]))
    b = GenStrip(PolyhedralFunc([[0, 0.5], [0, -0.5]], [0, 0]))
    h = merge(a, b).f
    assert h.n_pieces == 4
    assert np.all(h.c == 0)
    assert lip(h) == pytest.approx(math.sqrt(2) / 2)
    X = np.random.default_rng(0).normal(size=(1000, 2))
    assert np.allclose(h(X), (np.abs(X[:, 0]) + np.abs(X[:, 1])) / 2)


def test_merge_with_zero_is_identity():
    h = merge(FIG, GenStrip(PolyhedralFunc.zero(2))).f
    X = np.random.default_rng(1).normal(scale=4, size=(1000, 2))
    assert np.array_equal(h(X), FIG.f(X))


def test_merge_double_slab():
    h = merge(abs_1d(), abs_1d(10.0), do_prune=False).f
    assert sorted(zip(h.V[:, 0].tolist(), h.c.tolist())) == [(-2.0, 11.0), (0.0, -11.0), (0.0, 9.0), (2.0, -9.0)]
    hp = prune(h)
    assert sorted(zip(hp.V[:, 0].tolist(), hp.c.tolist())) == [(-2.0, 11.0), (0.0, 9.0), (2.0, -9.0)]
    y = np.linspace(-3, 13, 1601)[:, None]
    inside = member_many(GenStrip(hp), y)
    expected = (np.abs(y[:, 0]) <= 1) | (np.abs(y[:, 0] - 10) <= 1)
    away = np.minimum.reduce([np.abs(np.abs(y[:, 0]) - 1), np.abs(np.abs(y[:, 0] - 10) - 1)]) > 1e-9
    assert np.array_equal(inside[away], expected[away])


def test_merge_dimension_mismatch():
    with pytest.raises(DimensionError):
        merge(ABS, abs_1d())


def test_merge_all_examples():
    assert merge_all([FIG]) is FIG
    w = 0.05
    slabs = [from_classical(ClassicalStrip(n, b, w)) for n, b in [([1, 0], 0), ([1, 0], 1), ([0, 1], 0), ([0, 1], 1)]]
    S = merge_all(slabs)
    assert S.width_bound <= 4 * w + 1e-12
    X = sample_box(BoundingBox([-0.5, -0.5], [1.5, 1.5]), 20_000, SampleStream(4))
    for s in slabs:
        inside = member_many(s, X)
        assert np.all(member_many(S, X[inside]))
    copies = [from_classical(ClassicalStrip([0.6, 0.8], 0.3, w))] * 5
    S = merge_all(copies)
    assert S.width_bound <= 5 * w + 1e-12
    Y = X[member_many(copies[0], X)]
    assert np.all(member_many(S, Y))


def test_piece_cap():
    slabs = [from_classical(ClassicalStrip([math.cos(t), math.sin(t)], 0.1 * k, 0.01)) for k, t in enumerate(np.linspace(0, 3, 6))]
    with pytest.raises(PieceCapError):
        merge_all(slabs, cap=8)


def test_prune_examples():
    f = PolyhedralFunc([[1.0], [1.0]], [0.0, -1.0])
    g = prune(f)
    assert g.n_pieces == 1 and g.c[0] == 0.0
    f = PolyhedralFunc([[2.0], [0.0], [-2.0], [0.0]], [-9.0, 9.0, 11.0, -11.0])
    g = prune(f)
    assert sorted(g.c.tolist()) == [-9.0, 9.0, 11.0]


@given(
    st.integers(1, 3).flatmap(
        lambda d: st.tuples(
            hnp.arrays(np.float64, (12, d), elements=st.floats(-1, 1)),
            hnp.arrays(np.float64, (12,), elements=st.floats(-1, 1)),
        )
    ),
    st.integers(0, 2**31),
)
def test_prune_is_sound(Vc, seed):
    V, c = Vc
    V = np.vstack([V, V[:3]])
    c = np.concatenate([c, c[:3] - 0.5])
    f = PolyhedralFunc(V, c)
    g = prune(f)
    X = np.random.default_rng(seed).normal(scale=3, size=(10_000, f.dim))
    fx, gx = evaluate_many(f, X)[0], evaluate_many(g, X)[0]
    # g keeps a subset of the pieces, and a dropped piece is dominated up to
    # a gradient residual of PRUNE_CERT_TOL relative to the gradients
    assert np.all(gx <= fx)
    assert np.all(fx - gx <= PRUNE_CERT_TOL * max(lip(f), 1e-300) * (1 + np.linalg.norm(X, axis=1)))
    assert lip(g) <= lip(f)


def test_prune_preserves_values_exactly_on_generic_data():
    rng = np.random.default_rng(12)
    for d in (1, 2, 3, 4):
        V = rng.normal(size=(40, d))
        c = rng.normal(size=40)
        # dominated by construction: convex combinations minus a margin, and duplicates
        W = rng.dirichlet(np.ones(40), size=30)
        V = np.vstack([V, W @ V, V[:5]])
        c = np.concatenate([c, W @ c - 0.01, c[:5] - 1])
        f = PolyhedralFunc(V, c)
        g = prune(f)
        assert g.n_pieces <= 40
        X = rng.normal(scale=5, size=(10_000, d))
        assert np.array_equal(evaluate_many(f, X)[0], evaluate_many(g, X)[0])


def test_image_hyperplanes_examples():
    H = image_hyperplanes(ABS)
    assert len(H) == 1
    assert np.allclose(np.abs(H.normals[0]), [0, 1]) and H.offsets[0] == 0
    assert len(image_hyperplanes(FIG)) == 6

    dbl = GenStrip(PolyhedralFunc([[2.0], [0.0], [-2.0]], [-9.0, 9.0, 11.0]))
    lines = lambda H: sorted(np.round(H.offsets / H.normals[:, 0], 12).tolist())
    assert lines(image_hyperplanes(dbl, adjacent_only=True)) == [1.0, 9.0]
    assert lines(image_hyperplanes(dbl)) == [1.0, 5.0, 9.0]


def test_image_flattening_figure():
    X = sample_box(BoundingBox([-7, -4], [8, 5]), 20_000, SampleStream(2))
    b = prox_many(FIG.f, X)
    H = image_hyperplanes(FIG)
    assert b.nondiff.sum() > 1000
    assert np.max(H.distance(b.y[b.nondiff])) <= 1e-7


def test_shifted_candidates_cover_strip_boundary():
    H = image_hyperplanes(ABS, shifted=True)
    offs = sorted(set(np.round(np.abs(H.offsets), 12).tolist()))
    assert offs == [0.0, 1.0]


def test_gamma_examples():
    assert gamma_upper_bound([]) == 0
    assert gamma_upper_bound([from_classical(ClassicalStrip([1, 0], 0, 0.3))]) == pytest.approx(0.3)
    cover = [from_classical(ClassicalStrip(n, b, 0.05)) for n, b in [([1, 0], 0), ([1, 0], 1), ([0, 1], 0), ([0, 1], 1)]]
    assert gamma_upper_bound(cover) == pytest.approx(0.2)


def test_measure_constants():
    assert measure_constant(2, 1.0) == 8.0
    assert measure_constant(2, 1.0, "ball") == pytest.approx(2 * math.pi)
    assert measure_constant(3, 0.5, "ball") == pytest.approx(4 * math.pi * 0.25)
    with pytest.raises(ValueError):
        measure_constant(2, 1.0, "torus")


def test_classical_strip_area_matches_closed_form():
    S = from_classical(ClassicalStrip([0.6, 0.8], 0.1, 0.2))
    r = 1.0
    area, se = strip_area_monte_carlo(S, r, 200_000, SampleStream(9))
    # the slab crosses the square completely: exact area from a fine grid
    g = np.linspace(-r, r, 2001)
    P = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    exact = np.mean(strip_membership_many(ClassicalStrip([0.6, 0.8], 0.1, 0.2), P)) * 4
    assert abs(area - exact) <= 4 * se + 1e-3
    assert area <= 2 * r * S.width_bound * math.sqrt(2) + 4 * se


@given(st.integers(0, 10_000))
def test_union_lemma_sampled(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))

    def rand_strip():
        m = int(rng.integers(1, 7))
        V = rng.normal(size=(m, d)) * 0.5
        return GenStrip(PolyhedralFunc(V, rng.normal(size=m)))

    a, b = rand_strip(), rand_strip()
    h = merge(a, b)
    assert lip(h.f) <= lip(a.f) + lip(b.f) + 1e-12
    X = rng.normal(scale=2, size=(2000, d))
    ba, bb, bh = prox_many(a.f, X), prox_many(b.f, X), prox_many(h.f, X)
    either = ba.nondiff | bb.nondiff
    assert not np.any(either & ~bh.nondiff)
