import math

import numpy as np
import pytest

from kolmostrip.covers import (
    ConvexBody,
    ScalarField,
    convex_neighborhood_cover,
    convex_polyhedral_approx,
    dc_graph_cover,
    radial_cover,
    sample_neighborhood_shell,
    surface_cover,
)
from kolmostrip.errors import PreconditionError
from kolmostrip.geom import BoundingBox, SampleStream, sample_box
from kolmostrip.gstrip import member_many
from kolmostrip.polyfun import PolyhedralFunc, evaluate_many, lip

UNIT = BoundingBox([-1.0], [1.0])
CHART = BoundingBox([-1 / 12], [1 / 12])


def sin_field():
    return ScalarField(lambda X: np.sin(X[:, 0]) / 10, CHART, 0.1, grad=lambda X: np.cos(X) / 10, M=0.1, name="sin")


def quad_field():
    return ScalarField(lambda X: X[:, 0] ** 2 / 20, CHART, 1 / 120, grad=lambda X: X / 10, M=0.1, name="quad")


def test_disk_neighborhood_cover():
    cov = convex_neighborhood_cover(ConvexBody.ball([0, 0], 1.0), 0.1, 0.05, stream=SampleStream(3))
    assert len(cov.strips) == 1
    assert cov.total_width_bound <= 0.3
    assert cov.containment_samples_checked == 10_000
    assert cov.violations == 0


def test_square_corners_give_side_pieces():
    sq = ConvexBody.from_points([[0, 0], [1, 0], [1, 1], [0, 1]])
    r, eps = 0.1, 0.05
    cov = convex_neighborhood_cover(sq, r, eps)
    f = cov.strips[0].f
    assert f.n_pieces == 5
    norms = np.linalg.norm(f.V, axis=1)
    assert norms[0] == 0
    assert np.all(norms[1:] <= r + eps) and np.allclose(norms[1:], r + eps, rtol=1e-15)
    dirs = {tuple(np.round(v / np.linalg.norm(v)).astype(int)) for v in f.V[1:]}
    assert dirs == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    # each side piece vanishes on its own side
    x = np.array([[1.0, 0.5], [0.0, 0.5], [0.5, 1.0], [0.5, 0.0]])
    assert np.allclose(evaluate_many(f, x)[0], 0, atol=1e-15)
    assert cov.violations == 0


@pytest.mark.parametrize("r", [0.5, 2.0, 8.0])
def test_large_r_grows_linearly(r):
    cov = convex_neighborhood_cover(ConvexBody.ball([0, 0], 1.0), r, 0.05, samples=2000)
    assert cov.violations == 0
    assert cov.total_width_bound <= 2 * (r + 0.05)
    assert cov.total_width_bound >= 2 * r


def test_neighborhood_cover_rejects_flat_input():
    seg = ConvexBody.from_points([[0, 0], [1, 0], [2, 0]])
    with pytest.raises(PreconditionError, match="thicken"):
        convex_neighborhood_cover(seg, 0.1, 0.05)
    with pytest.raises(ValueError):
        convex_neighborhood_cover(ConvexBody.ball([0, 0], 1.0), 0.0, 0.05)


def test_shell_samples_lie_in_shell():
    C = ConvexBody.ball([0.5, -0.5], 2.0)
    X = sample_neighborhood_shell(C, 0.2, 3000, SampleStream(1))
    d = np.linalg.norm(X - [0.5, -0.5], axis=1)
    assert X.shape == (3000, 2)
    assert np.all((d >= 2.0) & (d <= 2.2))


def test_three_dim_ball_cover():
    cov = convex_neighborhood_cover(ConvexBody.ball([0, 0, 0], 1.0), 0.2, 0.1, samples=3000)
    assert cov.violations == 0
    assert cov.total_width_bound <= 2 * 0.3


def test_abs_approx_is_exact():
    f = ScalarField(lambda X: np.abs(X[:, 0]), UNIT, 1.0, grad=np.sign, name="abs")
    g = convex_polyhedral_approx(f, net=[[-0.5], [0.0], [0.5]])
    x = np.linspace(-1, 1, 1001)[:, None]
    assert np.array_equal(evaluate_many(g, x)[0], np.abs(x[:, 0]))
    assert lip(g) == 1


def test_square_approx_gap():
    f = ScalarField(lambda X: X[:, 0] ** 2, UNIT, 2.0, grad=lambda X: 2 * X, name="sq")
    g = convex_polyhedral_approx(f, net=[[-0.5], [0.0], [0.5]])
    x = np.linspace(-1, 1, 20001)[:, None]
    gap = f(x) - evaluate_many(g, x)[0]
    assert gap.min() >= -1e-15
    assert gap.max() == pytest.approx(0.25, abs=1e-12)
    assert np.array_equal(evaluate_many(g, [[-0.5], [0.0], [0.5]])[0], [0.25, 0.0, 0.25])


def test_affine_approx_single_point():
    f = ScalarField(lambda X: 0.3 * X[:, 0] - 0.1 * X[:, 1] + 2, BoundingBox([0, 0], [1, 1]), 0.4,
                    grad=lambda X: np.tile([0.3, -0.1], (X.shape[0], 1)))
    g = convex_polyhedral_approx(f, net=[[0.5, 0.5]])
    X = sample_box(f.U, 1000, SampleStream(0))
    assert np.allclose(evaluate_many(g, X)[0], f(X), rtol=0, atol=1e-15)
    assert g.n_pieces == 1


def test_default_net_meets_gap():
    f = ScalarField(lambda X: np.sum(X**2, axis=1) / 4, BoundingBox([-1, -1], [1, 1]), math.sqrt(2) / 2,
                    grad=lambda X: X / 2)
    g = convex_polyhedral_approx(f, eps=0.05)
    X = sample_box(f.U, 5000, SampleStream(2))
    gap = f(X) - evaluate_many(g, X)[0]
    assert gap.min() >= -1e-12 and gap.max() <= 0.05
    assert lip(g) <= f.L


def test_nonconvex_rejected():
    f = ScalarField(lambda X: -X[:, 0] ** 2, UNIT, 2.0, grad=lambda X: -2 * X)
    with pytest.raises(PreconditionError, match="not convex"):
        convex_polyhedral_approx(f)


def test_dc_zero_is_slab():
    z = PolyhedralFunc([[0.0]], [0.0])
    S = dc_graph_cover(z, z, 0.1)
    X = sample_box(BoundingBox([-1, -1], [1, 1]), 10_000, SampleStream(4))
    inside = member_many(S, X)
    assert np.array_equal(inside, np.abs(X[:, 1]) <= 0.2)
    assert S.width_bound == pytest.approx(0.4, rel=1e-15)
    assert S.width_bound <= 0.8


def test_dc_band_contained():
    g = PolyhedralFunc([[0.25]], [0.0])
    h = PolyhedralFunc([[0.0]], [0.0])
    S = dc_graph_cover(g, h, 0.05)
    s = SampleStream(5)
    x = s.uniform(-1, 1, 10_000)
    y = x / 4 + s.uniform(-0.05, 0.05, 10_000)
    assert np.all(member_many(S, np.column_stack([x, y])))
    assert S.width_bound <= 8 * 0.05


def test_dc_symmetry():
    g = PolyhedralFunc([[0.3], [-0.1]], [0.0, 0.05])
    h = PolyhedralFunc([[0.2], [0.0]], [-0.1, 0.0])
    eps = 0.03
    S, T = dc_graph_cover(g, h, eps), dc_graph_cover(h, g, eps)
    s = SampleStream(6)
    x = s.uniform(-2, 2, 5000)
    y = s.uniform(-2, 2, 5000)
    P = np.column_stack([x, y])
    Q = np.column_stack([x, -y])
    assert np.array_equal(member_many(S, P), member_many(T, Q))
    diff = evaluate_many(g, x[:, None])[0] - evaluate_many(h, x[:, None])[0]
    band = np.abs(y - diff) <= eps
    assert np.all(member_many(S, P[band]))


def test_dc_lipschitz_precondition():
    with pytest.raises(PreconditionError, match="exceeds 1/3"):
        dc_graph_cover(PolyhedralFunc([[0.5]], [0.0]), PolyhedralFunc([[0.0]], [0.0]), 0.1)


@pytest.mark.parametrize("field", [sin_field, quad_field])
def test_surface_cover_examples(field):
    eps = 0.01
    cov = surface_cover(field(), eps, stream=SampleStream(7))
    assert len(cov.strips) == 1
    assert cov.total_width_bound <= 16 * eps
    assert cov.containment_samples_checked == 10_000
    assert cov.violations == 0


def test_surface_cover_affine_is_flat_band():
    f = ScalarField(lambda X: X[:, 0] / 8, CHART, 1 / 8, grad=lambda X: np.full_like(X, 1 / 8), M=0.0)
    cov = surface_cover(f, 0.01)
    assert cov.violations == 0
    F = cov.strips[0].f
    # g = f and h = 0 up to the net: both polyhedral parts have a single gradient
    assert F.n_pieces == 2


def test_surface_cover_preconditions():
    steep = ScalarField(lambda X: X[:, 0] / 2, CHART, 0.5, grad=lambda X: np.full_like(X, 0.5), M=0.0)
    with pytest.raises(PreconditionError, match="1/6"):
        surface_cover(steep, 0.01)
    # 1/(6M) = 1/6 < 1
    wide = ScalarField(lambda X: np.sin(X[:, 0]) / 10, UNIT, 0.1, grad=lambda X: np.cos(X) / 10, M=1.0)
    with pytest.raises(PreconditionError, match="B\\(0, 1/\\(6M\\)\\)"):
        surface_cover(wide, 0.01)
    no_m = ScalarField(lambda X: X[:, 0] / 8, CHART, 1 / 8)
    with pytest.raises(PreconditionError, match="gradient-Lipschitz"):
        surface_cover(no_m, 0.01)


def test_radial_examples():
    cov = radial_cover([(0.5, 0.6)], 0.01)
    assert len(cov.strips) == 1
    assert cov.total_width_bound <= 0.2 + cov.slack
    assert cov.violations == 0

    empty = radial_cover([], 0.01)
    assert empty.strips == [] and empty.total_width_bound == 0

    two = radial_cover([(0.3, 0.31), (0.8, 0.82)], 0.001, stream=SampleStream(8))
    assert len(two.strips) == 2
    assert two.total_width_bound <= 0.06 + two.slack
    assert two.containment_samples_checked == 20_000 and two.violations == 0


def test_radial_rejects_overlap():
    with pytest.raises(PreconditionError, match="overlap"):
        radial_cover([(0.3, 0.5), (0.4, 0.6)], 0.01)
    with pytest.raises(PreconditionError):
        radial_cover([(0.0, 0.5)], 0.01)
