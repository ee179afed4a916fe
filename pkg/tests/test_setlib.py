import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kolmostrip.covers import ScalarField
from kolmostrip.errors import PreconditionError
from kolmostrip.geom import BoundingBox, SampleStream, sample_box
from kolmostrip.setlib import (
    BOUNDARY,
    INSIDE,
    OUTSIDE,
    _segment_distance,
    area_monte_carlo,
    carpet_deep_member,
    koch_area,
    koch_vertices,
    make_carpet,
    make_disk,
    make_koch,
    make_polygon,
    make_radial,
    make_square,
    make_subgraph,
    sample_carpet_points,
)


def on_segments(A, X):
    return _segment_distance(X, A.segments[:, 0], A.segments[:, 1])


def test_basic_areas():
    assert make_square().exact_area == 1
    assert make_disk(1.0).exact_area == math.pi
    assert make_polygon([[0, 0], [1, 0], [0, 1]]).exact_area == 0.5
    sq = make_square()
    assert sq.segments.shape == (4, 2, 2)
    B = sq.sample_boundary(2000, SampleStream(0))
    on_line = (np.abs(B[:, 0]) <= 1e-9) | (np.abs(B[:, 0] - 1) <= 1e-9) | (np.abs(B[:, 1]) <= 1e-9) | (np.abs(B[:, 1] - 1) <= 1e-9)
    assert np.all(on_line)
    assert np.all(sq.classify(B) == BOUNDARY)


def test_square_classify():
    sq = make_square()
    X = np.array([[0.5, 0.5], [1.5, 0.5], [1.0, 0.3], [0.0, 0.0], [-1e-12, 0.5]])
    assert sq.classify(X).tolist() == [INSIDE, OUTSIDE, BOUNDARY, BOUNDARY, BOUNDARY]


def test_polygon_errors():
    with pytest.raises(PreconditionError, match="3 vertices"):
        make_polygon([[0, 0], [1, 0]])
    with pytest.raises(PreconditionError, match="self-intersecting"):
        make_polygon([[0, 0], [1, 1], [1, 0], [0, 1]])
    with pytest.raises(PreconditionError, match="repeated"):
        make_polygon([[0, 0], [1, 0], [1, 0], [0, 1]])
    with pytest.raises(PreconditionError):
        make_disk(0.0)


def test_koch_examples():
    V0 = koch_vertices(0)
    assert V0.shape == (3, 2)
    sides = np.linalg.norm(V0 - np.roll(V0, -1, axis=0), axis=1)
    assert np.allclose(sides, 1, rtol=1e-15)
    K1 = make_koch(1)
    assert K1.segments.shape[0] == 12
    assert make_koch(3).segments.shape[0] == 3 * 4**3
    assert koch_area(1) == pytest.approx(math.sqrt(3) / 4 * (1 + 1 / 3), rel=1e-15)
    # the geometric series tends to 8/5 of the triangle
    assert koch_area(8) == pytest.approx(math.sqrt(3) / 4 * 8 / 5, rel=1e-3)
    # star: the bump tips lie outside the triangle
    assert make_koch(0).classify(koch_vertices(1)[2::4]).tolist() == [OUTSIDE] * 3
    with pytest.raises(PreconditionError):
        make_koch(9)


@pytest.mark.parametrize("depth", [0, 1, 2, 3])
def test_koch_boundary_on_segments(depth):
    K = make_koch(depth)
    B = K.sample_boundary(3000, SampleStream(depth))
    assert on_segments(K, B).max() <= 1e-9
    assert np.all(K.classify(B) == BOUNDARY)


def test_koch_shoelace_matches_series():
    for k in range(5):
        V = koch_vertices(k)
        x, y = V[:, 0], V[:, 1]
        shoelace = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        assert shoelace == pytest.approx(koch_area(k), rel=1e-12)


def test_carpet_examples():
    C1 = make_carpet(1)
    assert C1.exact_area == pytest.approx(8 / 9, rel=1e-15)
    assert C1.classify([[0.5, 0.5], [0.1, 0.1]]).tolist() == [OUTSIDE, INSIDE]
    assert make_carpet(2).exact_area == pytest.approx(64 / 81, rel=1e-15)
    with pytest.raises(PreconditionError):
        make_carpet(7)


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_carpet_boundary_on_grid_lines(depth):
    C = make_carpet(depth)
    n = 3**depth
    B = C.sample_boundary(4000, SampleStream(depth))
    off = np.min(np.abs(B * n - np.round(B * n)), axis=1) / n
    assert off.max() <= 1e-9
    assert np.all(C.classify(B) == BOUNDARY)
    S = C.segments * n
    vert = S[:, 0, 0] == S[:, 1, 0]
    assert np.all(vert | (S[:, 0, 1] == S[:, 1, 1]))
    assert len(np.unique(S[vert, 0, 0])) + len(np.unique(S[~vert, 0, 1])) <= 2 * (n + 1)


def test_carpet_nesting():
    X = sample_box(BoundingBox([0, 0], [1, 1]), 20_000, SampleStream(9))
    prev = np.ones(X.shape[0], dtype=bool)
    for k in range(4):
        cur = make_carpet(k).contains(X)
        assert not np.any(cur & ~prev)
        prev = cur
    # the exact carpet lies in every finite stage
    deep = carpet_deep_member(X)
    assert not np.any(deep & ~prev)


def test_radial_and_subgraph_examples():
    R = make_radial([(0.5, 0.6)])
    assert R.classify([[0.55, 0], [0.7, 0]]).tolist() == [INSIDE, OUTSIDE]
    B = R.sample_boundary(1000, SampleStream(1))
    d = np.linalg.norm(B, axis=1)
    assert np.all(np.minimum(np.abs(d - 0.5), np.abs(d - 0.6)) <= 1e-9)

    zero = ScalarField(lambda X: np.zeros(X.shape[0]), BoundingBox([-1], [1]), 0.0)
    Z = make_subgraph(zero)
    B = Z.sample_boundary(500, SampleStream(2))
    assert np.all(B[:, 1] == 0) and np.all(np.abs(B[:, 0]) <= 1)

    sin = ScalarField(lambda X: np.sin(X[:, 0]) / 10, BoundingBox([-1 / 12], [1 / 12]), 0.1)
    G = make_subgraph(sin)
    B = G.sample_boundary(5000, SampleStream(3))
    assert np.max(np.abs(B[:, 1] - np.sin(B[:, 0]) / 10)) <= 1e-9
    assert np.all(G.classify(B) == BOUNDARY)


@pytest.mark.parametrize(
    "A, exact",
    [(make_square(), 1.0), (make_disk(1.0), math.pi), (make_carpet(2), 64 / 81), (make_koch(2), koch_area(2))],
    ids=["square", "disk", "carpet2", "koch2"],
)
def test_area_monte_carlo_within_3_sigma(A, exact):
    est, se = area_monte_carlo(A, 100_000, SampleStream(5))
    assert abs(est - exact) <= max(3 * se, 1e-12)
    assert A.exact_area == pytest.approx(exact, rel=1e-15)


def test_area_monte_carlo_needs_samples():
    with pytest.raises(ValueError):
        area_monte_carlo(make_square(), 50, SampleStream(0))


@given(st.integers(0, 2**32 - 1))
def test_inside_samples_are_members(seed):
    A = make_koch(2)
    X = A.sample_inside(200, SampleStream(seed))
    assert X.shape == (200, 2)
    assert np.all(A.contains(X))
    assert np.all(A.bbox.contains(X))


def test_limit_carpet_points():
    P = sample_carpet_points(5000, SampleStream(4))
    assert np.all(carpet_deep_member(P))
    for k in range(5):
        assert np.all(make_carpet(k).contains(P))
