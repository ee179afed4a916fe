import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kolmostrip.errors import DimensionError
from kolmostrip.geom import (
    MAX_DIM,
    AffineFunc,
    BoundingBox,
    ClassicalStrip,
    Hyperplane,
    SampleStream,
    as_point,
    eval_affine,
    sample_ball,
    sample_box,
    strip_membership,
    strip_membership_many,
    unit_ball_volume,
)


def test_eval_affine_examples():
    assert eval_affine(AffineFunc([0, 0], 0), [3, 7]) == 0
    assert eval_affine(AffineFunc([0, 1], 0), [3, 0.4]) == 0.4
    assert eval_affine(AffineFunc([1, -1], -4), [4, 1]) == -1


def test_eval_affine_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_affine(AffineFunc([0, 1], 0), [1, 2, 3])


def test_as_point_rejects_bad_input():
    with pytest.raises(DimensionError):
        as_point(np.zeros(MAX_DIM + 1))
    with pytest.raises(DimensionError):
        as_point([[1.0, 2.0]])
    with pytest.raises(ValueError):
        as_point([1.0, math.nan])


def test_strip_membership_examples():
    s = ClassicalStrip([0, 1], 0, 2)
    assert strip_membership(s, [3, 1])
    assert not strip_membership(s, [3, 1.0001])
    assert strip_membership(ClassicalStrip([1, 0], 0.5, 0.1), [0.5, 9])


def test_strip_normal_is_normalized():
    s = ClassicalStrip([3, 4], 1.0, 0.2)
    assert np.isclose(np.linalg.norm(s.normal), 1.0)
    assert strip_membership_many(s, [[0.6, 0.8], [0.6 + 0.03, 0.8 + 0.04], [1.0, 1.0]]).tolist() == [True, True, False]


def test_hyperplane_distance():
    h = Hyperplane.from_equation([0, 2], 2)  # y = 1
    assert np.allclose(h.distance([[5, 1], [0, 3], [0, -1]]), [0, 2, 2])
    with pytest.raises(ValueError):
        Hyperplane([0, 2], 2)


def test_sample_box_determinism_and_empty():
    bb = BoundingBox([0, -1], [2, 1])
    assert sample_box(bb, 0, SampleStream(3)).shape == (0, 2)
    a = sample_box(bb, 50, SampleStream(3))
    b = sample_box(bb, 50, SampleStream(3))
    assert np.array_equal(a, b)
    assert np.all(bb.contains(a))


def test_split_streams_independent_and_reproducible():
    s = SampleStream(7)
    x1 = s.split(1).uniform(0, 1, 5)
    x2 = s.split(2).uniform(0, 1, 5)
    assert not np.allclose(x1, x2)
    assert np.array_equal(x1, SampleStream(7).split(1).uniform(0, 1, 5))


def test_sample_ball_inside():
    X = sample_ball([1.0, 2.0, 3.0], 0.5, 2000, SampleStream(0))
    assert np.all(np.linalg.norm(X - [1, 2, 3], axis=1) <= 0.5 + 1e-12)


def test_unit_ball_volume():
    assert math.isclose(unit_ball_volume(2), math.pi)
    assert math.isclose(unit_ball_volume(3), 4 * math.pi / 3)


def test_bbox_helpers():
    bb = BoundingBox([0, 0], [2, 4])
    assert bb.volume == 8
    assert np.allclose(bb.center, [1, 2])
    assert bb.expanded(1).volume == 24
    assert np.allclose(bb.scaled(0.5).high, [1.5, 3])
    with pytest.raises(ValueError):
        BoundingBox([1, 0], [0, 1])


@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.floats(-3, 3),
    st.floats(0.01, 4),
    st.lists(st.floats(-10, 10), min_size=2, max_size=2),
)
def test_strip_membership_matches_distance(n, b, w, x):
    if np.linalg.norm(n) < 1e-3:
        return
    s = ClassicalStrip(n, b, w)
    gap = abs(float(np.dot(s.normal, x)) - s.center) - w / 2
    if abs(gap) > 1e-9:
        assert strip_membership(s, x) == (gap < 0)
