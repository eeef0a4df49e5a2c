import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pitl.metrics import objective, presence_rate
from pitl.scene import DegenerateSceneError, DepthMap, RegionMask


def region_of(member):
    return RegionMask(np.asarray(member, dtype=bool), 1, 1)


def maps(*arrays):
    return [DepthMap(np.asarray(a, dtype=np.float64)) for a in arrays]


# --------------------------------------------------------------------------
# objective


def test_objective_zero_on_identity():
    d = DepthMap(np.random.default_rng(0).uniform(1, 5, (6, 6)))
    region = region_of(np.ones((6, 6)))
    assert objective(d, d, region) == 0.0


def test_objective_hand_computed():
    # |3-4| + |5-4.5| = 1.5
    est, tgt = maps([[3.0, 5.0]], [[4.0, 4.5]])
    region = region_of([[True, True]])
    assert objective(est, tgt, region) == 1.5


def test_objective_ignores_pixels_outside_region():
    est, tgt = maps([[3.0, 100.0]], [[3.0, 0.0]])
    region = region_of([[True, False]])
    assert objective(est, tgt, region) == 0.0


def test_objective_shape_mismatch():
    est, tgt = maps(np.ones((2, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        objective(est, tgt, region_of(np.ones((2, 2))))


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_objective_is_a_metric_on_region(seed):
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    member = rng.uniform(size=shape) < 0.6
    member.flat[int(rng.integers(member.size))] = True
    region = region_of(member)
    a, b, c = maps(*(rng.uniform(0, 9, shape) for _ in range(3)))
    dab = objective(a, b, region)
    assert dab >= 0
    assert objective(a, a, region) == 0.0
    assert dab == objective(b, a, region)  # symmetry
    assert dab <= objective(a, c, region) + objective(c, b, region) + 1e-9  # triangle


# --------------------------------------------------------------------------
# presence rate


def test_presence_one_when_object_present():
    rng = np.random.default_rng(1)
    orig = DepthMap(rng.uniform(1, 3, (5, 5)))
    back = DepthMap(orig.values + rng.uniform(0.5, 2.0, (5, 5)))
    region = region_of(np.ones((5, 5)))
    assert presence_rate(orig, orig, back, region) == 1.0


def test_presence_zero_when_object_vanished():
    rng = np.random.default_rng(2)
    orig = DepthMap(rng.uniform(1, 3, (5, 5)))
    back = DepthMap(orig.values + rng.uniform(0.5, 2.0, (5, 5)))
    region = region_of(np.ones((5, 5)))
    assert presence_rate(back, orig, back, region) == 0.0


def test_presence_midpoint_hand_computed():
    # |3-4| / |2-4| = 0.5
    est, orig, back = maps([[3.0]], [[2.0]], [[4.0]])
    assert presence_rate(est, orig, back, region_of([[True]])) == 0.5


def test_presence_can_exceed_one_on_overshoot():
    est, orig, back = maps([[0.0]], [[2.0]], [[4.0]])
    assert presence_rate(est, orig, back, region_of([[True]])) == 2.0


def test_presence_degenerate_pixel_raises():
    est, orig, back = maps([[1.0]], [[4.0]], [[4.0]])
    with pytest.raises(DegenerateSceneError):
        presence_rate(est, orig, back, region_of([[True]]))


def _random_presence_setup(rng, shape):
    # keep |orig - back| bounded away from zero so the metric is well conditioned
    orig = rng.uniform(1.0, 4.0, shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    back = orig + sign * rng.uniform(0.5, 2.0, shape)
    back = np.abs(back)
    bad = np.abs(orig - back) < 0.25
    back[bad] = orig[bad] + 1.0
    member = rng.uniform(size=shape) < 0.7
    member.flat[int(rng.integers(member.size))] = True
    return orig, back, member


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_presence_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    shape = (int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    orig, back, member = _random_presence_setup(rng, shape)
    est = rng.uniform(0.5, 6.0, shape)
    a = float(rng.uniform(0.5, 2.0))
    b = float(rng.uniform(0.0, 3.0))
    region = region_of(member)
    e1 = presence_rate(*maps(est, orig, back), region)
    e2 = presence_rate(*maps(a * est + b, a * orig + b, a * back + b), region)
    assert abs(e1 - e2) < 1e-9


@given(
    st.integers(min_value=0, max_value=10_000),
    st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
)
@settings(max_examples=60, deadline=None)
def test_presence_linear_along_object_background_segment(seed, t):
    rng = np.random.default_rng(seed)
    shape = (4, 4)
    orig, back, member = _random_presence_setup(rng, shape)
    est = back + t * (orig - back)
    if np.any(est < 0):  # depth maps must stay non-negative
        return
    e = presence_rate(*maps(est, orig, back), region_of(member))
    assert abs(e - abs(t)) < 1e-9
