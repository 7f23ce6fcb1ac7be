import numpy as np
import pytest

from mtc.curves import (
    CurveError,
    MonotoneProfile,
    curve_from_spec,
    increasing_family,
    is_monotone,
    monotone_curve,
    monotone_family,
    reverse,
    segment_curve,
    staircase_curve,
)


def test_segment_midpoint_and_velocity():
    c = segment_curve((0, 0), (1, 1))
    assert np.allclose(c(0.5), [0.5, 0.5])
    assert np.allclose(c.derivative(0.3), [1, 1])


def test_constant_segment():
    c = segment_curve((2, 3), (2, 3))
    assert np.allclose(c.derivative(np.linspace(0, 1, 5)), 0)
    assert is_monotone(c, "increasing") and is_monotone(c, "decreasing")


def test_segment_with_fixed_axis_is_increasing():
    c = segment_curve((0, 1), (2, 1))
    assert np.all(c.sample(20)[:, 1] == 1.0)
    assert is_monotone(c, "increasing")


def test_identity_profile_matches_segment():
    seg = segment_curve((0, 0), (1, 2))
    mono = monotone_curve((0, 0), (1, 2), MonotoneProfile.identity(2))
    assert np.allclose(seg.sample(20), mono.sample(20), atol=1e-15)


def test_power_profile_substitution():
    c = monotone_curve((0, 0), (1, 1), MonotoneProfile.pure((2, 0.5)))
    assert np.allclose(c(0.25), [0.0625, 0.5])


def test_mixed_directions_not_orderable():
    with pytest.raises(CurveError, match="not orderable"):
        monotone_curve((0, 0), (1, -1), MonotoneProfile.identity(2))


def test_reverse():
    c = segment_curve((0, 0), (1, 1))
    assert np.allclose(reverse(c)(0.0), [1, 1])
    mono = monotone_curve((0, 0), (1, 1), MonotoneProfile.pure((3, 0.5)))
    assert np.allclose(reverse(reverse(mono)).sample(20), mono.sample(20))
    assert not is_monotone(reverse(mono), "increasing")
    assert is_monotone(reverse(mono), "decreasing")


def test_staircase_is_not_increasing():
    c = staircase_curve((0, 0), (1, 1))
    assert np.allclose(c.breakpoints, [0, 1, 2])
    assert np.allclose(c(1.0), [1, 0])
    assert not is_monotone(c, "increasing")


def test_segment_is_increasing():
    assert is_monotone(segment_curve((0, 0), (1, 2)), "increasing")


def test_velocity_matches_finite_difference():
    c = monotone_curve((0, 0), (1, 2), MonotoneProfile((0.3, 0.7), (2.0, 0.5)))
    tau, h = np.array([0.2, 0.5, 0.9]), 1e-6
    fd = (c(tau + h) - c(tau - h)) / (2 * h)
    assert np.allclose(c.derivative(tau), fd, atol=1e-6)


def test_family_of_size_zero_is_the_segment():
    fam = increasing_family((0, 0), (1, 1), 0, seed=1)
    assert [c.curve_id for c in fam] == ["segment"]


def test_family_is_deterministic_and_increasing():
    a = increasing_family((0, 0), (1, 1), 8, seed=42)
    b = increasing_family((0, 0), (1, 1), 8, seed=42)
    assert len(a) == 9
    for x, y in zip(a, b):
        assert np.array_equal(x.sample(33), y.sample(33))
    assert all(is_monotone(c, "increasing") for c in a)


def test_decreasing_family():
    fam = monotone_family((1, 1), (0, 0), 4, seed=3)
    assert all(is_monotone(c, "decreasing") for c in fam)
    with pytest.raises(CurveError):
        increasing_family((1, 1), (0, 0), 2)


def test_curve_from_spec():
    assert curve_from_spec("segment", (0, 0), (1, 1)).curve_id == "segment"
    c = curve_from_spec({"type": "monotone", "weights": [1, 1], "powers": [2, 0.5]}, (0, 0), (1, 1))
    assert np.allclose(c(0.25), [0.0625, 0.5])
    r = curve_from_spec({"type": "staircase", "order": [2, 1], "reverse": True}, (0, 0), (1, 1))
    assert np.allclose(r(r.a), [1, 1]) and np.allclose(r(r.b), [0, 0])
    with pytest.raises(CurveError):
        curve_from_spec({"type": "spiral"}, (0, 0), (1, 1))
