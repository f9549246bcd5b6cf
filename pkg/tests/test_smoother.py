from __future__ import annotations

import numpy as np
import pytest

from errors import ConfigError, DimensionError, SmoothingFailed
from signals import Control, ControlKind
from smoother import SmoothingMode, SmoothingSpec, smooth_control, smooth_family_segment


@pytest.fixture
def step():
    return Control.constant([0.0, 0.5, 1.0], [[0.0], [1.0]])


def _spec(budget, mode=SmoothingMode.RAMPS, left=(0.0, 0.0), right=(1.0, 0.0), **kwargs):
    return SmoothingSpec(budget, left, right, mode=mode, **kwargs)


def test_single_ramp_costs_three_eighths(step):
    out = smooth_control(step, _spec(1.0, ramp_width=0.1))
    assert out.kind is ControlKind.CUBIC
    assert out.l1_distance(step) == pytest.approx(0.375 * 0.1, rel=1e-9)
    assert out.discontinuities() == []


def test_ramps_halve_until_budget(step):
    out = smooth_control(step, _spec(0.01))
    # h runs 0.125, 0.0625, 0.03125, 0.015625
    assert out.l1_distance(step) == pytest.approx(0.375 * 0.015625, rel=1e-9)


def test_pins_are_exact(step):
    spec = _spec(0.05, left=(0.25, -1.5), right=(0.8, 2.0))
    for mode in SmoothingMode:
        out = smooth_control(step, SmoothingSpec(0.05, spec.left_pin, spec.right_pin, mode=mode))
        assert out.value(0.0)[0] == 0.25
        assert out.derivative(0.0)[0] == -1.5
        assert out.value(1.0, "left")[0] == 0.8
        assert out.derivative(1.0, "left")[0] == 2.0
        assert out.l1_distance(step) <= 0.05


def test_spline_with_free_right_slope(step):
    out = smooth_control(step, _spec(0.05, mode=SmoothingMode.SPLINE, right=(1.0, None)))
    assert out.value(1.0, "left")[0] == 1.0
    assert out.l1_distance(step) <= 0.05
    assert out.sup_norm() <= 2.0 * 1.0 + 1.0


def test_vector_controls():
    v = Control.constant([0.0, 0.3, 1.0], [[1.0, -1.0], [0.0, 2.0]])
    spec = SmoothingSpec(0.1, ([1.0, -1.0], [0.0, 0.0]), ([0.0, 2.0], [0.0, 0.0]))
    out = smooth_control(v, spec)
    assert out.dim == 2
    assert out.l1_distance(v) <= 0.1


def test_input_errors(step):
    with pytest.raises(DimensionError):
        smooth_control(step.as_cubic(), _spec(1.0))
    with pytest.raises(ConfigError):
        _spec(0.0)
    with pytest.raises(DimensionError):
        SmoothingSpec(1.0, ([0.0, 0.0], [0.0, 0.0]), ([1.0], [0.0]))


def test_unreachable_budget(step):
    with pytest.raises(SmoothingFailed):
        smooth_control(step, _spec(1e-15, left=(5.0, 0.0)))


def test_family_segment_pinned_left():
    times = np.linspace(0.0, 1.0, 9)
    samples = np.sin(times)
    out = smooth_family_segment(times, samples, (0.001, 1.0), delta1=0.01)
    assert out.value(0.0)[0] == 0.001
    assert out.derivative(0.0)[0] == 1.0
    assert out.value(1.0, "left")[0] == samples[-1]
    grid = np.linspace(0.0, 1.0, 101)
    assert np.max(np.abs(out.values(grid)[:, 0] - np.sin(grid))) < 0.011


def test_family_segment_gap_too_large():
    times = np.linspace(0.0, 1.0, 5)
    with pytest.raises(SmoothingFailed):
        smooth_family_segment(times, np.zeros(5), (10.0, 0.0), delta1=0.01)
