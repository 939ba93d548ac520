import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specmpc.filters import (
    FilterSpec,
    Gap,
    ReferenceSpectrum,
    Segment,
    compile_weights,
    default_template,
    flat_reference,
    gap_centers,
    move_gap,
)
from specmpc.spectrum import ConfigurationError

FC = 400e3
N = 2048


def template(gaps=()):
    return FilterSpec(
        (Segment(0, 40e3, "inverse_in_f", 100.0), Segment(40e3, 200e3, "linear_in_f", 1.0)), gaps
    )


def test_zero_filter():
    w = compile_weights(FilterSpec((Segment(0, FC / 2, "constant", 0.0),)), N, FC)
    assert w.weights.shape == (N // 2,)
    assert not np.any(w.weights)
    assert w.full()[0] == 0.0


def test_shapes_at_bin_frequencies():
    w = compile_weights(template(), N, FC).weights
    f = np.arange(1, N // 2 + 1) * FC / N
    low = f <= 40e3
    bw = FC / N
    np.testing.assert_allclose(w[low], 100.0 * bw / f[low])
    np.testing.assert_allclose(w[~low], f[~low] / 200e3)


def test_template_shape_and_gap():
    spec = template((Gap(100e3, 2e3, 100.0),))
    w = compile_weights(spec, N, FC).weights
    f = np.arange(1, N // 2 + 1) * FC / N
    low = f <= 40e3
    assert np.all(np.diff(w[low]) < 0)
    high = (f > 40e3) & ~((f >= 99e3) & (f <= 101e3))
    assert np.all(np.diff(w[high & (f < 99e3)]) > 0)
    assert np.all(w[(f >= 99e3) & (f <= 101e3)] == 100.0)
    assert w[low][-1] > w[~low][0]  # drop at fc/10


def test_boundary_bin_takes_lower_segment():
    spec = FilterSpec((Segment(0, 100e3, "constant", 2.0), Segment(100e3, 200e3, "constant", 5.0)))
    w = compile_weights(spec, N, FC).weights
    n = int(100e3 / (FC / N))  # exactly on the boundary
    assert w[n - 1] == 2.0
    assert w[n] == 5.0


def test_compile_is_deterministic():
    a = compile_weights(template((Gap(100e3, 2e3, 10.0),)), N, FC).weights
    b = compile_weights(template((Gap(100e3, 2e3, 10.0),)), N, FC).weights
    assert np.array_equal(a, b)


@pytest.mark.parametrize(
    "segments,msg",
    [
        ((Segment(0, 120e3, "constant", 1), Segment(100e3, 200e3, "constant", 1)), "overlapping"),
        ((Segment(0, 90e3, "constant", 1), Segment(100e3, 200e3, "constant", 1)), "uncovered"),
        ((Segment(10e3, 200e3, "constant", 1),), "start at 0"),
        ((Segment(0, 150e3, "constant", 1),), "end at fc/2"),
    ],
)
def test_tiling_errors(segments, msg):
    with pytest.raises(ConfigurationError, match=msg):
        compile_weights(FilterSpec(segments), N, FC)


def test_negative_magnitude_and_bad_shape():
    with pytest.raises(ConfigurationError):
        Segment(0, 1, "constant", -1.0)
    with pytest.raises(ConfigurationError):
        Segment(0, 1, "cubic", 1.0)
    with pytest.raises(ConfigurationError):
        Gap(1e3, 0.0, 1.0)


def test_gap_beyond_nyquist_rejected():
    with pytest.raises(ConfigurationError, match="fc/2"):
        compile_weights(template((Gap(199.5e3, 2e3, 1.0),)), N, FC)


class TestMoveGap:
    def test_same_center_returns_same_spec(self):
        spec = template((Gap(100e3, 2e3, 10.0),))
        assert move_gap(spec, 0, 100e3, FC) is spec

    def test_beyond_nyquist(self):
        with pytest.raises(ConfigurationError):
            move_gap(template((Gap(100e3, 2e3, 10.0),)), 0, 200e3, FC)

    def test_missing_gap(self):
        with pytest.raises(ConfigurationError):
            move_gap(template(), 0, 50e3, FC)

    def test_override_is_local(self):
        spec = template((Gap(100e3, 2e3, 10.0),))
        moved = move_gap(spec, 0, 150e3, FC)
        a = compile_weights(spec, N, FC).weights
        b = compile_weights(moved, N, FC).weights
        f = np.arange(1, N // 2 + 1) * FC / N
        untouched = ~(((f >= 99e3) & (f <= 101e3)) | ((f >= 149e3) & (f <= 151e3)))
        assert np.array_equal(a[untouched], b[untouched])
        base = compile_weights(template(), N, FC).weights
        near_old = (f >= 99e3) & (f <= 101e3)
        assert np.array_equal(b[near_old], base[near_old])

    def test_sweep_centres(self):
        c = gap_centers(10e3, 23e3, 10.8333, 0.01)
        assert c[0] == 10e3
        assert c[-1] == pytest.approx(23e3)
        assert np.all(np.diff(c) > 0)
        # constant rate of 1.2 kHz/s between updates
        np.testing.assert_allclose(np.diff(c)[:-1], 12.0, rtol=1e-3)


@given(st.sampled_from([0.5, 2.0, 4.0, 0.25, 8.0]))
def test_scale_equivariance(alpha):
    spec = template((Gap(100e3, 2e3, 10.0),))
    a = compile_weights(spec, N, FC).weights
    b = compile_weights(spec.scaled(alpha), N, FC).weights
    assert np.array_equal(b, a * alpha)


def test_reference_defaults():
    r = ReferenceSpectrum.zeros(16)
    assert r.targets.shape == (8,)
    assert not np.any(r.full())
    with pytest.raises(ConfigurationError):
        ReferenceSpectrum(np.array([1.0, -1.0]))


def test_flat_reference():
    r = flat_reference(N, FC, 2.0, 10e3, (Gap(100e3, 2e3, 1.0),))
    f = np.arange(1, N // 2 + 1) * FC / N
    assert np.all(r.targets[f < 10e3] == 0)
    assert np.all(r.targets[(f >= 99e3) & (f <= 101e3)] == 0)
    assert r.targets[(f > 10e3) & (f < 90e3)].min() == 2.0


def test_default_template_validates():
    spec = default_template(125e3)
    spec.validate(125e3)
    assert math.isclose(spec.segments[0].f_end, 12.5e3)
