import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specmpc.oracle import direct_dft, recount_transitions
from specmpc.spectrum import (
    ConfigurationError,
    EngineConfig,
    SpectrumState,
    SwitchingWindow,
    clamp_duty,
    count_bins,
    make_shift_vector,
    resync,
    shifted_value,
    slide,
)


class TestShiftVector:
    def test_dc_twiddle_is_one(self):
        for N in (2, 3, 16, 2047):
            assert make_shift_vector(N)[0] == 1 + 0j

    def test_quarter_turn_n4(self):
        assert make_shift_vector(4)[1] == pytest.approx(1j, abs=1e-15)

    def test_quarter_turn_n2048(self):
        assert abs(make_shift_vector(2048)[512] - 1j) <= 1e-12

    @pytest.mark.parametrize("N", [2, 5, 64, 2047, 2048])
    def test_unit_modulus_and_length(self, N):
        x = make_shift_vector(N)
        assert x.size == N // 2 + 1
        assert np.max(np.abs(np.abs(x) - 1)) <= 1e-12

    @pytest.mark.parametrize("N", [1, 0, -3, 2.5])
    def test_rejects_bad_N(self, N):
        with pytest.raises(ConfigurationError):
            make_shift_vector(N)


class TestEngineConfig:
    def test_bin_frequencies(self):
        cfg = EngineConfig(N=2048, fc=400e3)
        f = cfg.bin_frequencies()
        assert f.size == 1025
        assert f[1] == pytest.approx(400e3 / 2048)
        assert f[-1] == pytest.approx(200e3)

    @pytest.mark.parametrize("kw", [{"N": 1}, {"fc": 0.0}, {"resync_interval": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            EngineConfig(**kw)


class TestShiftedValue:
    def test_on_state(self):
        assert shifted_value(1, 12 / 48) == pytest.approx(0.75)

    def test_off_state(self):
        assert shifted_value(0, 12 / 48) == pytest.approx(-0.25)

    def test_zero_reference(self):
        assert shifted_value(0, 0.0) == 0.0

    def test_clamps_and_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="specmpc.spectrum"):
            assert shifted_value(1, 1.5) == 0.0
            assert clamp_duty(-0.2) == 0.0
        assert "clamped" in caplog.text

    def test_bad_raw(self):
        with pytest.raises(ValueError):
            shifted_value(2, 0.5)


class TestSlide:
    def test_zero_stays_zero(self):
        w = SwitchingWindow.zeros(8)
        s = slide(SpectrumState.zeros(8), w, 0.0)
        assert not np.any(s.bins)
        assert s.age == 1

    def test_single_insertion(self):
        N, v = 16, 0.7
        s = slide(SpectrumState.zeros(N), SwitchingWindow.zeros(N), v)
        np.testing.assert_allclose(s.bins, v * make_shift_vector(N), atol=1e-15)

    def test_ten_thousand_random_slides_n64(self, rng):
        N = 64
        w = SwitchingWindow.zeros(N)
        s = SpectrumState.zeros(N)
        d = 0.3
        for _ in range(10_000):
            bit = int(rng.integers(2))
            v = bit - d
            s = slide(s, w, v)
            w.push(bit, v)
        err = np.max(np.abs(s.bins - direct_dft(w.ordered_samples())))
        assert err < 1e-9

    def test_matches_resync_and_counts(self, rng):
        N = 33
        w = SwitchingWindow.zeros(N)
        s = SpectrumState.zeros(N)
        for _ in range(500):
            bit = int(rng.integers(2))
            d = float(rng.uniform(0, 1))
            v = shifted_value(bit, d)
            s = slide(s, w, v)
            w.push(bit, v)
            assert w.transition_count == recount_transitions(list(w.ordered_raw()))
            assert 0 <= w.transition_count <= N - 1
        np.testing.assert_allclose(s.bins, resync(w).bins, atol=1e-9 * N)

    def test_branch_determinism(self, rng):
        N = 32
        w = SwitchingWindow.from_sequence(rng.integers(0, 2, N), rng.normal(size=N))
        a = resync(w)
        b = a.copy()
        wa, wb = w.copy(), w.copy()
        for v in rng.normal(size=50):
            a = slide(a, wa, v)
            wa.push(1, v)
            b = slide(b, wb, v)
            wb.push(1, v)
        assert np.array_equal(a.bins, b.bins)

    def test_linearity_with_halves(self):
        N = 8
        r1 = [0.5, -0.5, 0.0, 0.5, 0.25, -0.25, 0.5, 0.0]
        r2 = [0.25, 0.5, -0.5, 0.0, 0.0, 0.5, -0.25, 0.25]
        w1 = SwitchingWindow.from_sequence([0] * N, r1)
        w2 = SwitchingWindow.from_sequence([0] * N, r2)
        w12 = SwitchingWindow.from_sequence([0] * N, np.add(r1, r2))
        s1, s2, s12 = resync(w1), resync(w2), resync(w12)
        a, b = 0.5, -0.25
        out = slide(s12, w12, a + b).bins
        np.testing.assert_allclose(out, slide(s1, w1, a).bins + slide(s2, w2, b).bins, atol=1e-14)


class TestResync:
    def test_zero_window(self):
        assert not np.any(resync(SwitchingWindow.zeros(16)).bins)

    def test_constant_window(self):
        N, c = 20, 0.37
        s = resync(SwitchingWindow.from_sequence([1] * N, [c] * N))
        assert s.bins[0] == pytest.approx(N * c)
        assert np.max(np.abs(s.bins[1:])) <= 1e-9

    def test_random_pm1_matches_direct(self, rng):
        vals = rng.choice([-1.0, 1.0], size=16)
        s = resync(SwitchingWindow.from_sequence((vals > 0).astype(int), vals))
        np.testing.assert_allclose(s.bins, direct_dft(vals), atol=1e-10)
        assert s.age == 0
        assert len(s.bins) == count_bins(16)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=40))
    def test_dc_identity(self, vals):
        s = resync(SwitchingWindow.from_sequence([0] * len(vals), vals))
        assert abs(s.bins[0] - sum(vals)) <= 1e-10 * len(vals) + 1e-12


class TestWindow:
    @given(st.lists(st.integers(0, 1), min_size=2, max_size=24),
           st.lists(st.integers(0, 1), min_size=0, max_size=60))
    def test_transition_count_bookkeeping(self, start, pushes):
        w = SwitchingWindow.from_sequence(start, np.array(start, float))
        for b in pushes:
            w.push(b, float(b))
            assert w.transition_count == recount_transitions(list(w.ordered_raw()))

    def test_ordering(self):
        w = SwitchingWindow.zeros(4)
        for b in (1, 0, 1, 1, 0):
            w.push(b, float(b))
        assert list(w.ordered_raw()) == [0, 1, 1, 0]
        assert w.newest_raw == 0
        assert w.raw_at(0) == 0 and w.raw_at(1) == 1
