import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from wecflow.spectrum import (SeaState, WaveSet, cumulative_energy, discretize,
                              evanescent_wavenumbers, pm_spectrum, progressive_wavenumber,
                              regular_waves, spectral_moment, truncation_bounds)

SEA = SeaState(2.12, 8.0, 0.0, 30.0)


def numeric_moment(sea, n, cyclic=False):
    """Quadrature oracle for spectral moments, split at the peak."""
    _, B = sea.pm_coefficients
    wp = (0.8 * B) ** 0.25
    f = (lambda w: w ** n * pm_spectrum(w, sea)) if not cyclic else \
        (lambda w: (w / (2 * math.pi)) ** n * pm_spectrum(w, sea))
    a = quad(f, 0, wp, epsabs=0, epsrel=1e-13, limit=200)[0]
    b = quad(f, wp, np.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return a + b


class TestSpectrum:
    def test_zero_frequency(self):
        assert pm_spectrum(0.0, SEA) == 0.0

    def test_significant_height(self):
        m0 = numeric_moment(SEA, 0)
        assert 4 * math.sqrt(m0) == pytest.approx(SEA.Hs, rel=1e-8)

    def test_energy_period(self):
        ratio = numeric_moment(SEA, -1, cyclic=True) / numeric_moment(SEA, 0, cyclic=True)
        assert ratio == pytest.approx(SEA.Te, rel=1e-8)

    def test_closed_form_moments(self):
        for n in (-1, 0, 1, 2):
            assert spectral_moment(SEA, n) == pytest.approx(numeric_moment(SEA, n), rel=1e-9)

    def test_cumulative_matches_quadrature(self):
        for w in (0.4, 0.8, 1.5):
            assert cumulative_energy(w, SEA) == pytest.approx(
                quad(pm_spectrum, 0, w, args=(SEA,), epsrel=1e-13)[0], rel=1e-10)

    @pytest.mark.parametrize("bad", [dict(Hs=0), dict(Te=-1), dict(depth=0)])
    def test_invalid_sea_state(self, bad):
        kw = dict(Hs=1.0, Te=8.0, depth=30.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            SeaState(**kw)


class TestTruncation:
    def test_tails(self):
        lo, hi = truncation_bounds(SEA, 0.02)
        m0 = SEA.m0
        assert quad(pm_spectrum, 0, lo, args=(SEA,), epsrel=1e-12)[0] == pytest.approx(0.01 * m0,
                                                                                        rel=1e-8)
        assert quad(pm_spectrum, hi, np.inf, args=(SEA,), epsrel=1e-12)[0] == pytest.approx(
            0.01 * m0, rel=1e-8)

    def test_captured_energy(self):
        lo, hi = truncation_bounds(SEA, 0.05)
        captured = quad(pm_spectrum, lo, hi, args=(SEA,), epsrel=1e-13)[0]
        assert captured == pytest.approx(0.95 * SEA.m0, rel=1e-8)

    def test_bounds_bracket_peak(self):
        _, B = SEA.pm_coefficients
        wp = (0.8 * B) ** 0.25
        for frac in (1e-6, 0.02, 0.4):
            lo, hi = truncation_bounds(SEA, frac)
            assert lo < wp < hi

    @pytest.mark.parametrize("frac", [0.0, 0.5, 1.0])
    def test_invalid_fraction(self, frac):
        with pytest.raises(ValueError):
            truncation_bounds(SEA, frac)


class TestDiscretize:
    def test_single_bin(self):
        ws = discretize(SEA, 1, 0.02)
        lo, hi = truncation_bounds(SEA, 0.02)
        assert ws.omega[0] == pytest.approx(0.5 * (lo + hi))
        assert ws.H[0] == pytest.approx(math.sqrt(8 * 0.98 * SEA.m0), rel=1e-12)

    def test_energy_bookkeeping(self):
        ws = discretize(SEA, 30, 0.02)
        lo, hi = truncation_bounds(SEA, 0.02)
        total = quad(pm_spectrum, lo, hi, args=(SEA,), epsrel=1e-13, limit=200)[0]
        assert np.sum(ws.H ** 2 / 8) == pytest.approx(total, rel=1e-10)

    def test_thirty_harmonics_increasing(self):
        ws = discretize(SEA, 30, 0.02, n_evan=3)
        assert ws.n_freq == 30
        assert np.all(np.diff(ws.omega) > 0)
        assert np.all(np.diff(ws.k) > 0)
        assert np.all(ws.H >= 0)

    def test_dispersion_residuals(self):
        ws = discretize(SEA, 10, 0.02, n_evan=25)
        g, D = ws.g, ws.depth
        assert np.all(np.abs(ws.omega ** 2 - g * ws.k * np.tanh(ws.k * D)) <= 1e-12 * ws.omega ** 2)
        res = ws.omega[:, None] ** 2 + g * ws.k_evan * np.tan(ws.k_evan * D)
        assert np.all(np.abs(res) <= 1e-10 * ws.omega[:, None] ** 2)

    def test_save_load_roundtrip(self, tmp_path):
        ws = discretize(SEA, 4, 0.02, n_evan=2)
        ws.save(tmp_path / "w.txt")
        back = WaveSet.load(tmp_path / "w.txt")
        for name in ("omega", "H", "k", "k_evan"):
            np.testing.assert_array_equal(getattr(ws, name), getattr(back, name))

    def test_load_rejects_other_files(self, tmp_path):
        p = tmp_path / "x.txt"
        p.write_text("1 2 3\n")
        with pytest.raises(ValueError):
            WaveSet.load(p)

    def test_regular_waves(self):
        ws = regular_waves([0.5, 1.0], 1.0, n_evan=2)
        assert ws.H.tolist() == [1.0, 1.0]
        assert ws.k_evan.shape == (2, 2)


def bisection_root(omega, depth, g=9.81):
    lo, hi = 1e-12, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g * mid * math.tanh(mid * depth) > omega ** 2:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestWavenumbers:
    def test_deep_water_limit(self):
        k = progressive_wavenumber(5.0, 30.0)
        assert abs(k - 25 / 9.81) / k <= 1e-6

    def test_shallow_water_limit(self):
        w, D = 0.01, 2.0
        k = progressive_wavenumber(w, D)
        assert k == pytest.approx(w / math.sqrt(9.81 * D), rel=1e-4)

    def test_bisection_oracle(self):
        w = 2 * math.pi / 8
        assert progressive_wavenumber(w, 30.0) == pytest.approx(bisection_root(w, 30.0),
                                                                rel=1e-12)

    def test_evanescent_brackets(self):
        D = 30.0
        k = evanescent_wavenumbers(0.8, D, 25)
        m = np.arange(1, 26)
        assert np.all(k * D > (m - 0.5) * math.pi)
        assert np.all(k * D < m * math.pi)
        assert np.all(np.diff(k) > 0)

    def test_evanescent_low_frequency(self):
        D = 30.0
        k = evanescent_wavenumbers(1e-4, D, 5)
        np.testing.assert_allclose(k * D, np.arange(1, 6) * math.pi, rtol=1e-6)

    def test_nonpositive_frequency(self):
        with pytest.raises(ValueError):
            progressive_wavenumber(0.0, 30.0)
        with pytest.raises(ValueError):
            evanescent_wavenumbers(-1.0, 30.0, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.05, 6.0), st.floats(1.0, 500.0))
    def test_progressive_residual_property(self, omega, depth):
        k = progressive_wavenumber(omega, depth)
        assert k > 0
        assert abs(omega ** 2 - 9.81 * k * math.tanh(k * depth)) <= 1e-12 * omega ** 2

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 4.0), st.floats(5.0, 200.0))
    def test_evanescent_residual_property(self, omega, depth):
        k = evanescent_wavenumbers(omega, depth, 6)
        assert np.all(np.abs(omega ** 2 + 9.81 * k * np.tan(k * depth)) <= 1e-10 * omega ** 2)
