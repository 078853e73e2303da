import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqsense import kalman, spectral
from seqsense.model import psd
from seqsense.oracle import NumericError
from seqsense.simulate import simulate, simulate_batch

BAND = (2 * math.pi * 40e3, 2 * math.pi * 60e3)


class TestPeriodogram:
    @given(st.integers(4, 64).map(lambda m: 2 * m), st.integers(0, 2**31))
    def test_parseval(self, n, seed):
        x = np.random.default_rng(seed).normal(size=n)
        x -= x.mean()
        pg = spectral.periodogram(x, delta=0.5)
        # DC is zero; interior bins appear twice in the full spectrum, Nyquist once
        energy = (2 * pg.power[:-1].sum() + pg.power[-1]) * n / pg.delta
        assert energy == pytest.approx(n * np.sum(x * x), rel=1e-10)

    def test_frequency_grid(self):
        pg = spectral.periodogram(np.zeros(10), delta=0.1)
        np.testing.assert_allclose(pg.freqs, 2 * math.pi * np.arange(1, 6) / 1.0)

    def test_rows_average(self):
        x = np.random.default_rng(1).normal(size=(3, 16))
        rows = spectral.periodogram_rows(x, 1.0)
        np.testing.assert_allclose(spectral.periodogram(x, 1.0).power, rows.mean(axis=0))

    def test_tracks_psd(self, pair):
        x = simulate_batch(pair.h0, 2000, 400, 4)
        pg = spectral.periodogram(x, pair.h0.delta)
        sl = pg.band_slice(BAND)
        ratio = pg.power[sl] / psd(pair.h0, pg.freqs[sl])
        # 400 records per bin: each ratio ~ 1 +/- 0.05
        assert abs(ratio.mean() - 1) < 0.02
        assert np.all(np.abs(ratio - 1) < 0.3)

    def test_hann_keeps_scale(self):
        x = np.random.default_rng(2).normal(size=(200, 256))
        pg = spectral.periodogram(x, 1.0, window="hann")
        assert pg.power[5:-5].mean() == pytest.approx(1.0, abs=0.03)

    @pytest.mark.parametrize("bad", [(10.0, 5.0), (1e9, 2e9)])
    def test_band_errors(self, bad):
        pg = spectral.periodogram(np.zeros(64), delta=1.0)
        with pytest.raises(ValueError):
            pg.band_slice(bad)

    def test_raw_array_needs_delta(self):
        with pytest.raises(ValueError):
            spectral.periodogram(np.zeros(8))


class TestWhittle:
    def test_llr_agrees_with_filter(self, pair):
        tr = simulate(pair.h1, 200_000, 77)
        pg = spectral.periodogram(tr)
        wl = spectral.whittle_llr(pg, pair, (pg.freqs[0], pg.freqs[-1]))
        kl = float(np.sum(kalman.llr_increments(pair, tr.samples)))
        assert wl > 0 and kl > 0
        assert wl == pytest.approx(kl, rel=0.1)

    def test_nll_prefers_truth(self, pair):
        tr = simulate(pair.h0, 100_000, 78)
        pg = spectral.periodogram(tr)
        assert spectral.whittle_nll(pg, pair.h0, BAND) < spectral.whittle_nll(pg, pair.h1, BAND)


class TestFisher:
    def test_theta_round_trip(self, pair):
        theta = spectral.theta_from_pair(pair)
        assert spectral.pair_from_theta(theta, pair.h0.delta) == pair

    def test_scaling_with_time(self, pair):
        theta = spectral.theta_from_pair(pair)
        s1 = spectral.crb_sigma(spectral.fisher_matrix(theta, BAND, 100.0))
        s2 = spectral.crb_sigma(spectral.fisher_matrix(theta, BAND, 200.0))
        np.testing.assert_allclose(s1 / s2, math.sqrt(2), rtol=1e-9)

    def test_symmetric_positive_definite(self, pair):
        F = spectral.fisher_matrix(spectral.theta_from_pair(pair), BAND, 400.0)
        np.testing.assert_array_equal(F, F.T)
        assert np.all(np.linalg.eigvalsh(F) > 0)

    def test_unidentifiable_band(self, pair):
        # far from both lines only the flat floor is visible
        far = (2 * math.pi * 500e3, 2 * math.pi * 501e3)
        theta = spectral.theta_from_pair(pair)
        with pytest.raises(NumericError):
            spectral.fisher_matrix(theta, far, 400.0)
        assert spectral.fisher_matrix_unchecked(theta, far, 400.0).shape == (5, 5)


class TestMle:
    def test_small_fit(self, pair):
        n = 20_000
        x0 = simulate_batch(pair.h0, n, 8, 101)
        x1 = simulate_batch(pair.h1, n, 8, 102)
        pg0 = spectral.periodogram(x0, pair.h0.delta)
        pg1 = spectral.periodogram(x1, pair.h0.delta)
        truth = spectral.theta_from_pair(pair)
        fit = spectral.mle_fit(pg0, pg1, truth * (1 + np.array([0.05, 1e-3, -1e-3, -0.05, 0.02])), BAND)
        assert fit.converged
        assert len(fit.restarts) == 3
        z = (fit.theta_hat - truth) / fit.sigma
        assert np.all(np.abs(z) < 5)
        assert set(fit.as_dict()) >= {"theta_hat", "crb_sigma", "nll"}

    def test_mismatched_periodograms(self, pair):
        a = spectral.periodogram(np.zeros(64), 5e-6)
        b = spectral.periodogram(np.zeros(32), 5e-6)
        with pytest.raises(ValueError):
            spectral.mle_fit(a, b, spectral.theta_from_pair(pair), BAND)


class TestGammaFluctuation:
    def test_g_tilde_is_energy_preserving_derivative(self, pair):
        p = pair.h0
        w = p.omega_L + p.gamma * np.linspace(-4, 4, 41)
        st_ = p.S_at * p.gamma
        h = 1e-4 * p.gamma

        def lor(g):
            x = w - p.omega_L
            return st_ * g / (g * g + x * x)

        fd = (lor(p.gamma + h) - lor(p.gamma - h)) / (2 * h)
        np.testing.assert_allclose(spectral.g_tilde(p, w), -fd, rtol=1e-6, atol=1e-7 * np.abs(fd).max())

    def test_cross_covariance(self, pair):
        w = np.array([pair.h0.omega_L, pair.h0.omega_L + 3 * pair.h0.gamma])
        c = spectral.cross_covariance_model(pair.h0, 50.0, w[:, None], w[None, :])
        np.testing.assert_allclose(c, c.T)
        assert c[0, 0] > 0 and c[0, 1] < 0
        with pytest.raises(ValueError):
            spectral.cross_covariance_model(pair.h0, -1.0, w, w)

    def test_llr_variance_quadratic(self, pair):
        assert spectral.llr_variance_quadratic(pair, 0.0) == 0.0
        v1 = spectral.llr_variance_quadratic(pair, 2 * math.pi * 30)
        v2 = spectral.llr_variance_quadratic(pair, 2 * math.pi * 60)
        assert v2 == pytest.approx(4 * v1, rel=1e-12)
        with pytest.raises(ValueError):
            spectral.llr_variance_quadratic(pair, -1.0)

    def test_band_sensitivity_approximates_integral(self, pair):
        n = 100_000
        delta = pair.h0.delta
        freqs = 2 * math.pi * np.arange(1, n // 2 + 1) / (n * delta)
        # bin spacing 2 pi/(n delta): the sum approximates T/(2 pi) times the integral
        ref = spectral.llr_gamma_sensitivity(pair, 0) * n * delta
        assert spectral.band_llr_sensitivity(pair, 0, freqs) == pytest.approx(ref, rel=1e-3)
