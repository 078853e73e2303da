import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqsense import prefilter as pf
from seqsense.oracle import build_cov

ALPHA = 0.91


class TestRecursion:
    def test_step_matches_block(self):
        x = np.random.default_rng(0).normal(size=200)
        s = pf.HighPassState(ALPHA, 5e-6)
        stepped = []
        for v in x:
            s, r = pf.step(s, v)
            stepped.append(r)
        assert np.allclose(stepped, pf.highpass(x, ALPHA), rtol=0, atol=1e-14)

    @given(st.integers(1, 199))
    def test_block_split_invariance(self, cut):
        x = np.random.default_rng(1).normal(size=200)
        s = pf.HighPassState(ALPHA, 5e-6)
        s, a = pf.apply(s, x[:cut])
        _, b = pf.apply(s, x[cut:])
        assert np.array_equal(np.concatenate([a, b]), pf.highpass(x, ALPHA))

    def test_filter_matrix_matches_recursion(self):
        x = np.random.default_rng(2).normal(size=64)
        assert np.allclose(pf.filter_matrix(ALPHA, 64) @ x, pf.highpass(x, ALPHA), atol=1e-13)

    def test_removes_constant(self):
        y = pf.highpass(np.full(2000, 3.0), ALPHA)
        assert abs(y[-1]) < 1e-12

    def test_state_validation(self):
        with pytest.raises(ValueError):
            pf.HighPassState(1.0, 5e-6)
        with pytest.raises(ValueError):
            pf.HighPassState(0.5, 0.0)

    def test_corner_rate(self):
        s = pf.HighPassState(ALPHA, 5e-6)
        assert pf.alpha_from_b(s.b, 5e-6) == pytest.approx(ALPHA)
        assert s.warmup == pytest.approx(5 / s.b)


class TestResponse:
    def test_dc_and_nyquist(self):
        assert pf.frequency_response_sq(ALPHA, 5e-6, 0.0) == pytest.approx(0.0)
        nyq = math.pi / 5e-6
        assert pf.frequency_response_sq(ALPHA, 5e-6, nyq) == pytest.approx(4 * ALPHA / (1 + ALPHA) ** 2)

    @given(st.floats(1e3, 1e5))
    def test_response_matches_impulse_response_dft(self, w):
        h = pf.filter_matrix(ALPHA, 600)[:, 0]
        H = np.sum(h * np.exp(-1j * w * 5e-6 * np.arange(600)))
        assert abs(H) ** 2 == pytest.approx(pf.frequency_response_sq(ALPHA, 5e-6, w), rel=1e-8)

    def test_continuous_limit(self):
        b = -math.log(ALPHA) / 5e-6
        w = np.array([1e3, 1e4, 5e4])
        d = pf.frequency_response_sq(ALPHA, 5e-6, w)
        c = pf.frequency_response_sq_continuous(b, w)
        assert np.allclose(d, c, rtol=0.05)


class TestCovariance:
    def test_exact_matches_dense_sandwich(self, pair):
        n, mid = 1000, 500
        B = pf.filter_matrix(ALPHA, n)
        S = B @ build_cov(pair.h0, n).dense() @ B.T
        ex = pf.filtered_autocovariance(pair.h0, ALPHA, np.arange(100))
        assert np.allclose(S[mid, mid : mid + 100], ex, rtol=0, atol=1e-12 * ex[0])

    def test_scalar_and_symmetric_lag(self, pair):
        a = pf.filtered_autocovariance(pair.h0, ALPHA, 3)
        assert isinstance(a, float)
        assert a == pytest.approx(pf.filtered_autocovariance(pair.h0, ALPHA, -3))

    def test_approximation_is_close(self, pair):
        lags = np.arange(200)
        ex = pf.filtered_autocovariance(pair.h0, ALPHA, lags)
        ap = pf.filtered_autocovariance_approx(pair.h0, ALPHA, lags)
        assert np.max(np.abs(ap - ex)) < 0.01 * ex[0]


class TestFilterError:
    def test_identical_pair_has_no_error(self, pair):
        from seqsense.model import HypothesisPair

        same = HypothesisPair(pair.h0, pair.h0)
        assert pf.filter_error_cumulants(same, ALPHA, 1, 0) == 0.0

    def test_cumulants(self, pair):
        m1 = pf.filter_error_cumulants(pair, ALPHA, 1, 0, discrete=True)
        m2 = pf.filter_error_cumulants(pair, ALPHA, 2, 0, discrete=True)
        # Monte Carlo reference (1e3 x 40 ms): mean -1.03e-3 /ms, var ~1e-5 /ms
        assert m1 / 1e3 == pytest.approx(-1.03e-3, rel=0.05)
        assert 0 < m2 / 1e3 < 2e-5
        with pytest.raises(ValueError):
            pf.filter_error_cumulants(pair, ALPHA, 3, 0)

    def test_leading_scaling(self, pair):
        r1, v1 = pf.filter_error_leading(pair, ALPHA, -205.5, 473.0)
        b = -math.log(ALPHA) / pair.delta
        assert r1 == pytest.approx((b / pair.omega_c) ** 2 * -205.5)
        assert v1 == pytest.approx((b / pair.omega_c) ** 4 * 473.0)
