import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqsense import kalman, oracle
from seqsense.model import ConfigError, HypothesisPair
from seqsense.simulate import Trace, simulate


@pytest.fixture(scope="module")
def record(pair):
    return simulate(pair.h1, 800, 21).samples


class TestSingleFilter:
    def test_reference_matches_compiled(self, pair, record):
        p = pair.h0
        e, s2 = kalman.innovations(p, record)
        st_ = kalman.init(p)
        total = 0.0
        for k in range(100):
            st_, mu, var, lpd = kalman.predict_update(st_, p, record[k])
            assert var == pytest.approx(s2[k], rel=1e-12)
            assert record[k] - mu == pytest.approx(e[k], rel=1e-9, abs=1e-9 * math.sqrt(var))
            total += lpd
        assert total == pytest.approx(kalman.log_likelihood(p, record[:100]), rel=1e-12)

    def test_log_likelihood_matches_dense(self, pair, record):
        for p in (pair.h0, pair.h1):
            assert kalman.log_likelihood(p, record) == pytest.approx(oracle.exact_log_density(p, record), rel=1e-10)

    def test_schedule_converges(self, pair):
        sch = kalman.gain_schedule(pair.h0)
        assert sch.sig2[0] == pytest.approx(pair.h0.state_var + pair.h0.G)
        assert np.all(np.diff(sch.sig2) <= 1e-12 * sch.sig2[0])
        assert kalman.stationary_sigma2(pair.h0) == pytest.approx(sch.sig2[-1])
        assert sch.sigma2(sch.sig2.size + 10)[-1] == sch.sig2[-1]

    def test_rejects_nonfinite(self, pair):
        with pytest.raises(ValueError):
            kalman.predict_update(kalman.init(pair.h0), pair.h0, float("nan"))


class TestDual:
    def test_llr_step_matches_compiled(self, pair, record):
        s0, s1 = kalman.init(pair.h0), kalman.init(pair.h1)
        acc = kalman.LlrAccumulator()
        dl = kalman.llr_increments(pair, record[:50])
        for k in range(50):
            s0, mu0, v0, _ = kalman.predict_update(s0, pair.h0, record[k])
            s1, mu1, v1, _ = kalman.predict_update(s1, pair.h1, record[k])
            acc = kalman.llr_step(acc, (mu0, v0), (mu1, v1), record[k])
        assert acc.n == 50
        assert acc.llr == pytest.approx(dl.sum(), rel=1e-9)

    def test_llr_equals_difference_of_log_likelihoods(self, pair, record):
        L = kalman.llr_increments(pair, record).sum()
        ref = kalman.log_likelihood(pair.h1, record) - kalman.log_likelihood(pair.h0, record)
        assert L == pytest.approx(ref, rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(1, 300), min_size=1, max_size=6))
    def test_block_split_invariance(self, pair, record, cuts):
        whole = kalman.llr_increments(pair, record)
        f = kalman.DualFilter(pair)
        parts, pos = [], 0
        for c in cuts:
            parts.append(f.increments(record[pos : pos + c]))
            pos += c
        parts.append(f.increments(record[pos:]))
        assert np.array_equal(np.concatenate(parts), whole)
        assert f.n == record.size

    def test_reset(self, pair, record):
        f = kalman.DualFilter(pair)
        a = f.increments(record[:100])
        f.reset()
        assert np.array_equal(f.increments(record[:100]), a)

    def test_swapped_pair_negates(self, pair, record):
        a = kalman.llr_increments(pair, record)
        b = kalman.llr_increments(pair.swapped(), record)
        assert np.allclose(a, -b, atol=1e-12)

    def test_identical_pair_gives_zero(self, pair, record):
        same = HypothesisPair(pair.h0, pair.h0)
        assert np.all(kalman.llr_increments(same, record) == 0.0)

    def test_run_dual_checks_delta(self, pair, record):
        with pytest.raises(ConfigError):
            kalman.run_dual(pair, Trace(record, 1e-5))
        dl, L = kalman.run_dual(pair, Trace(record, pair.delta))
        assert np.array_equal(L, np.cumsum(dl))

    def test_batch(self, pair, record):
        X = np.stack([record, -record])
        out = kalman.llr_batch(pair, X)
        assert np.array_equal(out[0], kalman.llr_increments(pair, record))
        # the model is symmetric under sign flip of the data
        assert np.allclose(out[1], out[0])
