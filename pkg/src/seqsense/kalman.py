"""Per-hypothesis Kalman filtering and streaming log-likelihood ratios.

The measurement matrix is ``C = (0, 1)``. Because the gain and covariance
sequences never depend on the data, the fast path precomputes them once per
parameter set (:func:`gain_schedule`) and the compiled loops only propagate
means. :func:`predict_update` is the readable single-step reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .model import ConfigError, HypothesisPair, ModelParams, discrete_transition, steady_state_moments
from .simulate import Trace

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray
    last_mu: float = 0.0
    last_sigma2: float = float("nan")


@dataclass(frozen=True)
class LlrAccumulator:
    llr: float = 0.0
    n: int = 0


def init(params: ModelParams) -> KalmanState:
    """Steady-state prior: the filter is exact from the first sample."""
    m, c = steady_state_moments(params)
    return KalmanState(m, c)


def predict_update(state: KalmanState, params: ModelParams, sample: float):
    """One prediction/update cycle.

    Returns ``(new_state, mu, sigma2, log_pred_density)`` where ``mu`` and
    ``sigma2`` are the one-step predictive mean and variance of ``sample``.
    """
    if not math.isfinite(sample):
        raise ValueError("non-finite sample")
    phi, qd = discrete_transition(params)
    G = params.G
    m = phi @ state.mean
    P = phi @ state.cov @ phi.T + qd
    mu = m[1]
    s2 = G + P[1, 1]
    K = P[:, 1] / s2
    e = sample - mu
    IKC = np.eye(2)
    IKC[:, 1] -= K
    P = IKC @ P @ IKC.T + G * np.outer(K, K)
    P = 0.5 * (P + P.T)
    lpd = -0.5 * (LOG_2PI + math.log(s2)) - 0.5 * e * e / s2
    return KalmanState(m + K * e, P, mu, s2), mu, s2, lpd


def llr_step(acc: LlrAccumulator, out0: tuple[float, float], out1: tuple[float, float], sample: float) -> LlrAccumulator:
    """Add one increment given the ``(mu, sigma2)`` predictions of both filters."""
    (mu0, s0), (mu1, s1) = out0, out1
    e0, e1 = sample - mu0, sample - mu1
    dl = 0.5 * math.log(s0 / s1) + e0 * e0 / (2.0 * s0) - e1 * e1 / (2.0 * s1)
    return LlrAccumulator(acc.llr + dl, acc.n + 1)


@dataclass(frozen=True)
class GainSchedule:
    """Innovation variances and gains until the Riccati recursion settles.

    Steps beyond ``len(sig2)`` reuse the last entry, which equals the fixed
    point to rounding.
    """

    phi: np.ndarray
    sig2: np.ndarray
    gain: np.ndarray

    def sigma2(self, n: int) -> np.ndarray:
        if n <= self.sig2.size:
            return self.sig2[:n].copy()
        return np.concatenate([self.sig2, np.full(n - self.sig2.size, self.sig2[-1])])


@lru_cache(maxsize=64)
def gain_schedule(params: ModelParams, tol: float = 1e-15, max_len: int = 1 << 22) -> GainSchedule:
    phi, qd = discrete_transition(params)
    _, p0 = steady_state_moments(params)
    length = 1024
    while True:
        sig2 = np.empty(length)
        gain = np.empty((length, 2))
        _kernels.riccati_schedule(phi, qd, params.G, p0, length, sig2, gain)
        tail = sig2[-64:]
        if np.ptp(tail) <= tol * tail[-1] or length >= max_len:
            # trim to the first index after which nothing moves
            moving = np.abs(np.diff(sig2)) > tol * sig2[-1]
            last = int(np.flatnonzero(moving)[-1]) + 2 if moving.any() else 1
            last = min(max(last + 8, 1), length)
            sig2, gain = sig2[:last].copy(), gain[:last].copy()
            for a in (phi, sig2, gain):
                a.setflags(write=False)
            return GainSchedule(phi, sig2, gain)
        length *= 4


def stationary_sigma2(params: ModelParams) -> float:
    """Fixed point of the innovation-variance recursion."""
    return float(gain_schedule(params).sig2[-1])


def innovations(params: ModelParams, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Innovations ``y - mu`` and their variances for a whole record."""
    y = np.ascontiguousarray(y, dtype=float)
    sch = gain_schedule(params)
    mu = np.empty_like(y)
    _kernels.kalman_innovations(y, sch.phi, sch.gain, sch.sig2, mu)
    return y - mu, sch.sigma2(y.size)


def log_likelihood(params: ModelParams, y: np.ndarray) -> float:
    """Joint Gaussian log-density by the prediction-error decomposition."""
    e, s2 = innovations(params, y)
    return float(-0.5 * np.sum(LOG_2PI + np.log(s2) + e * e / s2))


class DualFilter:
    """Two filters fed the same stream, emitting LLR increments block by block."""

    def __init__(self, pair: HypothesisPair):
        self.pair = pair
        self._s0 = gain_schedule(pair.h0)
        self._s1 = gain_schedule(pair.h1)
        self.state = np.zeros(5)

    @property
    def n(self) -> int:
        return int(self.state[4])

    def reset(self) -> None:
        self.state[:] = 0.0

    def increments(self, y) -> np.ndarray:
        y = np.ascontiguousarray(y, dtype=float)
        out = np.empty_like(y)
        s0, s1 = self._s0, self._s1
        _kernels.dual_llr(y, s0.phi, s0.gain, s0.sig2, s1.phi, s1.gain, s1.sig2, self.state, out)
        return out


def llr_increments(pair: HypothesisPair, y) -> np.ndarray:
    """``Delta L_k`` for one record, starting both filters from their priors."""
    return DualFilter(pair).increments(y)


def run_dual(pair: HypothesisPair, trace: Trace) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample increments and cumulative LLR ``L_k = log p1/p0``."""
    if not math.isclose(trace.delta, pair.delta, rel_tol=1e-12):
        raise ConfigError(f"trace delta {trace.delta} differs from model delta {pair.delta}")
    dl = llr_increments(pair, trace.samples)
    return dl, np.cumsum(dl)


def llr_batch(pair: HypothesisPair, traces: np.ndarray) -> np.ndarray:
    """Increments for every row of a 2-d array of records."""
    traces = np.atleast_2d(traces)
    return np.vstack([llr_increments(pair, row) for row in traces])
