"""Periodograms, Whittle likelihood, parameter calibration and Fisher bounds.

The five jointly estimated parameters are ordered
``theta = (gamma, omega_L0, omega_L1, S_at, S_ph)``; the two datasets share
everything but their Larmor frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .bounds import dlog_psd
from .model import HypothesisPair, ModelParams, psd
from .oracle import NumericError, frequency_integral
from .simulate import Trace

THETA_NAMES = ("gamma", "omega_L0", "omega_L1", "S_at", "S_ph")


@dataclass(frozen=True)
class Periodogram:
    freqs: np.ndarray
    power: np.ndarray
    n: int
    navg: int
    delta: float

    def band_slice(self, band: Sequence[float]) -> slice:
        """Bins nearest to the band edges, both ends inclusive."""
        lo, hi = band
        if hi <= lo:
            raise ValueError("band must be increasing")
        step = 2.0 * math.pi / (self.n * self.delta)
        i0 = int(np.clip(round(lo / step) - 1, 0, self.freqs.size - 1))
        i1 = int(np.clip(round(hi / step) - 1, 0, self.freqs.size - 1))
        if i1 < i0 or lo > self.freqs[-1] + step or hi < self.freqs[0] - step:
            raise ValueError("band lies outside the periodogram range")
        return slice(i0, i1 + 1)


def _window(n: int, kind: str) -> Optional[np.ndarray]:
    if kind == "none":
        return None
    if kind == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {kind!r}")


def periodogram(trace, delta: Optional[float] = None, window: str = "none") -> Periodogram:
    """``P_k = delta |X_k|^2 / n`` at ``omega_k = 2 pi k / (n delta)``, k = 1..floor(n/2).

    Accepts a :class:`Trace`, a 1-d array, or a 2-d array of equal-length
    records; the latter is averaged over rows. Tapered power is rescaled by the
    window's mean square so the expectation still tracks the PSD.
    """
    if isinstance(trace, Trace):
        x, delta = trace.samples[None, :], trace.delta
    else:
        x = np.atleast_2d(np.asarray(trace, dtype=float))
        if delta is None:
            raise ValueError("delta required for raw arrays")
    n = x.shape[1]
    if n < 2:
        raise ValueError("need at least two samples")
    w = _window(n, window)
    norm = 1.0
    if w is not None:
        x = x * w
        norm = float(np.mean(w * w))
    X = np.fft.rfft(x, axis=1)[:, 1 : n // 2 + 1]
    power = (delta / (n * norm)) * np.mean(X.real**2 + X.imag**2, axis=0)
    freqs = 2.0 * math.pi * np.arange(1, n // 2 + 1) / (n * delta)
    return Periodogram(freqs, power, n, x.shape[0], float(delta))


def periodogram_rows(x: np.ndarray, delta: float) -> np.ndarray:
    """Per-record periodograms, shape ``(records, floor(n/2))``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    X = np.fft.rfft(x, axis=1)[:, 1 : n // 2 + 1]
    return (delta / n) * (X.real**2 + X.imag**2)


def whittle_nll(pg: Periodogram, params: ModelParams, band: Sequence[float]) -> float:
    """``sum_k log S(omega_k) + P_k / S(omega_k)`` over the band bins."""
    sl = pg.band_slice(band)
    S = psd(params, pg.freqs[sl])
    if S.size == 0:
        raise ValueError("empty band")
    return float(np.sum(np.log(S) + pg.power[sl] / S))


def whittle_llr(pg: Periodogram, pair: HypothesisPair, band: Sequence[float]) -> float:
    """Frequency-domain LLR ``log p1/p0`` restricted to the band."""
    sl = pg.band_slice(band)
    w = pg.freqs[sl]
    S0, S1 = psd(pair.h0, w), psd(pair.h1, w)
    return float(np.sum(np.log(S0 / S1) + pg.power[sl] * (1.0 / S0 - 1.0 / S1)))


def pair_from_theta(theta: Sequence[float], delta: float, strict: bool = True) -> HypothesisPair:
    g, w0, w1, sa, sp = (float(v) for v in theta)
    return HypothesisPair(ModelParams(g, w0, sa, sp, delta), ModelParams(g, w1, sa, sp, delta), strict)


def theta_from_pair(pair: HypothesisPair) -> np.ndarray:
    return np.array([pair.h0.gamma, pair.h0.omega_L, pair.h1.omega_L, pair.h0.S_at, pair.h0.S_ph])


# -- Fisher information ----------------------------------------------------------


def _theta_gradient(params: ModelParams, which: int, omega: np.ndarray) -> np.ndarray:
    """``d ln S_h / d theta`` embedded in the 5-parameter joint vector."""
    d = dlog_psd(params, omega)
    out = np.zeros((5, d.shape[1]))
    out[0] = d[0]
    out[1 + which] = d[1]
    out[3] = d[2]
    out[4] = d[3]
    return out


def fisher_matrix(theta: Sequence[float], band: Sequence[float], total_time: float, delta: float = 5e-6) -> np.ndarray:
    """Joint 5x5 Fisher matrix of both datasets.

    ``F = sum_h (T_h / 2 pi) int_band grad ln S_h grad ln S_h^T d omega`` with
    ``total_time`` the record time per dataset (seconds); both datasets are
    assumed to have the same total length.
    """
    pair = pair_from_theta(theta, delta, strict=True)
    lo, hi = band
    pts = sorted(w for p in (pair.h0, pair.h1) for w in (p.omega_L - p.gamma, p.omega_L, p.omega_L + p.gamma)
                 if lo < w < hi)
    F = np.zeros((5, 5))
    for which, p in enumerate((pair.h0, pair.h1)):

        def f(w, p=p, which=which):
            g = _theta_gradient(p, which, np.array([w]))[:, 0]
            return np.outer(g, g)

        edges = [lo] + pts + [hi]
        for a, b in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad_vec(f, a, b, epsrel=1e-10, epsabs=0.0)
            F += val
    F *= total_time / (2.0 * math.pi)
    F = 0.5 * (F + F.T)
    if np.linalg.cond(F) > 1e14:
        raise NumericError("Fisher matrix is singular: a parameter is unidentifiable in this band")
    return F


def fisher_matrix_unchecked(theta, band, total_time, delta=5e-6) -> np.ndarray:
    """As :func:`fisher_matrix` but returns singular matrices instead of raising."""
    try:
        return fisher_matrix(theta, band, total_time, delta)
    except NumericError:
        pass
    pair = pair_from_theta(theta, delta)
    w = np.linspace(band[0], band[1], 20001)
    F = np.zeros((5, 5))
    for which, p in enumerate((pair.h0, pair.h1)):
        g = _theta_gradient(p, which, w)
        F += integrate.trapezoid(g[:, None, :] * g[None, :, :], w, axis=2)
    return F * total_time / (2.0 * math.pi)


def crb_sigma(F: np.ndarray) -> np.ndarray:
    return np.sqrt(np.diag(np.linalg.inv(F)))


# -- maximum-likelihood calibration ------------------------------------------------


@dataclass
class FitResult:
    theta_hat: np.ndarray
    nll: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    restarts: list = field(default_factory=list)

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def as_dict(self) -> dict:
        return {
            "theta_hat": dict(zip(THETA_NAMES, map(float, self.theta_hat))),
            "crb_sigma": dict(zip(THETA_NAMES, map(float, self.sigma))),
            "nll": self.nll,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def mle_fit(
    pg0: Periodogram,
    pg1: Periodogram,
    init: Sequence[float],
    band: Sequence[float],
    restarts: int = 3,
    seed: int = 0,
    max_iter: int = 10_000,
    xtol: float = 1e-9,
) -> FitResult:
    """Joint Whittle fit of both datasets by Nelder-Mead.

    Positive scales are optimised in log space and Larmor frequencies as
    offsets in units of the initial linewidth, so the simplex starts well
    conditioned. The first start is ``init``; further starts jitter it.
    """
    if pg0.n != pg1.n or pg0.delta != pg1.delta:
        raise ValueError("periodograms must share length and sampling period")
    init = np.asarray(init, dtype=float)
    g_ref = init[0]
    sl0, sl1 = pg0.band_slice(band), pg1.band_slice(band)
    w0, P0 = pg0.freqs[sl0], pg0.power[sl0]
    w1, P1 = pg1.freqs[sl1], pg1.power[sl1]

    def unpack(z):
        return np.array([math.exp(z[0]), init[1] + g_ref * z[1], init[2] + g_ref * z[2], math.exp(z[3]), math.exp(z[4])])

    def nll(z):
        if not np.all(np.isfinite(z)) or np.any(np.abs(z[[0, 3, 4]]) > 700):
            return np.inf
        g, a, b, sa, sp = unpack(z)
        tot = 0.0
        for wl, w, P in ((a, w0, P0), (b, w1, P1)):
            S = sa * (g * g / (g * g + (w - wl) ** 2) + g * g / (g * g + (w + wl) ** 2)) + sp
            tot += np.sum(np.log(S) + P / S)
        return float(tot)

    z0 = np.array([math.log(init[0]), 0.0, 0.0, math.log(init[3]), math.log(init[4])])
    rng = np.random.default_rng(seed)
    runs = []
    for r in range(restarts):
        start = z0 if r == 0 else z0 + rng.normal(0.0, 0.05, 5)
        simplex = np.vstack([start] + [start + 0.05 * e for e in np.eye(5)])
        res = optimize.minimize(
            nll, start, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": xtol, "fatol": 1e-8, "maxiter": max_iter,
                     "maxfev": 4 * max_iter, "adaptive": True},
        )
        runs.append(res)
    best = min(runs, key=lambda r: r.fun)  # min keeps the first on ties
    theta = unpack(best.x)
    total_time = pg0.n * pg0.delta * pg0.navg
    try:
        cov = np.linalg.inv(fisher_matrix(theta, band, total_time, pg0.delta))
    except (NumericError, np.linalg.LinAlgError, ValueError):
        cov = np.full((5, 5), np.nan)
    # a restart that stopped on tolerance at the same optimum certifies convergence
    converged = any(r.success and r.fun - best.fun <= 1e-6 for r in runs)
    return FitResult(theta, float(best.fun), cov, converged, int(best.nit),
                     [float(r.fun) for r in runs])


# -- stochastic relaxation rate ---------------------------------------------------


def g_tilde(params: ModelParams, omega) -> np.ndarray:
    """Sensitivity of the energy-preserving Lorentzian to ``delta gamma``, as used for the covariance.

    ``g(omega) = S~ (gamma + x)(gamma - x) / (gamma^2 + x^2)^2`` with
    ``x = omega - omega_L`` and ``S~ = S_at gamma``. Only products of two
    ``g`` values enter any observable, so its overall sign is immaterial.
    """
    x = np.asarray(omega, dtype=float) - params.omega_L
    g = params.gamma
    st = params.S_at * g
    return st * (g + x) * (g - x) / (g * g + x * x) ** 2


def cross_covariance_model(params: ModelParams, sigma_dgamma: float, omega, omega_prime) -> np.ndarray:
    """``Cov(S(omega), S(omega'))`` induced by run-to-run ``delta gamma``."""
    if sigma_dgamma < 0:
        raise ValueError("sigma_dgamma must be non-negative")
    return g_tilde(params, omega) * g_tilde(params, omega_prime) * sigma_dgamma**2


def llr_gamma_sensitivity(pair: HypothesisPair, h: int) -> float:
    """``(1/2pi) int_0^inf (1/S0 - 1/S1) g_h d omega`` in 1/(s rad/s)."""
    p0, p1, ph = pair.h0, pair.h1, pair[h]

    def f(w):
        return (1.0 / float(psd(p0, w)) - 1.0 / float(psd(p1, w))) * float(g_tilde(ph, w))

    return frequency_integral(f, pair) / (2.0 * math.pi)


def llr_variance_quadratic(pair: HypothesisPair, sigma_dgamma: float, h: int = 0) -> float:
    """``lim Var(L_t) / t^2`` from ``delta gamma`` fluctuations (1/s^2)."""
    if sigma_dgamma < 0:
        raise ValueError("sigma_dgamma must be non-negative")
    if sigma_dgamma == 0:
        return 0.0
    return sigma_dgamma**2 * llr_gamma_sensitivity(pair, h) ** 2


def band_llr_sensitivity(pair: HypothesisPair, h: int, freqs: np.ndarray) -> float:
    """Discrete analogue of :func:`llr_gamma_sensitivity` summed over given bins (per record)."""
    w = 1.0 / psd(pair.h0, freqs) - 1.0 / psd(pair.h1, freqs)
    return float(np.sum(w * g_tilde(pair[h], freqs)))


def estimate_sigma_dgamma(rows: np.ndarray, freqs: np.ndarray, pair: HypothesisPair, h: int) -> float:
    """Recover ``sigma_dgamma`` from per-record band periodograms.

    The off-diagonal part of the ensemble covariance of the Whittle LLR
    functional, ``Var(sum w P) - sum w^2 Var(P)``, equals
    ``sigma^2 (sum w g)^2`` under the fluctuation model.
    """
    rows = np.atleast_2d(rows)
    w = 1.0 / psd(pair.h0, freqs) - 1.0 / psd(pair.h1, freqs)
    L = rows @ w
    offdiag = np.var(L, ddof=1) - np.sum(w * w * np.var(rows, axis=0, ddof=1))
    c = band_llr_sensitivity(pair, h, freqs)
    return math.sqrt(max(offdiag, 0.0)) / abs(c)
