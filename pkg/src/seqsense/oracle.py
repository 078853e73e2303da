"""Dense Toeplitz reference computations and the shared frequency-integral engine.

Everything here is exact but O(n^3); it exists to pin down the streaming
code and the asymptotic rate formulas, not to process long records.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .model import HypothesisPair, ModelParams, autocovariance, psd
from .simulate import Trace

DENSE_LIMIT = 4096


class NumericError(ArithmeticError):
    """Quadrature or factorization did not deliver the requested accuracy."""


# -- frequency integrals ------------------------------------------------------


def _breakpoints(pair: HypothesisPair) -> list[float]:
    pts = set()
    for p in (pair.h0, pair.h1):
        for k in (-3, -1, 0, 1, 3):
            w = p.omega_L + k * p.gamma
            if w > 0:
                pts.add(w)
    return sorted(pts)


def frequency_integral(f, pair: HypothesisPair, rel_tol: float = 1e-10) -> float:
    """``int_0^inf f(omega) d omega`` for integrands concentrated near the Larmor peaks.

    The finite part ``[0, omega_c + 50 max(gamma, |d omega|)]`` is split at the
    peak and half-width points and handled by adaptive Gauss-Kronrod; the tail
    is mapped to a finite interval with ``omega = W / u``. ``f`` must accept
    scalar ``omega``.
    """
    width = max(pair.h0.gamma, pair.h1.gamma, abs(pair.delta_omega))
    W = pair.omega_c + 50.0 * width
    pts = [p for p in _breakpoints(pair) if p < W]
    total = 0.0
    err = 0.0
    edges = [0.0] + pts + [W]
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                v, e = integrate.quad(f, a, b, epsabs=0.0, epsrel=rel_tol, limit=400)
            except integrate.IntegrationWarning as exc:
                raise NumericError(f"quadrature on [{a:.6g}, {b:.6g}] failed: {exc}") from None
        total += v
        err += e
    # tail: omega = W / u, d omega = W / u^2 du, u in (0, 1]
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            tail, te = integrate.quad(lambda u: f(W / u) * W / (u * u) if u > 0 else 0.0, 0.0, 1.0,
                                      epsabs=rel_tol * abs(total), epsrel=rel_tol, limit=200)
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"tail quadrature beyond {W:.6g} failed: {exc}") from None
    total += tail
    err += te
    if err > max(1e-10 * abs(total), 1e-14):
        raise NumericError(f"integral {total:.6g} achieved only {err:.3g} absolute error")
    return total


def _ratio_terms(pair: HypothesisPair, h: int):
    p0, p1, ph = pair.h0, pair.h1, pair[h]

    def terms(w):
        s0 = float(psd(p0, w))
        s1 = float(psd(p1, w))
        sh = float(psd(ph, w))
        return s0, s1, sh

    return terms


def asymptotic_cumulant_rate(pair: HypothesisPair, h: int, m: int) -> float:
    """Per-second growth of the m-th LLR cumulant under ``h`` (1/s)."""
    if m < 1:
        raise ValueError("order must be at least 1")
    if pair.h0 == pair.h1:
        return 0.0
    terms = _ratio_terms(pair, h)
    fact = math.factorial(m - 1)

    def f(w):
        s0, s1, sh = terms(w)
        v = (sh / s0 - sh / s1) ** m
        if m == 1:
            v += math.log(s0 / s1)
        return v

    return 0.5 * fact * frequency_integral(f, pair) / math.pi


# -- dense Toeplitz algebra -------------------------------------------------------


@dataclass(frozen=True)
class ToeplitzCov:
    first_row: np.ndarray

    @property
    def n(self) -> int:
        return self.first_row.size

    def dense(self) -> np.ndarray:
        return linalg.toeplitz(self.first_row)

    def cholesky(self) -> np.ndarray:
        try:
            return linalg.cholesky(self.dense(), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError(f"covariance not positive definite: {exc}") from None

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.cholesky()))))


def build_cov(params: ModelParams, n: int, dense_limit: int = DENSE_LIMIT) -> ToeplitzCov:
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > dense_limit:
        raise ValueError(f"n={n} exceeds dense limit {dense_limit}")
    return ToeplitzCov(np.asarray(autocovariance(params, np.arange(n)), dtype=float))


def _quad_form(L: np.ndarray, y: np.ndarray) -> float:
    z = linalg.solve_triangular(L, y, lower=True)
    return float(z @ z)


def exact_llr(pair: HypothesisPair, trace: Trace | np.ndarray, dense_limit: int = DENSE_LIMIT) -> float:
    """``log p1(I) - log p0(I)`` by two Cholesky factorizations."""
    y = trace.samples if isinstance(trace, Trace) else np.asarray(trace, dtype=float)
    n = y.size
    if pair.h0 == pair.h1:
        return 0.0
    L0 = build_cov(pair.h0, n, dense_limit).cholesky()
    L1 = build_cov(pair.h1, n, dense_limit).cholesky()
    half_logdet_ratio = float(np.sum(np.log(np.diag(L0))) - np.sum(np.log(np.diag(L1))))
    return half_logdet_ratio + 0.5 * (_quad_form(L0, y) - _quad_form(L1, y))


def exact_log_density(params: ModelParams, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    L = build_cov(params, y.size).cholesky()
    return float(-0.5 * (y.size * math.log(2 * math.pi) + _quad_form(L, y)) - np.sum(np.log(np.diag(L))))


def exact_cumulant(pair: HypothesisPair, h: int, m: int, n: int) -> float:
    """m-th cumulant of the n-sample LLR under hypothesis ``h`` (m in 1..3)."""
    if m not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if pair.h0 == pair.h1:
        return 0.0
    c0 = build_cov(pair.h0, n)
    c1 = build_cov(pair.h1, n)
    th = (c0 if h == 0 else c1).dense()
    f0 = linalg.cho_factor(c0.dense(), lower=True)
    f1 = linalg.cho_factor(c1.dense(), lower=True)
    # D T_h = T0^{-1} T_h - T1^{-1} T_h
    A = linalg.cho_solve(f0, th) - linalg.cho_solve(f1, th)
    Am = np.linalg.matrix_power(A, m)
    val = 0.5 * math.factorial(m - 1) * float(np.trace(Am))
    if m == 1:
        val += float(np.sum(np.log(np.diag(f0[0]))) - np.sum(np.log(np.diag(f1[0]))))
    return val


@dataclass(frozen=True)
class ConvergenceReport:
    n: np.ndarray
    cumulant: np.ndarray
    residual: np.ndarray
    rate: float

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def top_octave_variation(self) -> float:
        """Relative spread of the residuals with ``n`` in the top octave of the grid."""
        mask = self.n >= self.n.max() / 2
        r = self.residual[mask]
        scale = np.max(np.abs(r))
        return float(np.ptp(r) / scale) if scale > 0 else 0.0


def toeplitz_convergence_report(pair: HypothesisPair, h: int, m: int, n_grid) -> ConvergenceReport:
    """Residuals ``kappa_m(n) - n delta rate``; bounded residuals mean an O(1) correction."""
    n_grid = np.asarray(sorted(int(v) for v in n_grid))
    rate = asymptotic_cumulant_rate(pair, h, m)
    kap = np.array([exact_cumulant(pair, h, m, int(n)) for n in n_grid])
    res = kap - n_grid * pair.delta * rate
    return ConvergenceReport(n_grid, kap, res, rate)
