"""Causal first-order high-pass filter and its effect on covariances and on the LLR."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from . import _kernels
from .model import HypothesisPair, ModelParams, autocovariance, discrete_transition, psd
from .oracle import frequency_integral


@dataclass(frozen=True)
class HighPassState:
    """``R_k = alpha R_{k-1} + sqrt(alpha) (I_k - I_{k-1})``, started at rest."""

    alpha: float
    delta: float
    prev_input: float = 0.0
    prev_output: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def b(self) -> float:
        """Equivalent continuous corner rate (rad/s): ``alpha = exp(-b delta)``."""
        return -math.log(self.alpha) / self.delta

    @property
    def warmup(self) -> float:
        """Seconds until the rest-start transient has decayed by ``e^-5``."""
        return 5.0 / self.b


def step(state: HighPassState, x: float) -> tuple[HighPassState, float]:
    r = state.alpha * state.prev_output + math.sqrt(state.alpha) * (x - state.prev_input)
    return replace(state, prev_input=x, prev_output=r), r


def apply(state: HighPassState, x) -> tuple[HighPassState, np.ndarray]:
    """Filter a block; the returned state continues the stream."""
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty_like(x)
    pi, po = _kernels.highpass(x, state.alpha, state.prev_input, state.prev_output, out)
    return replace(state, prev_input=float(pi), prev_output=float(po)), out


def highpass(x, alpha: float) -> np.ndarray:
    """Filter a whole record from rest."""
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty_like(x)
    _kernels.highpass(x, alpha, 0.0, 0.0, out)
    return out


def alpha_from_b(b: float, delta: float) -> float:
    return math.exp(-b * delta)


def frequency_response_sq(alpha: float, delta: float, omega) -> np.ndarray:
    """``|H(e^{i omega delta})|^2 = 2 alpha (1 - cos) / (1 + alpha^2 - 2 alpha cos)``."""
    c = np.cos(np.asarray(omega, dtype=float) * delta)
    return 2.0 * alpha * (1.0 - c) / (1.0 + alpha * alpha - 2.0 * alpha * c)


def frequency_response_sq_continuous(b: float, omega) -> np.ndarray:
    w2 = np.asarray(omega, dtype=float) ** 2
    return w2 / (b * b + w2)


def filter_matrix(alpha: float, n: int) -> np.ndarray:
    """Lower-triangular ``B`` with ``R = B I`` for a filter started at rest."""
    sa = math.sqrt(alpha)
    h = np.empty(n)
    h[0] = sa
    if n > 1:
        h[1:] = sa * (alpha - 1.0) * alpha ** np.arange(n - 1)
    return linalg.toeplitz(h, np.zeros(n))


def _augmented(params: ModelParams, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """State ``(J_y, J_z, xi_k, R_k)`` driven by ``(w_y, w_z, xi_k)``; returns (A, stationary cov)."""
    phi, qd = discrete_transition(params)
    sa = math.sqrt(alpha)
    A = np.zeros((4, 4))
    A[:2, :2] = phi
    A[3, 0] = sa * phi[1, 0]
    A[3, 1] = sa * (phi[1, 1] - 1.0)
    A[3, 2] = -sa
    A[3, 3] = alpha
    B = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, sa, sa]])
    N = np.diag([qd[0, 0], qd[1, 1], params.G])
    P = linalg.solve_discrete_lyapunov(A, B @ N @ B.T)
    return A, 0.5 * (P + P.T)


def filtered_autocovariance(params: ModelParams, alpha: float, lag) -> np.ndarray:
    """Stationary lag-k covariance ``Sigma_k`` of the filtered photocurrent.

    Exact for the infinite-past filter; the rest-started ``B T B^T`` converges
    to it geometrically in ``alpha``.
    """
    A, P = _augmented(params, alpha)
    lags = np.abs(np.atleast_1d(np.asarray(lag, dtype=int)))
    kmax = int(lags.max()) if lags.size else 0
    col = P[:, 3].copy()
    vals = np.empty(kmax + 1)
    for k in range(kmax + 1):
        vals[k] = col[3]
        col = A @ col
    out = vals[lags]
    return out if np.ndim(lag) else float(out[0])


def filtered_autocovariance_approx(params: ModelParams, alpha: float, lag) -> np.ndarray:
    """High-Larmor-frequency expansion of ``Sigma_k`` (diagnostic only)."""
    b = -math.log(alpha) / params.delta
    k = np.abs(np.asarray(lag))
    T = autocovariance(params, k)
    wl2 = params.omega_L**2
    # zero-frequency power removed by the filter: shot noise plus both Lorentzian tails
    tail = b * (0.5 * params.S_ph + params.gamma**2 * params.S_at / wl2) * np.exp(-b * k * params.delta)
    return (1.0 - b * b / wl2) * T - tail


def filter_error_cumulants(
    pair: HypothesisPair, alpha: float, m: int, h: int, discrete: bool = False
) -> float:
    """Per-second rate of the m-th cumulant of ``eps = L(I) - L(R)`` under ``h``.

    ``discrete=True`` swaps the continuous weight ``b^2/(omega^2+b^2)`` for the
    exact sampled one ``1 - |H|^2``.
    """
    if m not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if pair.h0 == pair.h1:
        return 0.0
    delta = pair.delta
    b = -math.log(alpha) / delta
    nyq = math.pi / delta
    p0, p1, ph = pair.h0, pair.h1, pair[h]

    def f(w):
        if discrete and w > nyq:
            return 0.0
        s0, s1, sh = float(psd(p0, w)), float(psd(p1, w)), float(psd(ph, w))
        wt = 1.0 - float(frequency_response_sq(alpha, delta, w)) if discrete else b * b / (w * w + b * b)
        return (wt * (sh / s0 - sh / s1)) ** m

    return math.factorial(m - 1) * frequency_integral(f, pair) / (2.0 * math.pi)


def filter_error_leading(pair: HypothesisPair, alpha: float, rho: float, v: float) -> tuple[float, float]:
    """Leading-order ``(b^2/omega_c^2) rho`` and ``(b^4/omega_c^4) v``."""
    b = -math.log(alpha) / pair.delta
    r = (b / pair.omega_c) ** 2
    return r * rho, r * r * v
