"""Parametric spin-noise model shared by every other module.

All internal quantities are angular (rad/s). Config files carry frequencies
in Hz and are converted on load. The transduction constant is fixed to 1 and
the Wiener strength is ``Q = 2 gamma**2 S_at``, so ``(S_at, S_ph)`` fully fix
the observable statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid model parameters or malformed config file."""


@dataclass(frozen=True)
class ModelParams:
    """One hypothesis: relaxation, Larmor frequency, spectral levels, sampling."""

    gamma: float
    omega_L: float
    S_at: float
    S_ph: float
    delta: float

    def __post_init__(self) -> None:
        for name in ("gamma", "omega_L", "S_at", "S_ph", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.gamma <= 0 or self.omega_L <= 0 or self.S_ph <= 0 or self.delta <= 0:
            raise ConfigError("gamma, omega_L, S_ph and delta must be positive")
        if self.S_at < 0:
            raise ConfigError("S_at must be non-negative")
        if self.omega_L * self.delta >= math.pi:
            raise ConfigError("omega_L * delta must stay below pi (Nyquist)")

    @property
    def Q(self) -> float:
        return 2.0 * self.gamma**2 * self.S_at

    @property
    def G(self) -> float:
        """Measurement-noise variance per sample."""
        return self.S_ph / self.delta

    @property
    def state_var(self) -> float:
        """Stationary variance of each spin component, Q / 2 gamma."""
        return self.gamma * self.S_at

    def with_(self, **changes: float) -> "ModelParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class HypothesisPair:
    """Two hypotheses that share everything but the Larmor frequency."""

    h0: ModelParams
    h1: ModelParams
    strict: bool = True

    def __post_init__(self) -> None:
        if self.h0.delta != self.h1.delta:
            raise ConfigError("hypotheses must share the sampling period")
        if self.strict:
            for name in ("gamma", "S_at", "S_ph"):
                if getattr(self.h0, name) != getattr(self.h1, name):
                    raise ConfigError(f"hypotheses differ in {name}; pass strict=False to allow")

    @classmethod
    def from_center(
        cls, omega_c: float, delta_omega: float, gamma: float, S_at: float, S_ph: float, delta: float
    ) -> "HypothesisPair":
        """``omega_L,h = omega_c + (-1)**h * delta_omega / 2``."""
        h0 = ModelParams(gamma, omega_c + 0.5 * delta_omega, S_at, S_ph, delta)
        h1 = ModelParams(gamma, omega_c - 0.5 * delta_omega, S_at, S_ph, delta)
        return cls(h0, h1)

    def __getitem__(self, h: int) -> ModelParams:
        if h == 0:
            return self.h0
        if h == 1:
            return self.h1
        raise IndexError(h)

    def swapped(self) -> "HypothesisPair":
        return HypothesisPair(self.h1, self.h0, self.strict)

    @property
    def delta(self) -> float:
        return self.h0.delta

    @property
    def omega_c(self) -> float:
        return 0.5 * (self.h0.omega_L + self.h1.omega_L)

    @property
    def delta_omega(self) -> float:
        return self.h0.omega_L - self.h1.omega_L

    @property
    def c_a(self) -> float:
        return abs(self.delta_omega) / self.h0.gamma

    @property
    def c_b(self) -> float:
        return self.h0.S_at / self.h0.S_ph

    @property
    def identical(self) -> bool:
        return self.h0 == self.h1


# Reference estimates; frequencies in Hz, spectral levels in uV^2/Hz.
REFERENCE_HZ = {
    "gamma_hz": 330.90,
    "omega_l0_hz": 50114.03,
    "omega_l1_hz": 50550.88,
    "s_at": 31.768,
    "s_ph": 13.0457,
    "delta_s": 5e-6,
}
REFERENCE_SIGMA_HZ = {"gamma": 0.90, "omega_L0": 0.97, "omega_L1": 0.97, "S_at": 0.087, "S_ph": 0.0038}

CONFIG_KEYS = ("gamma_hz", "omega_l0_hz", "omega_l1_hz", "s_at", "s_ph", "delta_s")


def pair_from_dict(cfg: dict) -> HypothesisPair:
    missing = [k for k in CONFIG_KEYS if k not in cfg]
    if missing:
        raise ConfigError(f"config missing keys: {', '.join(missing)}")
    try:
        vals = {k: float(cfg[k]) for k in CONFIG_KEYS}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric config value: {exc}") from None
    gamma = TWO_PI * vals["gamma_hz"]
    h0 = ModelParams(gamma, TWO_PI * vals["omega_l0_hz"], vals["s_at"], vals["s_ph"], vals["delta_s"])
    h1 = ModelParams(gamma, TWO_PI * vals["omega_l1_hz"], vals["s_at"], vals["s_ph"], vals["delta_s"])
    return HypothesisPair(h0, h1)


def pair_to_dict(pair: HypothesisPair) -> dict:
    return {
        "gamma_hz": pair.h0.gamma / TWO_PI,
        "omega_l0_hz": pair.h0.omega_L / TWO_PI,
        "omega_l1_hz": pair.h1.omega_L / TWO_PI,
        "s_at": pair.h0.S_at,
        "s_ph": pair.h0.S_ph,
        "delta_s": pair.delta,
    }


def load_pair(path: str | Path) -> HypothesisPair:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return pair_from_dict(cfg)


def reference_pair() -> HypothesisPair:
    return pair_from_dict(REFERENCE_HZ)


def psd(params: ModelParams, omega):
    """Two-sided Lorentzian PSD plus shot-noise floor, even in ``omega``."""
    omega = np.asarray(omega, dtype=float)
    g2 = params.gamma**2
    lor = g2 / (g2 + (omega - params.omega_L) ** 2) + g2 / (g2 + (omega + params.omega_L) ** 2)
    return params.S_at * lor + params.S_ph


def steady_state_moments(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(2), params.state_var * np.eye(2)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def drift_matrix(params: ModelParams) -> np.ndarray:
    return np.array([[-params.gamma, params.omega_L], [-params.omega_L, -params.gamma]])


def discrete_transition(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step transition ``Phi = exp(A delta)`` and process covariance ``Qd``."""
    gd = params.gamma * params.delta
    phi = math.exp(-gd) * rotation(params.omega_L * params.delta)
    # -expm1 keeps Qd accurate when gamma*delta is tiny
    qd = params.state_var * (-math.expm1(-2.0 * gd)) * np.eye(2)
    return phi, qd


def autocovariance(params: ModelParams, lag):
    """Lag-k covariance of the sampled photocurrent."""
    k = np.abs(np.asarray(lag))
    out = params.state_var * np.exp(-params.gamma * k * params.delta) * np.cos(k * params.omega_L * params.delta)
    return out + np.where(k == 0, params.G, 0.0)
