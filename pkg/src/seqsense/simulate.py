"""Synthetic photocurrent traces from the exactly discretized OU spin model."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .model import ConfigError, HypothesisPair, ModelParams, discrete_transition

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def trace_seed(master_seed: int, index: int) -> int:
    """Per-trace seed: one splitmix64 output keyed by ``(master_seed, index)``.

    Pure function of its arguments, so any single trajectory of a batch can be
    regenerated without replaying the others.
    """
    z = (int(master_seed) + (int(index) + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SpinState:
    j: tuple[float, float]

    def __post_init__(self) -> None:
        if len(self.j) != 2 or not all(math.isfinite(v) for v in self.j):
            raise ConfigError("spin state must be a finite 2-vector")


@dataclass
class Trace:
    samples: np.ndarray
    delta: float
    seed: Optional[int] = None
    true_change_index: Optional[int] = None
    label: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("trace needs a non-empty 1-d sample array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trace samples must be finite")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        nu = self.true_change_index
        if nu is not None and not 0 <= nu <= self.samples.size:
            raise ValueError("change index outside trace")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size * self.delta

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.delta

    def with_samples(self, samples: np.ndarray) -> "Trace":
        return replace(self, samples=samples, meta=dict(self.meta))


def _run(phi_pre, phi_post, nu, params: ModelParams, n, rng, initial) -> np.ndarray:
    _, qd = discrete_transition(params)
    noise = rng.standard_normal((n, 3))
    out = np.empty(n)
    fixed = initial is not None
    j0 = np.asarray(initial.j if fixed else (0.0, 0.0), dtype=float)
    _kernels.ou_trace(
        phi_pre, phi_post, nu, math.sqrt(qd[0, 0]), math.sqrt(params.state_var),
        math.sqrt(params.G), noise, j0, fixed, out,
    )
    return out


def _check_n(n: int) -> int:
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    return n


def simulate(
    params: ModelParams, n: int, seed: int, initial: Optional[SpinState] = None, label: Optional[str] = None
) -> Trace:
    """``n`` samples of ``I_k = J_z(t_k) + xi_k``; ``initial=None`` starts in the steady state."""
    n = _check_n(n)
    phi, _ = discrete_transition(params)
    rng = np.random.default_rng(seed)
    return Trace(_run(phi, phi, n, params, n, rng, initial), params.delta, seed, None, label)


def simulate_with_change(pair: HypothesisPair, n: int, nu: int, seed: int) -> Trace:
    """Dynamics of h0 before sample ``nu`` and of h1 from ``nu`` on, with a continuous spin state.

    The pair must share ``gamma`` and ``S_at`` because the process noise is
    taken from h0 throughout.
    """
    n = _check_n(n)
    if not 0 <= nu <= n:
        raise ValueError("nu must lie in [0, n]")
    if pair.h0.state_var != pair.h1.state_var or pair.h0.gamma != pair.h1.gamma or pair.h0.G != pair.h1.G:
        raise ConfigError("change injection needs hypotheses that differ only in omega_L")
    phi0, _ = discrete_transition(pair.h0)
    phi1, _ = discrete_transition(pair.h1)
    rng = np.random.default_rng(seed)
    # the initial state is stationary under either hypothesis (isotropic covariance)
    out = _run(phi0, phi1, nu, pair.h0, n, rng, None)
    return Trace(out, pair.delta, seed, int(nu), None)


def fluctuated_params(params: ModelParams, dgamma: float) -> ModelParams:
    """Shift gamma by ``dgamma`` keeping ``S_at * gamma`` (the spin variance) fixed."""
    g = params.gamma + dgamma
    if g <= 0:
        raise ConfigError(f"fluctuated gamma {g} is not positive")
    return params.with_(gamma=g, S_at=params.S_at * params.gamma / g)


def simulate_fluctuating_gamma(params: ModelParams, n: int, sigma_dgamma: float, seed: int) -> Trace:
    """One run-to-run Gaussian draw of ``delta gamma`` per trace, then :func:`simulate`.

    The trace noise is drawn first from the seeded stream so that
    ``sigma_dgamma = 0`` reproduces :func:`simulate` bit for bit.
    """
    n = _check_n(n)
    if sigma_dgamma < 0:
        raise ValueError("sigma_dgamma must be non-negative")
    sigma = min(sigma_dgamma, params.gamma / 3.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, 3))
    dgamma = sigma * rng.standard_normal() if sigma > 0 else 0.0
    p = fluctuated_params(params, dgamma)
    phi, qd = discrete_transition(p)
    out = np.empty(n)
    _kernels.ou_trace(
        phi, phi, n, math.sqrt(qd[0, 0]), math.sqrt(p.state_var), math.sqrt(p.G),
        noise, np.zeros(2), False, out,
    )
    tr = Trace(out, params.delta, seed)
    tr.meta["dgamma"] = dgamma
    return tr


def simulate_batch(params: ModelParams, n: int, n_traces: int, master_seed: int) -> np.ndarray:
    """``(n_traces, n)`` array; row i uses ``trace_seed(master_seed, i)``."""
    out = np.empty((n_traces, n))
    for i in range(n_traces):
        out[i] = simulate(params, n, trace_seed(master_seed, i)).samples
    return out


# -- trace files -----------------------------------------------------------------


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_trace(trace: Trace, path: str | Path) -> None:
    """``.csv`` writes a ``t,value`` table; anything else raw little-endian f64 plus a JSON sidecar."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        data = np.column_stack([trace.times(), trace.samples])
        np.savetxt(path, data, delimiter=",", header="t,value", comments="", fmt="%.17g")
        return
    trace.samples.astype("<f8").tofile(path)
    side = {"delta_s": trace.delta, "seed": trace.seed, "nu": trace.true_change_index, "label": trace.label}
    _sidecar(path).write_text(json.dumps(side))


def load_trace(path: str | Path, delta: Optional[float] = None) -> Trace:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if delta is None:
            if data.shape[0] < 2:
                raise ConfigError("single-row CSV needs an explicit delta")
            delta = float(data[1, 0] - data[0, 0])
        return Trace(data[:, 1], delta)
    samples = np.fromfile(path, dtype="<f8")
    side = {}
    if _sidecar(path).exists():
        side = json.loads(_sidecar(path).read_text())
    d = delta if delta is not None else side.get("delta_s")
    if d is None:
        raise ConfigError(f"no sampling period for {path}: missing sidecar")
    return Trace(samples, float(d), side.get("seed"), side.get("nu"), side.get("label"))
