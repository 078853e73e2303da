"""Decision layer: fixed-sample test, SPRT, CUSUM and change-point estimation.

Sign convention throughout: ``L = log p1/p0``, so evidence for h1 pushes the
statistic up. SPRT accepts h1 at the upper threshold ``a1`` and h0 at the
lower one ``-a0``; both thresholds are closed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .model import ConfigError


class Verdict(str, enum.Enum):
    CONTINUE = "continue"
    ACCEPT_H0 = "accept_h0"
    ACCEPT_H1 = "accept_h1"
    ALARM = "alarm"


class CusumVariant(str, enum.Enum):
    MAX_FORM = "max_form"
    POSITIVE_PART = "positive_part"


@dataclass(frozen=True)
class SprtConfig:
    """Target conditional error bounds and priors; thresholds follow from them."""

    eps0: float
    eps1: float
    pi0: float = 0.5

    def __post_init__(self) -> None:
        for e in (self.eps0, self.eps1):
            if not 0.0 < e < 0.5:
                raise ConfigError("error targets must lie in (0, 1/2)")
        if not 0.0 < self.pi0 < 1.0:
            raise ConfigError("prior must lie in (0, 1)")
        if self.a0 <= 0 or self.a1 <= 0:
            raise ConfigError("priors too lopsided for these error targets: a threshold is not positive")

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0

    @property
    def a0(self) -> float:
        return math.log(self.pi1 * (1.0 - self.eps0) / (self.pi0 * self.eps0))

    @property
    def a1(self) -> float:
        return math.log(self.pi0 * (1.0 - self.eps1) / (self.pi1 * self.eps1))

    @classmethod
    def symmetric(cls, eps: float) -> "SprtConfig":
        return cls(eps, eps)

    @classmethod
    def from_thresholds(cls, a0: float, a1: float, pi0: float = 0.5) -> "SprtConfig":
        pi1 = 1.0 - pi0
        return cls(1.0 / (1.0 + math.exp(a0) * pi0 / pi1), 1.0 / (1.0 + math.exp(a1) * pi1 / pi0), pi0)


@dataclass(frozen=True)
class CusumConfig:
    a: Optional[float] = None
    variant: CusumVariant = CusumVariant.MAX_FORM
    t_fa_target: Optional[float] = None
    delta: Optional[float] = None
    reset: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", CusumVariant(self.variant))
        if self.a is None:
            if self.t_fa_target is None or self.delta is None:
                raise ConfigError("give either a threshold or t_fa_target together with delta")
            if self.t_fa_target <= self.delta:
                raise ConfigError("t_fa_target must exceed the sampling period")
            object.__setattr__(self, "a", math.log(self.t_fa_target / self.delta))
        if not self.a > 0:
            raise ConfigError("CUSUM threshold must be positive")


@dataclass(frozen=True)
class DecisionRecord:
    n: int
    t: float
    llr: float
    cusum: Optional[float] = None
    verdict: Verdict = Verdict.CONTINUE
    change_estimate: Optional[int] = None

    def as_dict(self) -> dict:
        """JSON-ready mapping; absent optional fields are left out."""
        d = {"n": self.n, "t": self.t, "llr": self.llr}
        if self.cusum is not None:
            d["cusum"] = self.cusum
        d["verdict"] = Verdict(self.verdict).value
        if self.change_estimate is not None:
            d["change_estimate"] = self.change_estimate
        return d


def fixed_sample_test(llr_final: float, a: float = 0.0) -> Verdict:
    """Likelihood-ratio test on a complete record: h1 iff ``L > a``."""
    return Verdict.ACCEPT_H1 if llr_final > a else Verdict.ACCEPT_H0


def sprt_step(cfg: SprtConfig, cumulative_llr: float) -> Verdict:
    if cumulative_llr >= cfg.a1:
        return Verdict.ACCEPT_H1
    if cumulative_llr <= -cfg.a0:
        return Verdict.ACCEPT_H0
    return Verdict.CONTINUE


def wald_errors(a0: float, a1: float) -> tuple[float, float]:
    """Error probabilities ``(alpha0, alpha1)`` implied by thresholds ``(a0, a1)``."""
    if a0 <= 0 or a1 <= 0:
        raise ValueError("thresholds must be positive")
    alpha0 = -math.expm1(-a1) / (math.exp(a0) - math.exp(-a1))
    alpha1 = -math.expm1(-a0) / (math.exp(a1) - math.exp(-a0))
    return alpha0, alpha1


def cusum_step(cfg: CusumConfig, state: float, delta_llr: float) -> tuple[float, bool]:
    if cfg.variant is CusumVariant.MAX_FORM:
        s = max(state, 0.0) + delta_llr
    else:
        s = state + max(0.0, delta_llr)
    alarm = s >= cfg.a
    if alarm and cfg.reset:
        s = 0.0
    return s, alarm


def cusum_statistic(dl: np.ndarray) -> np.ndarray:
    """Max-form statistic ``max(M, 0) + dL`` for every prefix of ``dl``, without alarms."""
    dl = np.asarray(dl, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(dl)])
    # M_n = max_{k<=n} sum_{i=k}^n dl_i = c[n+1] - min_{j<=n} c[j]
    return c[1:] - np.minimum.accumulate(c[:-1])


def change_point_estimate(cumulative_llr_history: Sequence[float]) -> int:
    """Index of the first post-change sample.

    The candidate change after ``j`` samples has pre-change evidence
    ``L_j`` (with ``L_0 = 0``), so the maximum-likelihood split is the earliest
    argmin over ``j`` of the zero-prepended history.
    """
    h = np.asarray(cumulative_llr_history, dtype=float)
    if h.size == 0:
        raise ValueError("empty LLR history")
    return int(np.argmin(np.concatenate([[0.0], h])))


# -- vectorised scans used by batch experiments -----------------------------------


def sprt_exits(cum: np.ndarray, thresholds: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Per symmetric threshold: stopping index (-1 if never) and whether h1 was accepted."""
    th = np.ascontiguousarray(thresholds, dtype=float)
    idx = np.empty(th.size, dtype=np.int64)
    acc = np.empty(th.size, dtype=np.bool_)
    _kernels.sprt_first_exit(np.ascontiguousarray(cum, dtype=float), th, idx, acc)
    return idx, acc


def cusum_first_alarms(dl: np.ndarray, thresholds: Sequence[float], start: int = 0) -> np.ndarray:
    th = np.ascontiguousarray(thresholds, dtype=float)
    idx = np.empty(th.size, dtype=np.int64)
    _kernels.cusum_first_alarm(np.ascontiguousarray(dl, dtype=float), th, int(start), idx)
    return idx


def cusum_alarm_count(dl: np.ndarray, a: float, variant: CusumVariant | str = CusumVariant.MAX_FORM) -> int:
    """Number of alarms on one stream with reset-and-continue."""
    pos = CusumVariant(variant) is CusumVariant.POSITIVE_PART
    return int(_kernels.cusum_count_alarms(np.ascontiguousarray(dl, dtype=float), float(a), pos))


def cusum_alarm_indices(dl: np.ndarray, a: float, variant: CusumVariant | str = CusumVariant.MAX_FORM) -> list[int]:
    """Every alarm index on one stream with reset-and-continue."""
    dl = np.ascontiguousarray(dl, dtype=float)
    out: list[int] = []
    if CusumVariant(variant) is CusumVariant.POSITIVE_PART:
        m = 0.0
        for k, d in enumerate(dl):
            if d > 0.0:
                m += d
            if m >= a:
                out.append(k)
                m = 0.0
        return out
    th = np.array([a])
    idx = np.empty(1, dtype=np.int64)
    start = 0
    while start < dl.size:
        _kernels.cusum_first_alarm(dl, th, start, idx)
        if idx[0] < 0:
            break
        out.append(int(idx[0]))
        start = int(idx[0]) + 1
    return out


# -- run statistics -----------------------------------------------------------------


@dataclass(frozen=True)
class RunOutcome:
    """One CUSUM run: sample count, alarm indices (in order) and the true change, if any."""

    n: int
    delta: float
    alarms: tuple[int, ...] = ()
    nu: Optional[int] = None


@dataclass(frozen=True)
class DelayStats:
    mean_delay: float
    delay_se: float
    n_delay: int
    mean_false_alarm_time: float
    n_false_alarms: int
    exposure: float
    n_excluded: int = 0
    notes: list = field(default_factory=list)


def delay_and_false_alarm_stats(runs: Iterable[RunOutcome]) -> DelayStats:
    """Conditional mean delay from change runs; mean false-alarm time from no-change runs.

    The delay counts post-change samples consumed up to and including the
    alarm. Change runs that alarm before the change or never alarm are
    excluded. The false-alarm time is total no-change exposure over the number
    of alarms; with zero alarms it is reported as ``inf`` (exposure is then a
    lower bound).
    """
    delays = []
    excluded = 0
    exposure = 0.0
    n_fa = 0
    any_run = False
    for r in runs:
        any_run = True
        if r.nu is None:
            exposure += r.n * r.delta
            n_fa += len(r.alarms)
            continue
        first = r.alarms[0] if r.alarms else None
        if first is None or first < r.nu:
            excluded += 1
            continue
        delays.append((first + 1 - r.nu) * r.delta)
    if not any_run or (not delays and exposure == 0.0):
        raise ValueError("no completed runs")
    d = np.asarray(delays)
    mean_delay = float(d.mean()) if d.size else float("nan")
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else float("nan")
    if exposure > 0:
        tfa = exposure / n_fa if n_fa else math.inf
    else:
        tfa = float("nan")
    return DelayStats(mean_delay, se, int(d.size), tfa, n_fa, exposure, excluded)
