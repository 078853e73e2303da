"""Monte Carlo campaigns and the streaming decision loop.

Every trajectory draws its own seed from :func:`simulate.trace_seed`, keyed
by the campaign's master seed, the hypothesis and the trace index, so results
do not depend on how work is split across threads.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

from . import _kernels, bounds, kalman, prefilter, sequential, spectral
from .model import HypothesisPair
from .sequential import CusumConfig, CusumVariant, DecisionRecord, RunOutcome, SprtConfig, Verdict
from .simulate import simulate, simulate_with_change, trace_seed


class Kind(str, enum.Enum):
    HT_SWEEP = "ht_sweep"
    CUSUM_SWEEP = "cusum_sweep"
    CALIBRATION = "calibration"
    FILTER_ERROR = "filter_error"
    BOUNDS_REPORT = "bounds_report"


@dataclass(frozen=True)
class ExperimentSpec:
    kind: Kind
    pair: HypothesisPair
    n_traces: int = 1000
    trace_len: float = 0.04
    thresholds: tuple = ()
    alpha_filter: Optional[float] = 0.91
    master_seed: int = 0
    fixed_times: tuple = ()
    change_time: float = 0.0
    fa_trace_len: float = 1.0
    cusum_variant: CusumVariant = CusumVariant.MAX_FORM
    n_batches: int = 100
    band: tuple = ()
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.n_traces < 1:
            raise ValueError("n_traces must be at least 1")
        if self.kind in (Kind.HT_SWEEP, Kind.CUSUM_SWEEP) and len(self.thresholds) == 0:
            raise ValueError("sweeps need at least one threshold")
        if self.trace_len <= 0:
            raise ValueError("trace_len must be positive")

    @property
    def n_samples(self) -> int:
        return max(1, int(round(self.trace_len / self.pair.delta)))


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    value: float
    mean_stop_time: float
    n_excluded: int
    std_err: float
    n_completed: int
    extra: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    kind: str
    rows: list
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Write the rows to ``path``, or to an open text stream."""
        keys = sorted({k for r in self.rows for k in r.extra})
        lines = [",".join(["threshold", "value", "mean_stop_time", "n_excluded", "std_err", "n_completed"] + keys)]
        for r in self.rows:
            vals = [r.threshold, r.value, r.mean_stop_time, r.n_excluded, r.std_err, r.n_completed]
            vals += [r.extra.get(k, "") for k in keys]
            lines.append(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in vals))
        text = "\n".join(lines) + "\n"
        if hasattr(path, "write"):
            path.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map; compiled kernels release the GIL so threads overlap."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _llr_of(pair: HypothesisPair, y: np.ndarray, alpha: Optional[float]) -> np.ndarray:
    if alpha is not None:
        y = prefilter.highpass(y, alpha)
    return kalman.llr_increments(pair, y)


def hypothesis_llr(spec: ExperimentSpec, h: int, i: int, n: Optional[int] = None) -> np.ndarray:
    """LLR increments of trace ``i`` simulated under hypothesis ``h``."""
    seed = trace_seed(trace_seed(spec.master_seed, h), i)
    y = simulate(spec.pair[h], n or spec.n_samples, seed).samples
    return _llr_of(spec.pair, y, spec.alpha_filter)


# -- hypothesis testing ---------------------------------------------------------------


def _binom_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 1.0 / n) / n) if n else float("nan")


def run_ht_sweep(spec: ExperimentSpec) -> SweepResult:
    """SPRT rows for each symmetric threshold and fixed-time rows for each time.

    SPRT rows: ``value`` is the pooled empirical error over stopped runs of
    both hypotheses, ``mean_stop_time`` the pooled mean stopping time. Fixed
    rows (``extra['kind'] == 'fixed'``) use the maximum-likelihood rule.
    """
    if spec.kind is not Kind.HT_SWEEP:
        raise ValueError("spec.kind must be ht_sweep")
    th = np.asarray(sorted(spec.thresholds), dtype=float)
    delta = spec.pair.delta
    times = np.asarray(sorted(spec.fixed_times), dtype=float)
    fixed_idx = np.minimum(np.round(times / delta).astype(int), spec.n_samples) - 1

    def one(job):
        h, i = job
        cum = np.cumsum(hypothesis_llr(spec, h, i))
        stop, acc = sequential.sprt_exits(cum, th)
        fixed = cum[fixed_idx] if fixed_idx.size else np.empty(0)
        return h, stop, acc, fixed

    jobs = [(h, i) for h in (0, 1) for i in range(spec.n_traces)]
    results = parallel_map(one, jobs, spec.threads)
    rows = []
    for t, a in enumerate(th):
        per_h = {}
        for h in (0, 1):
            stops = np.array([r[1][t] for r in results if r[0] == h])
            accs = np.array([r[2][t] for r in results if r[0] == h])
            done = stops >= 0
            wrong = accs[done] != bool(h)
            per_h[h] = (done, wrong, (stops[done] + 1) * delta)
        done_all = np.concatenate([per_h[h][0] for h in (0, 1)])
        wrong_all = np.concatenate([per_h[h][1] for h in (0, 1)])
        times_all = np.concatenate([per_h[h][2] for h in (0, 1)])
        nc = int(done_all.sum())
        if nc == 0:
            raise RuntimeError(f"no run reached a decision at threshold {a}")
        err = float(wrong_all.mean())
        extra = {
            "kind": "sprt",
            "wald_error": sequential.wald_errors(a, a)[0],
            "error_h0": float(per_h[0][1].mean()) if per_h[0][1].size else float("nan"),
            "error_h1": float(per_h[1][1].mean()) if per_h[1][1].size else float("nan"),
            "mean_time_h0": float(per_h[0][2].mean()) if per_h[0][2].size else float("nan"),
            "mean_time_h1": float(per_h[1][2].mean()) if per_h[1][2].size else float("nan"),
            "time_se": float(times_all.std(ddof=1) / math.sqrt(nc)) if nc > 1 else float("nan"),
        }
        rows.append(SweepRow(float(a), err, float(times_all.mean()), int((~done_all).sum()), _binom_se(err, nc), nc, extra))
    for j, t in enumerate(times):
        wrong = np.array([(r[3][j] > 0.0) != bool(r[0]) for r in results])
        err = float(wrong.mean())
        extra = {"kind": "fixed",
                 "error_h0": float(np.mean([r[3][j] > 0.0 for r in results if r[0] == 0])),
                 "error_h1": float(np.mean([r[3][j] <= 0.0 for r in results if r[0] == 1]))}
        rows.append(SweepRow(float(t), err, float(t), 0, _binom_se(err, wrong.size), wrong.size, extra))
    return SweepResult("ht_sweep", rows, {"n_traces": spec.n_traces, "trace_len": spec.trace_len})


def sprt_rows(res: SweepResult) -> list:
    return [r for r in res.rows if r.extra.get("kind") == "sprt"]


def fixed_rows(res: SweepResult) -> list:
    return [r for r in res.rows if r.extra.get("kind") == "fixed"]


def fit_line(x, y, w=None) -> tuple[float, float]:
    """Weighted least-squares ``y = slope x + intercept``."""
    slope, icpt = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1, w=w)
    return float(slope), float(icpt)


# -- change-point detection ------------------------------------------------------------


def change_llr(spec: ExperimentSpec, i: int, n: int, nu: int) -> np.ndarray:
    seed = trace_seed(trace_seed(spec.master_seed, 2), i)
    y = simulate_with_change(spec.pair, n, nu, seed).samples
    return _llr_of(spec.pair, y, spec.alpha_filter)


def run_cusum_sweep(spec: ExperimentSpec) -> SweepResult:
    """Mean delay per threshold from change runs and mean false-alarm time from no-change runs.

    Change runs switch at ``spec.change_time`` and last ``trace_len`` after it;
    runs that alarm early or never are excluded from the delay mean. No-change
    runs under h0 last ``fa_trace_len`` with reset-and-continue.
    """
    if spec.kind is not Kind.CUSUM_SWEEP:
        raise ValueError("spec.kind must be cusum_sweep")
    th = np.asarray(sorted(spec.thresholds), dtype=float)
    delta = spec.pair.delta
    nu = int(round(spec.change_time / delta))
    n = nu + spec.n_samples
    n_fa = max(1, int(round(spec.fa_trace_len / delta)))
    pos = spec.cusum_variant is CusumVariant.POSITIVE_PART

    def change_run(i):
        dl = change_llr(spec, i, n, nu)
        if pos:
            return _first_alarms_positive(dl, th)
        return sequential.cusum_first_alarms(dl, th)

    def fa_run(i):
        dl = hypothesis_llr(spec, 0, i, n_fa)
        return [sequential.cusum_alarm_count(dl, a, spec.cusum_variant) for a in th]

    first = np.array(parallel_map(change_run, range(spec.n_traces), spec.threads))
    counts = np.array(parallel_map(fa_run, range(spec.n_traces), spec.threads))
    rows = []
    for t, a in enumerate(th):
        runs = [RunOutcome(n, delta, (int(first[i, t]),) if first[i, t] >= 0 else (), nu) for i in range(spec.n_traces)]
        runs += [RunOutcome(n_fa, delta, tuple(range(int(counts[i, t]))), None) for i in range(spec.n_traces)]
        st = sequential.delay_and_false_alarm_stats(runs)
        extra = {
            "mean_false_alarm_time": st.mean_false_alarm_time,
            "n_false_alarms": st.n_false_alarms,
            "exposure": st.exposure,
            "predicted_delay": a / bounds.kl_rate(spec.pair, 1) if not spec.pair.identical else float("nan"),
        }
        rows.append(SweepRow(float(a), st.mean_delay, st.mean_delay, st.n_excluded, st.delay_se, st.n_delay, extra))
    return SweepResult("cusum_sweep", rows, {"nu": nu, "n_traces": spec.n_traces, "fa_trace_len": spec.fa_trace_len})


def _first_alarms_positive(dl: np.ndarray, th: np.ndarray) -> np.ndarray:
    acc = np.cumsum(np.maximum(dl, 0.0))
    out = np.searchsorted(acc, th, side="left")
    return np.where(out < dl.size, out, -1)


@dataclass(frozen=True)
class ChangePointRun:
    nu: int
    alarm: int
    estimate: int

    @property
    def error(self) -> int:
        return self.estimate - self.nu


def run_change_point(spec: ExperimentSpec, a: float) -> list[ChangePointRun]:
    """Alarm at threshold ``a`` and the argmin change estimate for each change run."""
    delta = spec.pair.delta
    nu = int(round(spec.change_time / delta))
    n = nu + spec.n_samples

    def one(i):
        dl = change_llr(spec, i, n, nu)
        alarm = int(sequential.cusum_first_alarms(dl, [a])[0])
        if alarm < 0:
            return ChangePointRun(nu, -1, -1)
        est = sequential.change_point_estimate(np.cumsum(dl[: alarm + 1]))
        return ChangePointRun(nu, alarm, est)

    return parallel_map(one, range(spec.n_traces), spec.threads)


# -- LLR moments and filter error ------------------------------------------------------


@dataclass(frozen=True)
class MomentResult:
    t: float
    llr_mean_rate: float
    llr_mean_se: float
    llr_var_rate: float
    eps_mean_rate: float
    eps_mean_se: float
    eps_var_rate: float
    n_traces: int


def run_filter_error(spec: ExperimentSpec, h: int = 0) -> MomentResult:
    """Per-unit-time moments of the unfiltered LLR and of ``eps = L(I) - L(R)`` at ``trace_len``."""
    alpha = spec.alpha_filter if spec.alpha_filter is not None else 0.91

    def one(i):
        seed = trace_seed(trace_seed(spec.master_seed, h), i)
        y = simulate(spec.pair[h], spec.n_samples, seed).samples
        li = float(np.sum(kalman.llr_increments(spec.pair, y)))
        lr = float(np.sum(kalman.llr_increments(spec.pair, prefilter.highpass(y, alpha))))
        return li, li - lr

    res = np.array(parallel_map(one, range(spec.n_traces), spec.threads))
    t = spec.n_samples * spec.pair.delta
    L, eps = res[:, 0], res[:, 1]
    k = math.sqrt(res.shape[0])
    return MomentResult(
        t, L.mean() / t, L.std(ddof=1) / k / t, L.var(ddof=1) / t,
        eps.mean() / t, eps.std(ddof=1) / k / t, eps.var(ddof=1) / t, res.shape[0],
    )


# -- calibration -----------------------------------------------------------------


@dataclass
class CalibrationResult:
    theta_true: np.ndarray
    estimates: np.ndarray
    crb_sigma: np.ndarray
    converged: np.ndarray

    @property
    def mse(self) -> np.ndarray:
        return np.mean((self.estimates - self.theta_true) ** 2, axis=0)

    @property
    def mse_over_crb(self) -> np.ndarray:
        return self.mse / self.crb_sigma**2

    @property
    def nonconverged_rate(self) -> float:
        return float(1.0 - self.converged.mean())

    @property
    def flagged(self) -> bool:
        return self.nonconverged_rate > 0.10


def run_calibration(spec: ExperimentSpec) -> CalibrationResult:
    """``n_batches`` independent joint fits, each from ``n_traces`` records per hypothesis."""
    band = spec.band or (2 * math.pi * 40e3, 2 * math.pi * 60e3)
    theta = spectral.theta_from_pair(spec.pair)
    delta = spec.pair.delta
    n = spec.n_samples

    def one(b):
        pgs = []
        for h in (0, 1):
            base = trace_seed(trace_seed(spec.master_seed, 10 + h), b)
            X = np.stack([simulate(spec.pair[h], n, trace_seed(base, i)).samples for i in range(spec.n_traces)])
            pgs.append(spectral.periodogram(X, delta))
        fr = spectral.mle_fit(pgs[0], pgs[1], theta, band, seed=b)
        return fr.theta_hat, fr.converged

    out = parallel_map(one, range(spec.n_batches), spec.threads)
    est = np.array([o[0] for o in out])
    conv = np.array([o[1] for o in out])
    F = spectral.fisher_matrix(theta, band, spec.n_traces * n * delta, delta)
    return CalibrationResult(theta, est, spectral.crb_sigma(F), conv)


def run_bounds_report(spec: ExperimentSpec) -> dict:
    rep = bounds.rate_report(spec.pair).as_dict()
    rep["closed_form"] = bounds.closed_form_rates(spec.pair).as_dict()
    return rep


def run_experiment(spec: ExperimentSpec):
    return {
        Kind.HT_SWEEP: run_ht_sweep,
        Kind.CUSUM_SWEEP: run_cusum_sweep,
        Kind.CALIBRATION: run_calibration,
        Kind.FILTER_ERROR: run_filter_error,
        Kind.BOUNDS_REPORT: run_bounds_report,
    }[spec.kind](spec)


# -- streaming -----------------------------------------------------------------


_VERDICTS = (Verdict.CONTINUE, Verdict.ACCEPT_H0, Verdict.ACCEPT_H1, Verdict.ALARM)
_VERDICT_NAMES = np.array([v.value for v in _VERDICTS], dtype=object)


class StreamDecider:
    """Sample-by-sample pipeline: high-pass, dual Kalman, LLR, decision layer.

    ``mode='sprt'`` stops at the first terminal verdict; ``mode='cusum'``
    alarms, reports the change estimate since the last reset, resets and
    carries on. Blocks of any size give the same records as one sample at a
    time.
    """

    def __init__(self, pair: HypothesisPair, mode: str, sprt: Optional[SprtConfig] = None,
                 cusum: Optional[CusumConfig] = None, alpha: Optional[float] = None):
        if mode not in ("sprt", "cusum"):
            raise ValueError("mode must be 'sprt' or 'cusum'")
        if mode == "sprt" and sprt is None:
            raise ValueError("sprt mode needs an SprtConfig")
        if mode == "cusum" and cusum is None:
            raise ValueError("cusum mode needs a CusumConfig")
        self.pair, self.mode, self.sprt, self.cusum = pair, mode, sprt, cusum
        self.filter = prefilter.HighPassState(alpha, pair.delta) if alpha is not None else None
        self.dual = kalman.DualFilter(pair)
        self.done = False
        # llr, cusum, running min of the zero-prepended LLR since the last reset, its index, n
        self._state = np.zeros(5)

    @property
    def n(self) -> int:
        return int(self._state[4])

    @property
    def llr(self) -> float:
        return float(self._state[0])

    def decide(self, block) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Arrays ``(n, llr, cusum, flag, change_estimate)`` for the consumed part of ``block``.

        Flags index ``(continue, accept_h0, accept_h1, alarm)``; estimates are
        -1 where absent.
        """
        block = np.ascontiguousarray(block, dtype=float)
        if self.done or block.size == 0:
            e = np.empty(0)
            return np.empty(0, np.int64), e, e, np.empty(0, np.int8), np.empty(0, np.int64)
        if self.filter is not None:
            self.filter, block = prefilter.apply(self.filter, block)
        dl = self.dual.increments(block)
        n0 = self.n
        llr, stat = np.empty_like(dl), np.empty_like(dl)
        flag, est = np.empty(dl.size, np.int8), np.empty(dl.size, np.int64)
        cus = self.mode == "cusum"
        a0, a1 = (self.sprt.a0, self.sprt.a1) if not cus else (0.0, 0.0)
        a = self.cusum.a if cus else 0.0
        pos = cus and self.cusum.variant is CusumVariant.POSITIVE_PART
        reset = cus and self.cusum.reset
        used = _kernels.decide_block(dl, cus, a0, a1, a, pos, reset, self._state, llr, stat, flag, est)
        if used < dl.size:
            self.done = True
        return np.arange(n0, n0 + used), llr[:used], stat[:used], flag[:used], est[:used]

    def process(self, block) -> list[DecisionRecord]:
        idx, llr, stat, flag, est = self.decide(block)
        delta = self.pair.delta
        cus = self.mode == "cusum"
        return [
            DecisionRecord(int(n), n * delta, float(l), float(c) if cus else None, _VERDICTS[f],
                           int(e) if e >= 0 else None)
            for n, l, c, f, e in zip(idx.tolist(), llr.tolist(), stat.tolist(), flag.tolist(), est.tolist())
        ]

    def format(self, block) -> list[str]:
        """JSONL lines for ``block``; same content as ``json.dumps(rec.as_dict())``."""
        idx, llr, stat, flag, est = self.decide(block)
        t = (idx * self.pair.delta).tolist()
        verdict = _VERDICT_NAMES[flag].tolist()
        if self.mode == "cusum":
            tails = ["}" if e < 0 else f',"change_estimate":{e}}}' for e in est.tolist()]
            rows = zip(idx.tolist(), t, llr.tolist(), stat.tolist(), verdict, tails)
            return list(map('{"n":%d,"t":%r,"llr":%r,"cusum":%r,"verdict":"%s"%s'.__mod__, rows))
        rows = zip(idx.tolist(), t, llr.tolist(), verdict)
        return list(map('{"n":%d,"t":%r,"llr":%r,"verdict":"%s"}'.__mod__, rows))


def _parse(buf: list[str]) -> list[Optional[float]]:
    try:
        vals = [float(s) for s in buf]
    except ValueError:
        vals = []
        for s in buf:
            try:
                vals.append(float(s))
            except ValueError:
                vals.append(None)
    return [v if v is not None and math.isfinite(v) else None for v in vals]


def stream_decide(decider: StreamDecider, lines: Iterable[str], out: TextIO, chunk: int = 8192) -> int:
    """Read one sample per line, write one JSON record per processed sample.

    Blank lines are skipped; a malformed line produces an error record and the
    stream continues. Returns the number of lines consumed as samples or errors.
    """
    buf: list[str] = []
    consumed = 0

    def flush():
        nonlocal consumed
        parts: list[str] = []
        seg: list[float] = []

        def run_segment():
            nonlocal consumed
            recs = decider.format(seg)
            consumed += len(recs)  # fewer than len(seg) once an SPRT verdict lands
            parts.extend(recs)
            seg.clear()

        for v, raw in zip(_parse(buf), buf):
            if v is None:
                if seg:
                    run_segment()
                if decider.done:
                    break
                consumed += 1
                parts.append(json.dumps({"n": decider.n, "error": f"malformed sample {raw!r}"},
                                        separators=(",", ":")))
                continue
            seg.append(v)
        if seg:
            run_segment()
        if parts:
            out.write("\n".join(parts) + "\n")
        buf.clear()

    for line in lines:
        if decider.done:
            break
        s = line.strip()
        if not s:
            continue
        buf.append(s)
        if len(buf) >= chunk:
            flush()
    if buf and not decider.done:
        flush()
    return consumed
