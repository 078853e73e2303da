"""Command-line entry point: ``seqsense <subcommand> [options]``.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for numeric
failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bounds, harness, kalman, oracle, prefilter, sequential, spectral
from .model import TWO_PI, ConfigError, HypothesisPair, load_pair, reference_pair
from .sequential import CusumConfig, CusumVariant, SprtConfig, Verdict
from .simulate import Trace, load_trace, save_trace, simulate, simulate_fluctuating_gamma, simulate_with_change

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
TRACE_SUFFIXES = (".f64", ".bin", ".csv")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="hypothesis-pair JSON (default: the reference pair)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for campaigns")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output path (default: stdout where sensible)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="seqsense", parents=[common],
                                 description="Sequential tests and change detection for spin-noise records.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a photocurrent record")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=0)
    p.add_argument("--nu", type=int, default=None, help="switch from h0 to h1 at this sample")
    p.add_argument("--sigma-dgamma-hz", type=float, default=None, help="per-trace relaxation-rate spread (Hz)")

    p = sub.add_parser("filter", parents=[common], help="apply the causal high-pass filter")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--in", dest="inp", required=True)

    p = sub.add_parser("llr", parents=[common], help="per-sample LLR table k,t,dL,L")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--alpha", type=float, default=None, help="pre-filter the record first")

    for name, hlp in (("sprt", "two-sided sequential test"), ("cusum", "CUSUM change detection")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--in", dest="inp", default=None, help="trace file; omit to stream samples from stdin")
        p.add_argument("--alpha", type=float, default=None, help="pre-filter coefficient")
        _decision_args(p, name)

    p = sub.add_parser("stream", parents=[common], help="JSONL decisions for samples on stdin")
    p.add_argument("--mode", choices=("sprt", "cusum"), default=None)
    p.add_argument("--alpha", type=float, default=None)
    _decision_args(p, "sprt")
    _decision_args(p, "cusum")

    p = sub.add_parser("estimate", parents=[common], help="joint Whittle fit of two record sets")
    p.add_argument("--band-hz", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    p.add_argument("--in0", required=True, help="directory of h0 records")
    p.add_argument("--in1", required=True, help="directory of h1 records")
    p.add_argument("--restarts", type=int, default=3)

    p = sub.add_parser("oracle", parents=[common], help="dense Toeplitz cross-checks")
    p.add_argument("--in", dest="inp", default=None, help="record to score exactly (at most 4096 samples)")
    p.add_argument("--n-grid", type=int, nargs="+", default=None, help="cumulant convergence sizes")
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=0)
    p.add_argument("--order", type=int, choices=(1, 2), default=1)

    p = sub.add_parser("bounds", parents=[common], help="asymptotic rate constants")
    p.add_argument("action", nargs="?", choices=("rates", "ratio-map"), default="rates")
    p.add_argument("--grid", type=int, default=50, help="ratio-map points per axis over (0, 10]")
    p.add_argument("--max", dest="cmax", type=float, default=10.0)

    p = sub.add_parser("experiment", parents=[common], help="Monte Carlo campaigns")
    p.add_argument("--kind", choices=[k.value for k in harness.Kind], required=True)
    p.add_argument("--n-traces", type=int, default=1000)
    p.add_argument("--trace-len", type=float, default=0.04, help="seconds")
    p.add_argument("--thresholds", type=float, nargs="+", default=())
    p.add_argument("--fixed-times", type=float, nargs="+", default=(), help="seconds")
    p.add_argument("--change-time", type=float, default=0.0, help="seconds")
    p.add_argument("--fa-trace-len", type=float, default=1.0, help="seconds")
    p.add_argument("--alpha", type=float, default=0.91)
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--n-batches", type=int, default=100)
    p.add_argument("--variant", choices=("max", "positive"), default="max")
    return ap


def _decision_args(p: argparse.ArgumentParser, kind: str) -> None:
    if kind == "sprt":
        p.add_argument("--eps", type=float, default=None, help="symmetric error target")
        p.add_argument("--eps0", type=float, default=None)
        p.add_argument("--eps1", type=float, default=None)
        p.add_argument("--pi0", type=float, default=0.5)
    else:
        p.add_argument("--tfa", type=float, default=None, help="target mean false-alarm time (s)")
        p.add_argument("--threshold", type=float, default=None, help="explicit threshold (nats)")
        p.add_argument("--variant", choices=("max", "positive"), default="max")
        p.add_argument("--no-reset", action="store_true")


def _opt(ns, name, default=None):
    return getattr(ns, name, default)


def _pair(ns) -> HypothesisPair:
    cfg = _opt(ns, "config")
    return load_pair(cfg) if cfg else reference_pair()


def _config_dict(ns) -> dict:
    cfg = _opt(ns, "config")
    if not cfg:
        return {}
    try:
        return json.loads(Path(cfg).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {cfg}: {exc}") from None


def _read_trace(path: str, pair: Optional[HypothesisPair] = None) -> Trace:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no such trace file: {path}")
    delta = pair.delta if pair is not None and p.suffix.lower() != ".csv" and not Path(str(p) + ".json").exists() else None
    return load_trace(p, delta)


def _emit(ns, text: str) -> None:
    out = _opt(ns, "out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _variant(name: str) -> CusumVariant:
    aliases = {"max": CusumVariant.MAX_FORM, "positive": CusumVariant.POSITIVE_PART}
    try:
        return aliases[name] if name in aliases else CusumVariant(name)
    except ValueError:
        raise ConfigError(f"unknown CUSUM variant {name!r}") from None


def _sprt_cfg(ns, cfg: dict) -> SprtConfig:
    eps = ns.eps if ns.eps is not None else cfg.get("eps")
    e0 = ns.eps0 if ns.eps0 is not None else cfg.get("eps0", eps)
    e1 = ns.eps1 if ns.eps1 is not None else cfg.get("eps1", eps)
    if e0 is None or e1 is None:
        raise ConfigError("SPRT needs --eps or both --eps0 and --eps1")
    return SprtConfig(float(e0), float(e1), float(cfg.get("pi0", ns.pi0)))


def _cusum_cfg(ns, cfg: dict, delta: float) -> CusumConfig:
    a = ns.threshold if ns.threshold is not None else cfg.get("threshold")
    tfa = ns.tfa if ns.tfa is not None else cfg.get("tfa")
    if a is None and tfa is None:
        raise ConfigError("CUSUM needs --tfa or --threshold")
    variant = _variant(cfg.get("variant", ns.variant))
    return CusumConfig(a=None if a is None else float(a), variant=variant,
                       t_fa_target=None if tfa is None else float(tfa), delta=delta, reset=not ns.no_reset)


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(ns) -> int:
    pair = _pair(ns)
    seed = _opt(ns, "seed", 0)
    out = _opt(ns, "out")
    if not out:
        raise ConfigError("simulate needs --out")
    if ns.nu is not None:
        tr = simulate_with_change(pair, ns.n, ns.nu, seed)
    elif ns.sigma_dgamma_hz is not None:
        tr = simulate_fluctuating_gamma(pair[ns.hypothesis], ns.n, TWO_PI * ns.sigma_dgamma_hz, seed)
    else:
        tr = simulate(pair[ns.hypothesis], ns.n, seed, label=f"h{ns.hypothesis}")
    save_trace(tr, out)
    return EXIT_OK


def cmd_filter(ns) -> int:
    out = _opt(ns, "out")
    if not out:
        raise ConfigError("filter needs --out")
    tr = _read_trace(ns.inp, _pair(ns) if _opt(ns, "config") else None)
    save_trace(tr.with_samples(prefilter.highpass(tr.samples, ns.alpha)), out)
    return EXIT_OK


def _llr_of_file(ns, pair: HypothesisPair) -> tuple[Trace, np.ndarray, np.ndarray]:
    tr = _read_trace(ns.inp, pair)
    if ns.alpha is not None:
        tr = tr.with_samples(prefilter.highpass(tr.samples, ns.alpha))
    dl, L = kalman.run_dual(pair, tr)
    return tr, dl, L


def cmd_llr(ns) -> int:
    pair = _pair(ns)
    tr, dl, L = _llr_of_file(ns, pair)
    k = np.arange(dl.size)
    table = np.column_stack([k, k * tr.delta, dl, L])
    lines = ["k,t,dL,L"] + [f"{int(r[0])},{r[1]!r},{r[2]!r},{r[3]!r}" for r in table.tolist()]
    _emit(ns, "\n".join(lines) + "\n")
    return EXIT_OK


def _stream(ns, pair: HypothesisPair, mode: str, cfg: dict) -> int:
    alpha = ns.alpha if ns.alpha is not None else cfg.get("alpha")
    if mode == "sprt":
        decider = harness.StreamDecider(pair, "sprt", sprt=_sprt_cfg(ns, cfg), alpha=alpha)
    else:
        decider = harness.StreamDecider(pair, "cusum", cusum=_cusum_cfg(ns, cfg, pair.delta), alpha=alpha)
    out = _opt(ns, "out")
    if out:
        with open(out, "w") as fh:
            harness.stream_decide(decider, sys.stdin, fh)
    else:
        harness.stream_decide(decider, sys.stdin, sys.stdout)
        sys.stdout.flush()
    return EXIT_OK


def cmd_sprt(ns) -> int:
    pair, cfg = _pair(ns), _config_dict(ns)
    if ns.inp is None:
        return _stream(ns, pair, "sprt", cfg)
    sc = _sprt_cfg(ns, cfg)
    tr, dl, L = _llr_of_file(ns, pair)
    hit = np.flatnonzero((L >= sc.a1) | (L <= -sc.a0))
    rec = {"a0": sc.a0, "a1": sc.a1, "n_samples": int(L.size)}
    if hit.size:
        k = int(hit[0])
        rec.update(verdict=sequential.sprt_step(sc, L[k]).value, n=k, t=(k + 1) * tr.delta, llr=float(L[k]))
    else:
        rec.update(verdict=Verdict.CONTINUE.value, llr=float(L[-1]) if L.size else 0.0)
    _emit(ns, json.dumps(rec) + "\n")
    return EXIT_OK


def cmd_cusum(ns) -> int:
    pair, cfg = _pair(ns), _config_dict(ns)
    if ns.inp is None:
        return _stream(ns, pair, "cusum", cfg)
    cc = _cusum_cfg(ns, cfg, pair.delta)
    tr, dl, L = _llr_of_file(ns, pair)
    if cc.reset:
        alarms = sequential.cusum_alarm_indices(dl, cc.a, cc.variant)
    else:
        first = sequential.cusum_alarm_indices(dl, cc.a, cc.variant)[:1]
        alarms = first
    recs = []
    start = 0
    for k in alarms:
        seg = np.cumsum(dl[start : k + 1])
        recs.append({"n": int(k), "t": k * tr.delta, "change_estimate": start + sequential.change_point_estimate(seg)})
        start = k + 1
    rec = {"threshold": cc.a, "variant": cc.variant.value, "n_samples": int(dl.size), "alarms": recs}
    _emit(ns, json.dumps(rec) + "\n")
    return EXIT_OK


def cmd_stream(ns) -> int:
    pair, cfg = _pair(ns), _config_dict(ns)
    mode = ns.mode or cfg.get("mode")
    if mode not in ("sprt", "cusum"):
        raise ConfigError("stream needs a mode (sprt or cusum) on the command line or in the config")
    return _stream(ns, pair, mode, cfg)


def _load_dir(path: str, pair: HypothesisPair) -> np.ndarray:
    d = Path(path)
    if not d.is_dir():
        raise ConfigError(f"not a directory: {path}")
    files = sorted(f for f in d.iterdir() if f.suffix.lower() in TRACE_SUFFIXES)
    if not files:
        raise ConfigError(f"no trace files in {path}")
    traces = [_read_trace(str(f), pair) for f in files]
    if len({len(t) for t in traces}) != 1:
        raise ConfigError(f"records in {path} differ in length")
    if any(abs(t.delta - pair.delta) > 1e-12 * pair.delta for t in traces):
        raise ConfigError(f"records in {path} do not match the configured sampling period")
    return np.stack([t.samples for t in traces])


def cmd_estimate(ns) -> int:
    pair = _pair(ns)
    lo, hi = sorted(ns.band_hz)
    band = (TWO_PI * lo, TWO_PI * hi)
    pg0 = spectral.periodogram(_load_dir(ns.in0, pair), pair.delta)
    pg1 = spectral.periodogram(_load_dir(ns.in1, pair), pair.delta)
    fit = spectral.mle_fit(pg0, pg1, spectral.theta_from_pair(pair), band,
                           restarts=ns.restarts, seed=_opt(ns, "seed", 0))
    rec = fit.as_dict()
    rec["band_hz"] = [lo, hi]
    rec["n_traces"] = [pg0.navg, pg1.navg]
    _emit(ns, json.dumps(rec, indent=2) + "\n")
    return EXIT_OK


def cmd_oracle(ns) -> int:
    pair = _pair(ns)
    rec = {}
    if ns.inp is not None:
        tr = _read_trace(ns.inp, pair)
        ex = oracle.exact_llr(pair, tr)
        kf = float(np.sum(kalman.llr_increments(pair, tr.samples)))
        rec["llr"] = {"exact": ex, "kalman": kf, "rel_err": abs(kf - ex) / max(abs(ex), 1e-300)}
    if ns.n_grid:
        rep = oracle.toeplitz_convergence_report(pair, ns.hypothesis, ns.order, ns.n_grid)
        rec["convergence"] = {
            "n": [int(v) for v in rep.n], "cumulant": [float(v) for v in rep.cumulant],
            "residual": [float(v) for v in rep.residual], "rate": rep.rate,
            "top_octave_variation": rep.top_octave_variation(),
        }
    if not rec:
        raise ConfigError("oracle needs --in and/or --n-grid")
    _emit(ns, json.dumps(rec, indent=2) + "\n")
    return EXIT_OK


def cmd_bounds(ns) -> int:
    if ns.action == "ratio-map":
        if ns.grid < 1 or ns.cmax <= 0:
            raise ConfigError("grid must be positive")
        g = np.linspace(ns.cmax / ns.grid, ns.cmax, ns.grid)
        r = bounds.ratio_map(g, g)
        lines = ["c_a,c_b,ratio"] + [f"{a!r},{b!r},{float(r[i, j])!r}" for i, a in enumerate(g.tolist()) for j, b in enumerate(g.tolist())]
        _emit(ns, "\n".join(lines) + "\n")
        return EXIT_OK
    pair = _pair(ns)
    spec = harness.ExperimentSpec(harness.Kind.BOUNDS_REPORT, pair)
    _emit(ns, json.dumps(harness.run_bounds_report(spec), indent=2) + "\n")
    return EXIT_OK


def cmd_experiment(ns) -> int:
    pair = _pair(ns)
    try:
        spec = harness.ExperimentSpec(
            ns.kind, pair, n_traces=ns.n_traces, trace_len=ns.trace_len, thresholds=tuple(ns.thresholds),
            alpha_filter=None if ns.no_filter else ns.alpha, master_seed=_opt(ns, "seed", 0),
            fixed_times=tuple(ns.fixed_times), change_time=ns.change_time, fa_trace_len=ns.fa_trace_len,
            cusum_variant=_variant(ns.variant), n_batches=ns.n_batches, threads=_opt(ns, "threads", 1),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = harness.run_experiment(spec)
    out = _opt(ns, "out")
    if isinstance(res, harness.SweepResult):
        res.to_csv(out or sys.stdout)
        return EXIT_OK
    if isinstance(res, harness.CalibrationResult):
        rec = {"theta_true": res.theta_true.tolist(), "crb_sigma": res.crb_sigma.tolist(),
               "mse_over_crb": res.mse_over_crb.tolist(), "nonconverged_rate": res.nonconverged_rate,
               "flagged": res.flagged}
    elif isinstance(res, harness.MomentResult):
        rec = {k: float(v) for k, v in vars(res).items()}
    else:
        rec = res
    _emit(ns, json.dumps(rec, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "filter": cmd_filter, "llr": cmd_llr, "sprt": cmd_sprt, "cusum": cmd_cusum,
    "stream": cmd_stream, "estimate": cmd_estimate, "oracle": cmd_oracle, "bounds": cmd_bounds,
    "experiment": cmd_experiment,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return COMMANDS[ns.command](ns)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"seqsense: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (oracle.NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"seqsense: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
