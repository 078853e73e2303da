"""Mean detection delay and mean false-alarm time against the CUSUM threshold.

Writes ``cusum_sweep.csv`` (the harness sweep columns plus
``log_tfa_over_delta``, the natural log of the false-alarm time in samples).
"""

import csv
import math

from _common import Timer, parser, setup
from seqsense import harness


def main():
    p = parser(__doc__.splitlines()[0], 1000, 10_000)
    p.add_argument("--thresholds", type=float, nargs="+", default=[4, 6, 8, 10, 11.5, 14])
    p.add_argument("--variant", choices=("max_form", "positive_part"), default="max_form")
    p.add_argument("--fa-trace-len", type=float, default=1.0)
    args = p.parse_args()
    pair, out = setup(args)
    spec = harness.ExperimentSpec(
        "cusum_sweep", pair, n_traces=args.n_traces, trace_len=0.2, thresholds=tuple(args.thresholds),
        fa_trace_len=args.fa_trace_len, cusum_variant=args.variant, master_seed=args.seed, threads=args.threads,
    )
    with Timer():
        res = harness.run_cusum_sweep(spec)
    path = out / "cusum_sweep.csv"
    res.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    rows[0].append("log_tfa_over_delta")
    for r, row in zip(res.rows, rows[1:]):
        tfa = r.extra["mean_false_alarm_time"]
        row.append(f"{math.log(tfa / pair.delta):.10g}" if math.isfinite(tfa) else "inf")
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    print(f"wrote {path} ({len(res.rows)} rows)")


if __name__ == "__main__":
    main()
