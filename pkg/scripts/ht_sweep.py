"""Sequential versus fixed-duration hypothesis testing.

Writes ``ht_sweep.csv``: one row per SPRT threshold (error against mean
stopping time) and one per fixed duration (error against that duration).
"""

import numpy as np

from _common import Timer, parser, setup
from seqsense import harness


def main():
    p = parser(__doc__.splitlines()[0], 1000, 10_000)
    p.add_argument("--trace-len", type=float, default=0.2, help="cap on record length (s)")
    p.add_argument("--no-filter", action="store_true")
    args = p.parse_args()
    pair, out = setup(args)
    spec = harness.ExperimentSpec(
        "ht_sweep", pair, n_traces=args.n_traces, trace_len=args.trace_len,
        thresholds=tuple(np.arange(1.0, 9.01, 0.5)), fixed_times=tuple(np.arange(0.005, 0.2001, 0.005)),
        alpha_filter=None if args.no_filter else 0.91, master_seed=args.seed, threads=args.threads,
    )
    with Timer():
        res = harness.run_ht_sweep(spec)
    res.to_csv(out / "ht_sweep.csv")
    print(f"wrote {out / 'ht_sweep.csv'} ({len(res.rows)} rows)")


if __name__ == "__main__":
    main()
