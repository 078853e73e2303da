"""LLR moments and the cost of the high-pass pre-filter against record length.

Writes ``filter_error.csv``: per record length t, the per-unit-time mean
and variance of the unfiltered LLR and of the filter error
``eps = L(raw) - L(filtered)`` under h0, with standard errors and the
leading-order predictions.
"""

import math

from _common import Timer, parser, setup, write_rows
from seqsense import bounds, harness, prefilter


def main():
    p = parser(__doc__.splitlines()[0], 1000, 10_000)
    p.add_argument("--alpha", type=float, default=0.91)
    p.add_argument("--times-ms", type=float, nargs="+", default=[5, 10, 20, 40])
    args = p.parse_args()
    pair, out = setup(args)
    rho = -bounds.kl_rate(pair, 0)
    b = -math.log(args.alpha) / pair.delta
    wc = pair.h0.omega_L
    rows = []
    with Timer():
        for t_ms in args.times_ms:
            spec = harness.ExperimentSpec("filter_error", pair, n_traces=args.n_traces, trace_len=t_ms / 1e3,
                                          alpha_filter=args.alpha, master_seed=args.seed, threads=args.threads)
            m = harness.run_filter_error(spec)
            rows.append([t_ms, m.llr_mean_rate / 1e3, m.llr_mean_se / 1e3, m.llr_var_rate / 1e3,
                         m.eps_mean_rate / 1e3, m.eps_mean_se / 1e3, m.eps_var_rate / 1e3,
                         rho / 1e3, (b / wc) ** 2 * rho / 1e3])
    write_rows(out / "filter_error.csv",
               ["t_ms", "llr_mean_per_ms", "llr_mean_se", "llr_var_per_ms", "eps_mean_per_ms", "eps_mean_se",
                "eps_var_per_ms", "rho_per_ms", "eps_mean_leading_per_ms"], rows)


if __name__ == "__main__":
    main()
