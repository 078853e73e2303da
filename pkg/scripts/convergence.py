"""Finite-record corrections to the LLR cumulants from the dense Toeplitz oracle.

Writes ``convergence.csv``: record length against the exact first and
second cumulants and their residuals after removing the asymptotic
linear growth.
"""

from _common import Timer, parser, setup, write_rows
from seqsense import oracle


def main():
    p = parser(__doc__.splitlines()[0], 1, 1)
    p.add_argument("--n-grid", type=int, nargs="+", default=[250, 500, 1000, 1500, 2000])
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=0)
    args = p.parse_args()
    pair, out = setup(args)
    with Timer():
        reps = [oracle.toeplitz_convergence_report(pair, args.hypothesis, m, args.n_grid) for m in (1, 2)]
    rows = [[n, reps[0].cumulant[i], reps[0].residual[i], reps[1].cumulant[i], reps[1].residual[i]]
            for i, n in enumerate(args.n_grid)]
    write_rows(out / "convergence.csv", ["n", "kappa1", "kappa1_residual", "kappa2", "kappa2_residual"], rows)


if __name__ == "__main__":
    main()
