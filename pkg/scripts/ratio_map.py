"""Leading-order ratio of sequential to fixed-sample rates over the reduced parameter plane.

Writes ``ratio_map.csv`` with columns ``c_a`` (line splitting over
linewidth), ``c_b`` (atomic over shot-noise level) and the ratio, plus
``local_limit.csv`` for a shrinking Larmor-frequency split.
"""

import numpy as np

from _common import parser, setup, write_rows
from seqsense import bounds


def main():
    p = parser(__doc__.splitlines()[0], 1, 1)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--max", type=float, default=10.0)
    args = p.parse_args()
    pair, out = setup(args)
    g = np.linspace(args.max / args.grid, args.max, args.grid)
    r = bounds.ratio_map(g, g)
    write_rows(out / "ratio_map.csv", ["c_a", "c_b", "ratio"],
               [[float(a), float(b), float(r[i, j])] for i, a in enumerate(g) for j, b in enumerate(g)])
    print(f"minimum ratio {r.min():.6f}")
    steps = pair.h0.gamma * np.array([2.0, 1.0, 0.5, 0.25, 0.125])
    rows = bounds.local_limit_check(pair.h0, [0.0, 1.0, 0.0, 0.0], steps)
    write_rows(out / "local_limit.csv", ["delta_omega", "rho_seq", "rho_det", "ratio", "fisher_ratio"],
               [[x.delta_theta, x.rho_seq, x.rho_det, x.ratio, x.fisher_ratio] for x in rows])


if __name__ == "__main__":
    main()
