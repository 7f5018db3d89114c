#!/usr/bin/env python3
"""Map the characteristic-root regimes of the 1D constant-coefficient
recurrence across stabilizer settings.

For each (sigma, eps, gamma, p, h) combination the script prints the
normalized ratio (4a - 2h)/b, the discriminant-based regime, the cheap
ratio heuristic, and the roots themselves, then flags any rows where
the two classifications disagree (they genuinely can near the
heuristic's thresholds).
"""

import argparse
import csv
import itertools
import sys

import numpy as np

from momentfd.analysis import characteristic_regime


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", help="CSV path (default: stdout)")
    parser.add_argument(
        "--h",
        default="0.1,0.02,0.004",
        help="comma-separated mesh sizes to sweep",
    )
    args = parser.parse_args(argv)

    hs = [float(tok) for tok in args.h.split(",")]
    sigmas = [0.0, 1.0, 4.0, 9.0]
    epss = [0.0, 1e-3, 1e-1]
    gammas = [0.0, 0.01, 1.0, 4.0]
    ps = [0.0, 0.5, 1.0]

    fh = open(args.out, "w") if args.out else sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["sigma", "eps", "gamma", "p", "h", "ratio", "regime", "by_ratio", "roots"]
    )
    disagreements = 0
    for sigma, eps, gamma, p, h in itertools.product(sigmas, epss, gammas, ps, hs):
        reg = characteristic_regime(sigma, eps, gamma, p, h)
        roots = ";".join(
            "nan" if np.isnan(r.real) else f"{r.real:.6g}{r.imag:+.6g}j"
            for r in reg.roots
        )
        writer.writerow(
            [
                f"{sigma:g}",
                f"{eps:g}",
                f"{gamma:g}",
                f"{p:g}",
                f"{h:g}",
                f"{reg.ratio:.6g}",
                reg.regime.value,
                reg.by_ratio.value,
                roots,
            ]
        )
        if reg.regime is not reg.by_ratio:
            disagreements += 1
    if args.out:
        fh.close()
    print(
        f"{disagreements} rows where the ratio heuristic disagrees with the "
        "discriminant",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
