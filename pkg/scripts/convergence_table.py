"""Convergence of the HMM estimates in p for several truncations.

    python scripts/convergence_table.py --M 2 3 4 --p 3 6 --seeds 8 -o results/convergence.csv
"""

import argparse
import logging
from pathlib import Path

from spdehmm.harness import ConvergenceTable, convergence_sweep
from spdehmm.spectral import burgers_model


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--M", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--p", type=int, nargs=2, default=[1, 5], metavar=("PMIN", "PMAX"))
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--X0", type=float, default=0.5)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("-o", "--output", type=Path, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)

    rows = []
    for M in args.M:
        tab = convergence_sweep(burgers_model(M), M, range(args.p[0], args.p[1] + 1),
                                n_seeds=args.seeds, seed=args.seed, X0=args.X0, workers=args.workers)
        print(f"M={M}: log2 slope over stable rows {tab.slope():.3f}")
        rows.extend(tab.rows)
    text = ConvergenceTable(rows, {"seed": args.seed}).to_csv()
    if args.output:
        args.output.parent.mkdir(parents=True, exist_ok=True)
        args.output.write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
