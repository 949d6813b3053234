"""Regenerate src/forksim/data/duncan_alpha05.csv.

Duncan's significant studentized range for span p at level alpha is the
studentized-range quantile at the protection level (1 - alpha)**(p - 1):

    r(p, df) = Q^{-1}((1 - alpha)**(p - 1); p, df)

Values are rounded to 4 decimals. A running maximum over p is applied so
the ranges never shrink with the span, which is how the published tables
are laid out.
"""

import argparse
import csv
from pathlib import Path

import numpy as np
from scipy.stats import studentized_range

SPANS = range(2, 21)
DFS = range(1, 121)


def duncan_row(df, alpha):
    vals = [studentized_range.ppf((1 - alpha) ** (p - 1), p, df) for p in SPANS]
    return np.maximum.accumulate(np.round(vals, 4))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--out", type=Path,
                    default=Path(__file__).resolve().parents[1] / "src/forksim/data/duncan_alpha05.csv")
    args = ap.parse_args()
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["df"] + [f"p{p}" for p in SPANS])
        for df in DFS:
            w.writerow([df] + [f"{v:.4f}" for v in duncan_row(df, args.alpha)])
            print(f"df={df}", flush=True)


if __name__ == "__main__":
    main()
