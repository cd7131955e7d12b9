"""Prepare a seven-sector CO2 emissions table for ``smsnmix fit``.

The emissions data are not bundled.  Expected layout of the prepared CSV:
one row per country, a header row, and seven numeric columns (Mt of fossil
CO2, one year), in this order:

    X1  Main activity electricity and heat production
    X2  Manufacturing industries and construction
    X3  Road transportation no resuspension
    X4  Residential and other sectors
    X5  Oil and natural gas
    X6  Lime production
    X7  Metal industry

Sectors a country does not report are left empty.  Values are strictly
positive, so the table can be fitted with ``--log-transform``.

Usage
-----
From a long export with columns ``country,sector,value``::

    python demos/prepare_edgar.py --long export.csv --output edgar.csv

Without the data, write a synthetic stand-in with the same shape and the
same per-sector missingness (208 countries, 175 of them incomplete)::

    python demos/prepare_edgar.py --synthetic --output edgar_synthetic.csv
"""

import argparse
import csv
import sys

import numpy as np

SECTORS = (
    "Main activity electricity and heat production",
    "Manufacturing industries and construction",
    "Road transportation no resuspension",
    "Residential and other sectors",
    "Oil and natural gas",
    "Lime production",
    "Metal industry",
)
COLUMNS = tuple(f"X{j + 1}" for j in range(len(SECTORS)))

# rows missing per sector out of 208, and the number of incomplete rows
N_ROWS = 208
MISSING_COUNTS = (1, 1, 0, 1, 125, 115, 138)
N_INCOMPLETE = 175
# rough per-sector medians (Mt) so the synthetic values have sensible scales
MEDIANS = (10.0, 6.0, 40.0, 3.0, 4.0, 0.001, 60.0)


def synthetic(seed=0):
    """Lognormal table with the published per-sector missing counts."""
    rng = np.random.default_rng(seed)
    X = np.exp(np.log(MEDIANS) + rng.normal(scale=1.8, size=(N_ROWS, len(SECTORS))))
    incomplete = rng.choice(N_ROWS, N_INCOMPLETE, replace=False)
    miss = np.zeros(X.shape, dtype=bool)
    # metal industry first, oil and gas covers the remaining incomplete rows
    metal = rng.choice(incomplete, MISSING_COUNTS[6], replace=False)
    rest = np.setdiff1d(incomplete, metal)
    oil = np.concatenate([rest, rng.choice(metal, MISSING_COUNTS[4] - rest.size, replace=False)])
    lime = rng.choice(incomplete, MISSING_COUNTS[5], replace=False)
    miss[metal, 6] = miss[oil, 4] = miss[lime, 5] = True
    for j in (0, 1, 3):
        miss[rng.choice(incomplete, MISSING_COUNTS[j], replace=False), j] = True
    X[miss] = np.nan
    return X


def from_long(path):
    """Pivot ``country,sector,value`` rows into the seven-column layout."""
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["sector"] not in SECTORS:
                continue
            table.setdefault(row["country"], {})[row["sector"]] = float(row["value"])
    countries = sorted(table)
    X = np.array([[table[c].get(s, np.nan) for s in SECTORS] for c in countries])
    X[X <= 0] = np.nan
    return X


def write(path, X):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in X:
            w.writerow(["" if np.isnan(v) else "%.17g" % v for v in row])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--long", help="long-format export with country,sector,value")
    src.add_argument("--synthetic", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output", required=True)
    args = ap.parse_args(argv)
    X = synthetic(args.seed) if args.synthetic else from_long(args.long)
    write(args.output, X)
    rates = np.isnan(X).mean(axis=0) * 100
    for name, r in zip(COLUMNS, rates):
        print(f"{name}  {r:5.2f}% missing")
    print(f"{np.isnan(X).any(axis=1).mean() * 100:.2f}% of rows incomplete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
