#!/usr/bin/env python3
"""Merge the UCI Adult files (adult.data + adult.test) into one headered CSV.

Usage: prepare_adult.py ADULT_DATA ADULT_TEST OUT_CSV

Missing values stay as '?', which the loader treats as missing. The trailing
'.' on test-file labels is stripped so both files share one label vocabulary.
"""

import csv
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def rows(path):
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(COLUMNS):
                continue
            cells[-1] = cells[-1].rstrip(".")
            yield cells


def main(argv):
    if len(argv) != 4:
        sys.stderr.write(__doc__)
        return 2
    count = 0
    with open(argv[3], "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(COLUMNS)
        for src in argv[1:3]:
            for cells in rows(src):
                writer.writerow(cells)
                count += 1
    print(f"wrote {count} rows to {argv[3]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
