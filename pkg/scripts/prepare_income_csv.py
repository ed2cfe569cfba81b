"""Write the UCI Adult training file as a headed CSV usable by ``scripts/income.py``.

The raw ``adult.data`` file has no header and pads cells with a space; this
adds the column names and strips the padding.

    python scripts/prepare_income_csv.py adult.data income.csv
"""

import argparse
import csv

COLUMNS = ["age", "workclass", "fnlwgt", "education", "education_num", "marital_status", "occupation",
           "relationship", "race", "sex", "capital_gain", "capital_loss", "hours_per_week", "native_country",
           "income"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("dest")
    args = ap.parse_args()

    n = 0
    with open(args.source, newline="") as src, open(args.dest, "w", newline="") as dst:
        out = csv.writer(dst, lineterminator="\n")
        out.writerow(COLUMNS)
        for row in csv.reader(src):
            if len(row) != len(COLUMNS):
                continue  # blank trailing lines
            out.writerow([c.strip() for c in row])
            n += 1
    print(f"wrote {n} rows to {args.dest}")


if __name__ == "__main__":
    main()
