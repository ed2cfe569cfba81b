"""Default TabTransformer and baseline MLP on the income CSV (65/15/20 split).

    python scripts/income.py path/to/income.csv --target income
"""

import argparse

from tabtransformer.experiments import INCOME_TARGET, income_reproduction


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--target", default=INCOME_TARGET)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    r = income_reproduction(args.csv, seed=args.seed, target=args.target)
    print(f"TabTransformer test AUC {r.tt_auc:.4f} ({r.tt_epochs} epochs)")
    print(f"baseline MLP   test AUC {r.mlp_auc:.4f} ({r.mlp_epochs} epochs)")
    print(f"{r.seconds:.0f}s")


if __name__ == "__main__":
    main()
