"""RTD pre-training on unlabeled rows then fine-tuning, against training from scratch on the labeled rows.

    python scripts/semi_supervised.py --seeds 10 --labeled 50 --unlabeled 5000
"""

import argparse

import numpy as np

from tabtransformer.experiments import semi_supervised_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--labeled", type=int, default=50)
    ap.add_argument("--unlabeled", type=int, default=5000)
    ap.add_argument("--pretrain-epochs", type=int, default=20)
    args = ap.parse_args()

    runs = []
    for seed in range(args.seeds):
        r = semi_supervised_trial(seed, args.labeled, args.unlabeled, args.pretrain_epochs)
        runs.append(r)
        print(f"seed {seed}: scratch {r.scratch_auc:.4f}  pretrained {r.pretrained_auc:.4f}  "
              f"RTD holdout acc {r.pretrain_val_acc:.3f}  {r.seconds:.0f}s", flush=True)
    scratch = np.array([r.scratch_auc for r in runs])
    tuned = np.array([r.pretrained_auc for r in runs])
    print(f"median scratch {np.median(scratch):.4f}  pretrained {np.median(tuned):.4f}  "
          f"mean gain {np.mean(tuned - scratch):+.4f}")


if __name__ == "__main__":
    main()
