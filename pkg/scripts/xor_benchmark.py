"""Interaction benchmark: parity-XOR label over two categorical columns plus noise columns.

Prints logistic regression AUC, TabTransformer AUC and the concat-pooled
linear-probe AUC of every layer, per seed and in median.

    python scripts/xor_benchmark.py --seeds 10
"""

import argparse

import numpy as np

from tabtransformer.experiments import xor_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--noise-columns", type=int, default=5)
    ap.add_argument("--max-epochs", type=int, default=200)
    args = ap.parse_args()

    runs = []
    for seed in range(args.seeds):
        r = xor_benchmark(seed, n=args.n, n_noise=args.noise_columns, max_epochs=args.max_epochs)
        runs.append(r)
        print(f"seed {seed}: LR {r.lr_auc:.4f}  TT {r.tt_auc:.4f}  epochs {r.epochs_run}  "
              f"probe {np.round(r.probe_aucs, 4).tolist()}  {r.seconds:.0f}s", flush=True)
    probe = np.median([r.probe_aucs for r in runs], axis=0)
    print(f"median LR {np.median([r.lr_auc for r in runs]):.4f}  TT {np.median([r.tt_auc for r in runs]):.4f}")
    print(f"median probe by layer {np.round(probe, 4).tolist()}")


if __name__ == "__main__":
    main()
