"""Noise or missing-value robustness of TabTransformer against the baseline MLP.

Reports AUC on perturbed test cells normalized by each model's clean AUC.

    python scripts/robustness.py --seeds 10 --kind noise --rate 0.5
"""

import argparse

import numpy as np

from tabtransformer.experiments import robustness_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--kind", choices=["noise", "missing"], default="noise")
    ap.add_argument("--rate", type=float, default=0.5)
    ap.add_argument("--perturb-seeds", type=int, default=5)
    args = ap.parse_args()

    runs = []
    for seed in range(args.seeds):
        r = robustness_trial(seed, kind=args.kind, rate=args.rate, n_perturb=args.perturb_seeds)
        runs.append(r)
        print(f"seed {seed}: clean TT {r.tt_clean:.4f} MLP {r.mlp_clean:.4f}  normalized TT {r.tt_normalized:.4f} "
              f"MLP {r.mlp_normalized:.4f}  {r.seconds:.0f}s", flush=True)
    print(f"median normalized TT {np.median([r.tt_normalized for r in runs]):.4f}  "
          f"MLP {np.median([r.mlp_normalized for r in runs]):.4f}")


if __name__ == "__main__":
    main()
