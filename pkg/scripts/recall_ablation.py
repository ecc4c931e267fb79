"""Delayed recall (delay 1000 steps) with short vs long memory-timescale bounds.

    python scripts/recall_ablation.py --seeds 0 1 2
"""

import argparse

import numpy as np

from elmkit.tasks import RecallTask, build_dataset
from elmkit.training import ModelConfig, TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--bounds", type=float, nargs="+", default=[10.0, 1e4], help="upper tau_m bounds (ms)")
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()
    for hi in args.bounds:
        accs = []
        for seed in args.seeds:
            ds = build_dataset(RecallTask(), seed)
            model = ModelConfig(d_m=8, tau_bounds=(1.0, hi), tau_init=(1.0, hi), tau_s=50.0)
            res = train(model, ds, TrainConfig(lr0=1e-2, batch_size=32, epochs=args.epochs, seed=seed))
            accs.append(res.test.accuracy)
            print(f"bounds [1, {hi:g}] seed {seed}: test accuracy {res.test.accuracy:.3f}", flush=True)
        print(f"bounds [1, {hi:g}] mean {np.mean(accs):.3f} (chance 0.25)")


if __name__ == "__main__":
    main()
