"""Held-out spike AUC against memory size d_m on the ALIF teacher.

    python scripts/capacity_sweep.py --dims 1 2 4 8 --seeds 0 1 2
"""

import argparse

import numpy as np

from elmkit.tasks import TeacherTask, alif_teacher_config, build_dataset
from elmkit.training import ModelConfig, TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=25)
    args = ap.parse_args()
    datasets = {s: build_dataset(TeacherTask(teacher=alif_teacher_config()), s) for s in args.seeds}
    print("d_m  mean_auc  sd      per-seed")
    for d in args.dims:
        aucs = [train(ModelConfig(d_m=d, tau_s=1.0), datasets[s],
                      TrainConfig(lr0=1e-2, batch_size=8, epochs=args.epochs, seed=s)).test.auc
                for s in args.seeds]
        sd = np.std(aucs, ddof=1) if len(aucs) > 1 else float("nan")
        print(f"{d:<4} {np.mean(aucs):.4f}    {sd:.4f}  {' '.join(f'{a:.3f}' for a in aucs)}", flush=True)


if __name__ == "__main__":
    main()
