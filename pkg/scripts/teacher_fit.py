"""Fit ELMs to LIF and ALIF teacher neurons and print held-out spike AUC.

    python scripts/teacher_fit.py --seeds 0 1 2
"""

import argparse

from elmkit.tasks import TeacherConfig, TeacherTask, alif_teacher_config, build_dataset
from elmkit.training import ModelConfig, TrainConfig, train

ARCHS = {"d_m=1, l_mlp=0": dict(d_m=1, l_mlp=0), "d_m=2": dict(d_m=2)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epochs", type=int, default=25)
    args = ap.parse_args()
    print("teacher  model            seed  test_auc  test_rmse")
    for teacher, cfg in (("lif", TeacherConfig()), ("alif", alif_teacher_config())):
        for seed in args.seeds:
            ds = build_dataset(TeacherTask(teacher=cfg), seed)
            for name, arch in ARCHS.items():
                res = train(ModelConfig(tau_s=1.0, **arch), ds,
                            TrainConfig(lr0=1e-2, batch_size=8, epochs=args.epochs, seed=seed))
                print(f"{teacher:<8} {name:<16} {seed:>4}  {res.test.auc:.4f}    {res.test.rmse:.4f}", flush=True)


if __name__ == "__main__":
    main()
