"""Command-line entry point: gen, train, eval, gradcheck, sweep.

Runs are driven by a JSON config with up to four blocks::

    {
      "seed": 0,
      "task":  {"kind": "teacher", "teacher": {"kind": "lif"}, "train_ms": 100000},
      "model": {"kind": "elm", "d_m": 2},
      "train": {"lr0": 0.01, "epochs": 25},
      "sweep": {"axis": "d_m", "values": [1, 2, 4], "repeats": 3}
    }

Unspecified keys take the dataclass defaults; unknown keys are rejected.
The config file is copied verbatim into every output directory.

Exit codes: 0 success, 2 config error, 3 divergence, 4 gradcheck failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import shutil
import sys
import warnings
from pathlib import Path

import numpy as np

from .bptt.gradcheck import DEFAULT_SIZES, KINDS, grad_check
from .tasks import TeacherConfig, alif_teacher_config, build_dataset, read_dataset, summarize, write_dataset
from .tasks.datasets import PAIRS, TASKS
from .training import ModelConfig, TrainConfig, evaluate, load_checkpoint, train
from .training.loop import output_width
from .training.metrics import DEFAULT_FPRS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_GRADCHECK = 4

TOP_KEYS = {"seed", "task", "model", "train", "sweep", "data"}
SWEEP_KEYS = {"axis", "values", "repeats"}
# sweep axis -> (config block, field)
SWEEP_AXES = {
    "d_m": ("model", "d_m"),
    "l_mlp": ("model", "l_mlp"),
    "lam": ("model", "lam"),
    "tau_bounds": ("model", "tau_bounds"),
    "tau_init": ("model", "tau_init"),
    "d_tree": ("model", "d_tree"),
    "d_brch": ("model", "d_brch"),
    "bin_ms": ("task", "bin_ms"),
}
GRADCHECK_TOL = {"smooth": 1e-8, "default": 1e-4}


class ConfigError(ValueError):
    pass


# ---- config -----------------------------------------------------------------

def _build(cls, block: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(block) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def parse_task(block: dict):
    block = dict(block)
    kind = block.pop("kind", "teacher")
    if kind not in TASKS:
        raise ConfigError(f"unknown task kind {kind!r}; expected one of {sorted(TASKS)}")
    if kind == "teacher":
        tb = dict(block.pop("teacher", {}))
        # an ALIF teacher starts from its own calibration
        base = alif_teacher_config().to_dict() if tb.get("kind") == "alif" else {}
        block["teacher"] = _build(TeacherConfig, {**base, **tb}, "task.teacher")
    return _build(TASKS[kind], block, f"task ({kind})")


def load_config(path: Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sweep = raw.get("sweep", {})
    if set(sweep) - SWEEP_KEYS:
        raise ConfigError(f"unknown key(s) in sweep: {', '.join(sorted(set(sweep) - SWEEP_KEYS))}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return {
        "raw": raw,
        "seed": seed,
        "task": parse_task(raw.get("task", {})),
        "model": _build(ModelConfig, raw.get("model", {}), "model"),
        "train": _build(TrainConfig, {**raw.get("train", {}), "seed": seed}, "train"),
        "sweep": sweep,
        "data": raw.get("data"),
    }


def check_shapes(model: ModelConfig, ds) -> None:
    """Refuse model/dataset combinations that cannot be wired together."""
    if model.kind in ("lif", "alif") and ds.layout != PAIRS:
        raise ConfigError(f"{model.kind} models only fit the teacher task")
    if model.kind == "branch_elm":
        if model.d_brch > ds.meta["channels"]:
            raise ConfigError(f"d_brch={model.d_brch} exceeds the {ds.meta['channels']} input channels")
    if model.kind == "snn" and model.n_total <= output_width(ds):
        raise ConfigError("snn n_total must exceed the number of outputs")


def _prepare_out(out: Path, force: bool) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"output directory {out} is not empty (use --force)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_for(cfg: dict, config_path: Path):
    if cfg["data"]:
        path = Path(cfg["data"])
        if not path.is_absolute():
            path = Path(config_path).parent / path
        try:
            return read_dataset(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    return build_dataset(cfg["task"], cfg["seed"])


def _with_seed(args, cfg):
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["train"] = dataclasses.replace(cfg["train"], seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg["train"] = dataclasses.replace(cfg["train"], epochs=args.epochs)
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# ---- commands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _with_seed(args, load_config(args.config))
    out = _prepare_out(args.out, args.force)
    ds = build_dataset(cfg["task"], cfg["seed"])
    write_dataset(ds, out)
    shutil.copyfile(args.config, out / "config.json")
    print(_dump(summarize(ds)))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _with_seed(args, load_config(args.config))
    ds = _dataset_for(cfg, args.config)
    check_shapes(cfg["model"], ds)
    out = _prepare_out(args.out, args.force)
    shutil.copyfile(args.config, out / "config.json")
    res = train(cfg["model"], ds, cfg["train"], out=out, threads=args.threads,
                log=None if args.quiet else lambda m: print(m, file=sys.stderr))
    summary = {"best_epoch": res.best_epoch, "divergent": res.divergent, "val": res.val.to_dict(),
               "test": None if res.test is None else res.test.to_dict()}
    print(_dump(summary))
    return EXIT_DIVERGED if res.divergent else EXIT_OK


def format_tpr_table(tpr: dict) -> str:
    lines = ["fpr       tpr"]
    lines += [f"{float(f):<9g} {v:.4f}" for f, v in sorted(tpr.items(), key=lambda kv: float(kv[0]))]
    return "\n".join(lines)


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    try:
        params, model_cfg, train_cfg, meta = load_checkpoint(ckpt)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load checkpoint {ckpt}: {exc}") from exc
    if args.data:
        try:
            ds = read_dataset(args.data)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read dataset {args.data}: {exc}") from exc
    else:
        cfg = load_config(ckpt / "config.json")
        cfg = _with_seed(argparse.Namespace(seed=train_cfg.seed), cfg)
        ds = _dataset_for(cfg, ckpt / "config.json")
    if ds.digest() != meta["dataset_digest"]:
        warnings.warn(f"dataset digest {ds.digest()} differs from the checkpoint's "
                      f"{meta['dataset_digest']}; metrics may not be comparable", stacklevel=1)
    shapes = meta["shapes"]
    if shapes["d_in"] != ds.inputs.shape[2] or shapes["d_o"] != output_width(ds):
        raise ConfigError(f"checkpoint expects d_in={shapes['d_in']}, d_o={shapes['d_o']}; dataset has "
                          f"d_in={ds.inputs.shape[2]}, d_o={output_width(ds)}")
    report = evaluate(params, ds, args.split, train_cfg, fprs=DEFAULT_FPRS)
    result = {"split": args.split, "epoch": meta["epoch"], **report.to_dict()}
    print(_dump(result))
    if report.tpr_at_fpr:
        print(format_tpr_table(report.tpr_at_fpr))
    if args.out:
        Path(args.out).write_text(_dump(result) + "\n")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    sizes = dict(DEFAULT_SIZES)
    if args.sizes:
        try:
            extra = json.loads(args.sizes)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--sizes is not valid JSON: {exc}") from exc
        unknown = sorted(set(extra) - set(DEFAULT_SIZES))
        if unknown:
            raise ConfigError(f"unknown size key(s): {', '.join(unknown)}")
        sizes.update(extra)
    seed = 0 if args.seed is None else args.seed
    threshold = args.threshold
    if threshold is None:
        threshold = GRADCHECK_TOL["smooth" if args.kind == "elm_linear" else "default"]
    report = grad_check(args.kind, sizes, seed=seed, corrupt=args.corrupt)
    ok = report.passed(threshold)
    print(_dump({
        "kind": report.kind, "seed": report.seed, "max_rel_err": report.max_rel_err,
        "worst": [report.worst[0], [int(i) for i in report.worst[1]]],
        "n_params": report.n_params, "threshold": threshold, "passed": ok,
        "note": report.note, "per_param": report.per_param,
    }))
    return EXIT_OK if ok else EXIT_GRADCHECK


def _coerce_axis_value(axis: str, v):
    if axis in ("tau_bounds", "tau_init"):
        if not (isinstance(v, (list, tuple)) and len(v) == 2):
            raise ConfigError(f"{axis} values must be [lo, hi] pairs")
        return [float(v[0]), float(v[1])]
    return v


SWEEP_METRICS = ("val_auc", "val_rmse", "val_accuracy", "test_auc", "test_rmse", "test_accuracy")


def run_sweep(cfg: dict, config_path: Path, out: Path, threads: int = 1, log=None) -> list[dict]:
    sweep = cfg["sweep"]
    axis = sweep.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    values = sweep.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values must be a non-empty list")
    repeats = sweep.get("repeats", 1)
    if not isinstance(repeats, int) or repeats < 1:
        raise ConfigError("sweep.repeats must be a positive integer")
    block, field = SWEEP_AXES[axis]
    raw = cfg["raw"]
    rows = []
    for value in values:
        value = _coerce_axis_value(axis, value)
        runs = []
        for r in range(repeats):
            seed = cfg["seed"] + r
            raw_b = json.loads(json.dumps(raw))
            raw_b.setdefault(block, {})[field] = value
            task = parse_task(raw_b.get("task", {}))
            model = _build(ModelConfig, raw_b.get("model", {}), "model")
            tcfg = dataclasses.replace(cfg["train"], seed=seed)
            ds = build_dataset(task, seed) if not cfg["data"] else _dataset_for(cfg, config_path)
            check_shapes(model, ds)
            res = train(model, ds, tcfg, out=out / f"{axis}={json.dumps(value)}" / f"seed{seed}",
                        threads=threads)
            runs.append(res)
            if log is not None:
                log(f"{axis}={value} seed={seed}: divergent={res.divergent} "
                    f"val={res.val.to_dict()} test={None if res.test is None else res.test.to_dict()}")
        ok = [r for r in runs if not r.divergent]
        row = {"axis": axis, "value": json.dumps(value), "runs": len(runs), "divergent": len(runs) - len(ok)}
        for name in SWEEP_METRICS:
            split, metric = name.split("_", 1)
            vals = [getattr(getattr(r, split), metric) for r in ok if getattr(r, split) is not None]
            vals = [v for v in vals if v is not None]
            row[f"{name}_mean"] = repr(float(np.mean(vals))) if vals else ""
            row[f"{name}_sd"] = repr(float(np.std(vals, ddof=1))) if len(vals) > 1 else ""
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    cfg = _with_seed(args, load_config(args.config))
    if args.axis:
        cfg["sweep"] = {**cfg["sweep"], "axis": args.axis}
    if args.values:
        try:
            cfg["sweep"] = {**cfg["sweep"], "values": json.loads(args.values)}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--values is not valid JSON: {exc}") from exc
    out = _prepare_out(args.out, args.force)
    shutil.copyfile(args.config, out / "config.json")
    rows = run_sweep(cfg, args.config, out, threads=args.threads,
                     log=None if args.quiet else lambda m: print(m, file=sys.stderr))
    fields = ["axis", "value", "runs", "divergent"] + [f"{m}_{s}" for m in SWEEP_METRICS for s in ("mean", "sd")]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print((out / "sweep.csv").read_text(), end="")
    n_div = sum(r["divergent"] for r in rows)
    if n_div:
        print(f"{n_div} divergent run(s) excluded from the means", file=sys.stderr)
    return EXIT_OK


# ---- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elmkit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out=True):
        if config:
            p.add_argument("--config", type=Path, required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory")
            p.add_argument("--force", action="store_true", help="overwrite a non-empty --out")
        p.add_argument("--threads", type=int, default=1, help="gradient workers (1 = bit-reproducible)")
        p.add_argument("--quiet", action="store_true", help="no per-epoch log on stderr")

    p = sub.add_parser("gen", help="generate a dataset directory")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics.csv")
    common(p)
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--data", type=Path, default=None,
                   help="dataset directory (default: regenerate from the checkpoint's config)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", type=Path, default=None, help="also write the report to this JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare BPTT against finite differences")
    p.add_argument("--kind", default="elm", choices=KINDS)
    p.add_argument("--sizes", default=None, help='JSON size overrides, e.g. {"T": 10}')
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="one training run per axis value, mean +- sd over repeats")
    common(p)
    p.add_argument("--axis", default=None, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", default=None, help="JSON list of axis values")
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
