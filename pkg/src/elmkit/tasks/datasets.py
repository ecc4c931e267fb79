"""Task configs, in-memory datasets and the on-disk dataset directory format.

Directory layout: ``meta.json`` + ``inputs.bin`` (float32 LE, [N, T, C]) +
``targets.bin`` (float32 LE [N, T, 2] voltage/spike pairs, or int32 LE [N]
class indices, as declared in the meta).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .digits import DIGIT_MS, N_SUMS, gen_adding
from .raster import rebin
from .recall import gen_delayed_recall
from .teacher import TeacherConfig, cut_samples, teacher_trace

SCHEMA_VERSION = 1
PAIRS = "per_step_pairs"
CLASS_INDEX = "class_index"


@dataclass
class TeacherTask:
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    train_ms: float = 100_000.0
    test_ms: float = 20_000.0
    sample_ms: float = 500.0
    val_fraction: float = 0.1


@dataclass
class AddingTask:
    channels: int = 32
    n_train: int = 2000
    n_test: int = 500
    digit_ms: float = DIGIT_MS
    dt: float = 1.0
    bin_ms: float = 10.0
    val_fraction: float = 0.1


@dataclass
class RecallTask:
    length: int = 1050
    n_symbols: int = 4
    delay: int = 1000
    n_train: int = 512
    n_test: int = 256
    noise_channels: int = 4
    noise_rate: float = 0.05
    cue_steps: int = 50
    dt: float = 1.0
    val_fraction: float = 0.1


TASKS = {"teacher": TeacherTask, "adding": AddingTask, "recall": RecallTask}


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, T, C)
    targets: np.ndarray  # (N, T, 2) float or (N,) int
    dt: float
    splits: dict[str, tuple[int, int]]
    meta: dict

    @property
    def layout(self) -> str:
        return self.meta["targets"]["layout"]

    @property
    def n_classes(self) -> int | None:
        return self.meta.get("n_classes")

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.splits[name]
        return self.inputs[lo:hi], self.targets[lo:hi]

    def digest(self) -> str:
        return meta_digest(self.meta)


def meta_digest(meta: dict) -> str:
    return hashlib.sha256(json.dumps(meta, sort_keys=True).encode()).hexdigest()[:16]


def _splits(n_train_total: int, n_test: int, val_fraction: float) -> dict[str, tuple[int, int]]:
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    n_val = int(round(val_fraction * n_train_total))
    n_tr = n_train_total - n_val
    return {"train": (0, n_tr), "val": (n_tr, n_train_total),
            "test": (n_train_total, n_train_total + n_test)}


def build_dataset(task, seed: int) -> Dataset:
    """Generate every split of ``task``; values pass through float32 exactly as on disk."""
    if isinstance(task, TeacherTask):
        tr_x, tr_y = cut_samples(teacher_trace(task.teacher, task.train_ms, seed, "train"), task.sample_ms)
        te_x, te_y = cut_samples(teacher_trace(task.teacher, task.test_ms, seed, "test"), task.sample_ms)
        inputs = np.concatenate([tr_x, te_x])
        targets = np.concatenate([tr_y, te_y])
        dt, layout, n_classes = task.teacher.dt, PAIRS, None
        splits = _splits(len(tr_x), len(te_x), task.val_fraction)
    elif isinstance(task, AddingTask):
        samples = gen_adding(task.n_train + task.n_test, task.channels, seed, task.digit_ms, task.dt)
        rasters = [rebin(s.raster, task.bin_ms) for s in samples]
        inputs = np.stack([r.values for r in rasters])
        targets = np.array([s.label for s in samples])
        dt, layout, n_classes = float(task.bin_ms), CLASS_INDEX, N_SUMS
        splits = _splits(task.n_train, task.n_test, task.val_fraction)
    elif isinstance(task, RecallTask):
        kw = dict(noise_channels=task.noise_channels, noise_rate=task.noise_rate, dt=task.dt,
                  cue_steps=task.cue_steps)
        tr = gen_delayed_recall(task.length, task.n_symbols, task.delay, seed, n=task.n_train, **kw)
        te = gen_delayed_recall(task.length, task.n_symbols, task.delay, seed + 7919, n=task.n_test, **kw)
        inputs = np.concatenate([tr.inputs, te.inputs])
        targets = np.concatenate([tr.targets, te.targets])
        dt, layout, n_classes = task.dt, CLASS_INDEX, task.n_symbols
        splits = _splits(task.n_train, task.n_test, task.val_fraction)
    else:
        raise TypeError(f"unknown task config {type(task).__name__}")

    inputs = inputs.astype("<f4").astype(np.float64)
    if layout == PAIRS:
        targets = targets.astype("<f4").astype(np.float64)
    else:
        targets = targets.astype("<i4").astype(np.int64)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "task": _task_name(task),
        "channels": int(inputs.shape[2]),
        "dt": float(dt),
        "counts": {"n": int(inputs.shape[0]), "steps": int(inputs.shape[1])},
        "seed": int(seed),
        "generator": asdict(task),
        "targets": {"layout": layout, "dtype": "<f4" if layout == PAIRS else "<i4",
                    "shape": list(targets.shape)},
        "splits": {k: list(v) for k, v in splits.items()},
    }
    if n_classes is not None:
        meta["n_classes"] = int(n_classes)
    return Dataset(inputs, targets, float(dt), splits, meta)


def _task_name(task) -> str:
    for name, cls in TASKS.items():
        if isinstance(task, cls):
            return name
    raise TypeError(type(task).__name__)


def write_dataset(ds: Dataset, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ds.inputs.astype("<f4").tofile(out / "inputs.bin")
    ds.targets.astype(ds.meta["targets"]["dtype"]).tofile(out / "targets.bin")
    (out / "meta.json").write_text(json.dumps(ds.meta, indent=2, sort_keys=True) + "\n")


def read_dataset(path: Path) -> Dataset:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {meta.get('schema_version')!r}")
    n, T, C = meta["counts"]["n"], meta["counts"]["steps"], meta["channels"]
    inputs = np.fromfile(path / "inputs.bin", dtype="<f4")
    if inputs.size != n * T * C:
        raise ValueError(f"inputs.bin holds {inputs.size} values, meta declares {n}x{T}x{C}")
    tmeta = meta["targets"]
    targets = np.fromfile(path / "targets.bin", dtype=tmeta["dtype"])
    if targets.size != int(np.prod(tmeta["shape"])):
        raise ValueError("targets.bin size disagrees with meta")
    targets = targets.reshape(tmeta["shape"])
    targets = targets.astype(np.float64) if tmeta["layout"] == PAIRS else targets.astype(np.int64)
    splits = {k: tuple(v) for k, v in meta["splits"].items()}
    return Dataset(inputs.reshape(n, T, C).astype(np.float64), targets, float(meta["dt"]), splits, meta)


def summarize(ds: Dataset) -> dict:
    """Summary statistics printed by the gen command."""
    out = {"task": ds.meta["task"], "n": ds.meta["counts"]["n"], "steps": ds.meta["counts"]["steps"],
           "channels": ds.meta["channels"], "dt": ds.dt}
    nz = np.abs(ds.inputs)
    out["input_rate_hz"] = float(nz.sum() / (nz.shape[0] * nz.shape[1] * nz.shape[2]) / ds.dt * 1000.0)
    if ds.layout == PAIRS:
        out["target_rate_hz"] = float(ds.targets[..., 1].mean() / ds.dt * 1000.0)
    else:
        out["class_counts"] = np.bincount(ds.targets, minlength=ds.n_classes).tolist()
    return out
