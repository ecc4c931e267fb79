"""Training loop, evaluation and the checkpoint format.

A checkpoint directory holds ``ckpt.json`` (model and train configs, shapes,
config hash, best epoch, metrics, section table), ``params.bin`` (float64 LE
sections in table order) and ``metrics.csv`` with one row per epoch and split.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..bptt import backward, draw_masks, rollout
from ..cells import SnnParams
from ..numerics import NonFiniteError, make_rng
from ..sequence import SequenceBatch
from ..tasks.datasets import PAIRS, Dataset
from .losses import last_step_ce, neuronio_loss
from .metrics import DEFAULT_FPRS, MetricsReport, accuracy, auc, rmse, tpr_at_fpr
from .models import ModelConfig, build_model
from .optim import OPTIMIZERS, cosine_lr, init_moments

CKPT_FORMAT = 1


class DivergenceError(ArithmeticError):
    """Training loss blew past ``TrainConfig.divergence_loss``."""
CSV_FIELDS = ("epoch", "split", "loss", "rmse", "auc", "accuracy", "lr")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr0: float = 5e-3
    batch_size: int = 16
    epochs: int = 20
    burn_in_ms: float = 150.0
    dropout_p: float = 0.0
    recurrent_dropout_p: float = 0.0
    spike_l1_coeff: float = 0.0
    # target voltages are multiplied by this before the MSE
    voltage_scale: float = 1.0
    # start the readout bias at the training targets' mean voltage and spike
    # log-odds, so rare spikes are not first fitted by saturating the memory
    init_readout_bias: bool = True
    eval_batch: int = 64
    # a training loss above this halts the run as divergent
    divergence_loss: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(OPTIMIZERS)}")
        if self.lr0 <= 0:
            raise ValueError("lr0 must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        for name in ("dropout_p", "recurrent_dropout_p"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if not self.divergence_loss > 0:
            raise ValueError("divergence_loss must be > 0")
        if self.burn_in_ms < 0 or self.spike_l1_coeff < 0 or self.voltage_scale <= 0:
            raise ValueError("burn_in_ms, spike_l1_coeff must be >= 0 and voltage_scale > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: object
    best_epoch: int
    val: MetricsReport
    test: MetricsReport | None
    divergent: bool
    curves: list[dict] = field(default_factory=list)


def config_hash(model: ModelConfig, train: TrainConfig, dataset_digest: str) -> str:
    blob = json.dumps({"model": model.to_dict(), "train": train.to_dict(), "data": dataset_digest},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def output_width(ds: Dataset) -> int:
    return 2 if ds.layout == PAIRS else int(ds.n_classes)


def burn_in_steps(ds: Dataset, cfg: TrainConfig) -> int:
    steps = ds.inputs.shape[1]
    b = int(round(cfg.burn_in_ms / ds.dt)) if ds.layout == PAIRS else 0
    if b >= steps:
        raise ValueError(f"burn-in of {cfg.burn_in_ms} ms exceeds the {steps * ds.dt} ms sequences")
    return b


def init_readout_bias(params, ds: Dataset, cfg: TrainConfig):
    if ds.layout != PAIRS or not hasattr(params, "b_y"):
        return params
    _, targets = ds.split("train")
    post = targets[:, burn_in_steps(ds, cfg):]
    rate = float(np.clip(post[..., 1].mean(), 1e-6, 1 - 1e-6))
    b_y = np.array([cfg.voltage_scale * post[..., 0].mean(), np.log(rate / (1.0 - rate))])
    return params.with_trainable({"b_y": b_y})


def _loss_and_grad(y, targets, ds: Dataset, cfg: TrainConfig, burn: int):
    if ds.layout == PAIRS:
        loss, gv, gz = neuronio_loss(y[..., 0], y[..., 1], targets, burn, cfg.voltage_scale)
        return loss, np.stack([gv, gz], axis=-1)
    loss, g_last = last_step_ce(y[:, -1], targets)
    gy = np.zeros_like(y)
    gy[:, -1] = g_last
    return loss, gy


def _spike_penalty(params, tapes, n_seq: int, T: int, cfg: TrainConfig):
    """L1 spike penalty, averaged over sequences, steps and neurons; (value, per-spike grad)."""
    if not isinstance(params, SnnParams) or cfg.spike_l1_coeff == 0:
        return 0.0, 0.0
    n_neurons = params.n_rec + params.n_out
    per_spike = cfg.spike_l1_coeff / (n_seq * T * n_neurons)
    return per_spike * sum(t.extras["spike_count"] for t in tapes), per_spike


def _chunks(n: int, parts: int) -> list[slice]:
    parts = max(1, min(parts, n))
    edges = np.linspace(0, n, parts + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def batch_gradient(params, x, targets, ds: Dataset, cfg: TrainConfig, burn: int, masks, threads: int = 1):
    """Loss and summed gradient for one minibatch.

    With ``threads > 1`` the batch is split into contiguous chunks that are
    rolled out and differentiated in parallel; chunk gradients are reduced in
    chunk order.
    """
    B = x.shape[0]
    dt = np.full(x.shape[1], ds.dt)
    slices = _chunks(B, threads)

    def mask_slice(sl):
        if masks is None:
            return None
        # "rec" is one (B, H) mask for the whole sequence; the rest are (T, B, ...)
        return {k: v[sl] if k == "rec" else [m[:, sl] for m in v] if isinstance(v, list) else v[:, sl]
                for k, v in masks.items()}

    def run(sl):
        return rollout(params, SequenceBatch(x[sl], dt), None, mask_slice(sl))

    if len(slices) == 1:
        outs = [run(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            outs = list(pool.map(run, slices))
    y = np.concatenate([o[0] for o in outs])
    tapes = [o[1] for o in outs]
    loss, gy = _loss_and_grad(y, targets, ds, cfg, burn)
    penalty, spike_grad = _spike_penalty(params, tapes, B, x.shape[1], cfg)
    loss += penalty
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite training loss")
    if loss > cfg.divergence_loss:
        raise DivergenceError(f"training loss {loss:.3g} exceeds {cfg.divergence_loss:.3g}")

    def grad(i):
        return backward(tapes[i], params, gy[slices[i]], spike_grad=spike_grad)

    if len(slices) == 1:
        parts = [grad(0)]
    else:
        with ThreadPoolExecutor(max_workers=len(slices)) as pool:
            parts = list(pool.map(grad, range(len(slices))))
    total = {k: v.copy() for k, v in parts[0].items()}
    for part in parts[1:]:
        for k in total:
            total[k] += part[k]
    for k, g in total.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {k}")
    return loss, total


def predict(params, inputs: np.ndarray, dt: float, eval_batch: int = 64) -> np.ndarray:
    """Eval-mode outputs (no dropout) for every sequence, (N, T, d_o)."""
    steps = np.full(inputs.shape[1], dt)
    outs = [rollout(params, SequenceBatch(inputs[i : i + eval_batch], steps))[0]
            for i in range(0, inputs.shape[0], eval_batch)]
    return np.concatenate(outs) if outs else np.zeros((0, inputs.shape[1], 0))


def evaluate(params, ds: Dataset, split: str, cfg: TrainConfig,
             fprs: tuple[float, ...] = DEFAULT_FPRS) -> MetricsReport:
    x, targets = ds.split(split)
    if x.shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")
    y = predict(params, x, ds.dt, cfg.eval_batch)
    burn = burn_in_steps(ds, cfg)
    loss, _ = _loss_and_grad(y, targets, ds, cfg, burn)
    if ds.layout != PAIRS:
        return MetricsReport(loss=loss, accuracy=accuracy(y[:, -1], targets))
    volt = y[:, burn:, 0] / cfg.voltage_scale
    scores = y[:, burn:, 1].ravel()
    spikes = targets[:, burn:, 1].ravel()
    report = MetricsReport(loss=loss, rmse=rmse(volt, targets[:, burn:, 0]))
    if 0 < spikes.sum() < spikes.size:
        report.auc = auc(scores, spikes)
        report.tpr_at_fpr = {f: tpr_at_fpr(scores, spikes, f) for f in fprs}
    return report


def _better(new: MetricsReport, best: MetricsReport, layout: str) -> bool:
    if layout == PAIRS:
        return new.rmse < best.rmse
    return new.accuracy > best.accuracy


def _csv_row(epoch, split, rep: MetricsReport | None, loss, lr) -> dict:
    def fmt(v):
        return "" if v is None else repr(float(v))
    return {"epoch": epoch, "split": split, "loss": fmt(loss),
            "rmse": fmt(rep.rmse if rep else None), "auc": fmt(rep.auc if rep else None),
            "accuracy": fmt(rep.accuracy if rep else None), "lr": fmt(lr)}


def train(model_cfg: ModelConfig, ds: Dataset, cfg: TrainConfig, out: Path | None = None,
          threads: int = 1, log=None) -> TrainResult:
    """Minibatch BPTT with cosine decay and validation-based model selection.

    With ``out`` set, metrics.csv is appended after every epoch and the best
    checkpoint is (re)written whenever validation improves, so a divergent
    run keeps its partial logs.
    """
    d_in = ds.inputs.shape[2]
    d_o = output_width(ds)
    params = build_model(model_cfg, d_in, d_o, cfg.seed)
    if cfg.init_readout_bias:
        params = init_readout_bias(params, ds, cfg)
    burn = burn_in_steps(ds, cfg)
    x_train, y_train = ds.split("train")
    n_train = x_train.shape[0]
    if n_train == 0:
        raise ValueError("training split is empty")
    per_epoch = -(-n_train // cfg.batch_size)
    total_steps = per_epoch * cfg.epochs
    step_fn = OPTIMIZERS[cfg.optimizer]
    moments = init_moments(params.trainable())
    chash = config_hash(model_cfg, cfg, ds.digest())

    writer = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()

    def record(row):
        curves.append(row)
        if writer is not None:
            writer.writerow(row)
            fh.flush()

    curves: list[dict] = []
    best = evaluate(params, ds, "val", cfg)
    best_params, best_epoch = params, 0
    record(_csv_row(0, "val", best, best.loss, cosine_lr(cfg.lr0, 0, total_steps)))
    if out is not None:
        save_checkpoint(out, best_params, model_cfg, cfg, ds, chash, best_epoch, 0, best, None, False)

    divergent = False
    step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = make_rng(cfg.seed, "order", str(epoch)).permutation(n_train)
            losses = []
            for b0 in range(0, n_train, cfg.batch_size):
                idx = order[b0 : b0 + cfg.batch_size]
                x = x_train[idx]
                masks = draw_masks(params, len(idx), x.shape[1], make_rng(cfg.seed, "dropout", str(step)),
                                   cfg.dropout_p, cfg.recurrent_dropout_p)
                lr = cosine_lr(cfg.lr0, step, total_steps)
                loss, grads = batch_gradient(params, x, y_train[idx], ds, cfg, burn, masks, threads)
                step += 1
                new, moments = step_fn(params.trainable(), grads, moments, step, lr)
                params = params.with_trainable(new)
                losses.append(loss)
            lr_end = cosine_lr(cfg.lr0, step, total_steps)
            record(_csv_row(epoch, "train", None, float(np.mean(losses)), lr_end))
            val = evaluate(params, ds, "val", cfg)
            record(_csv_row(epoch, "val", val, val.loss, lr_end))
            if not all(math.isfinite(v) for v in (val.loss, val.rmse or 0.0)):
                raise NonFiniteError("non-finite validation metrics")
            if _better(val, best, ds.layout):
                best, best_params, best_epoch = val, params, epoch
                if out is not None:
                    save_checkpoint(out, best_params, model_cfg, cfg, ds, chash, best_epoch, epoch, best,
                                    None, False)
            if log is not None:
                log(f"epoch {epoch}: train loss {np.mean(losses):.5f}, val loss {val.loss:.5f}"
                    + (f", val rmse {val.rmse:.4f}" if val.rmse is not None else "")
                    + (f", val auc {val.auc:.4f}" if val.auc is not None else "")
                    + (f", val acc {val.accuracy:.4f}" if val.accuracy is not None else ""))
    except (NonFiniteError, FloatingPointError, DivergenceError) as exc:
        divergent = True
        if log is not None:
            log(f"diverged at optimizer step {step}: {exc}")

    test = None
    if not divergent and ds.splits["test"][1] > ds.splits["test"][0]:
        test = evaluate(best_params, ds, "test", cfg)
    if out is not None:
        save_checkpoint(out, best_params, model_cfg, cfg, ds, chash, best_epoch,
                        cfg.epochs if not divergent else None, best, test, divergent)
        fh.close()
    return TrainResult(best_params, best_epoch, best, test, divergent, curves)


def save_checkpoint(out: Path, params, model_cfg: ModelConfig, cfg: TrainConfig, ds: Dataset,
                    chash: str, best_epoch: int, epochs_run: int | None, val: MetricsReport,
                    test: MetricsReport | None, divergent: bool) -> None:
    arrays = params.trainable()
    sections = []
    offset = 0
    blobs = []
    for name, a in arrays.items():
        a = np.ascontiguousarray(a, dtype="<f8")
        sections.append({"name": name, "shape": list(a.shape), "offset": offset, "count": int(a.size)})
        offset += int(a.size)
        blobs.append(a.ravel())
    meta = {
        "format": CKPT_FORMAT,
        "model_kind": model_cfg.kind,
        "model": model_cfg.to_dict(),
        "train": cfg.to_dict(),
        "shapes": {"d_in": int(ds.inputs.shape[2]), "d_o": output_width(ds)},
        "config_hash": chash,
        "dataset_digest": ds.digest(),
        "epoch": best_epoch,
        "epochs_run": epochs_run,
        "divergent": divergent,
        "metrics": {"val": val.to_dict(), "test": None if test is None else test.to_dict()},
        "sections": sections,
    }
    (out / "params.bin").write_bytes(np.concatenate(blobs).astype("<f8").tobytes() if blobs else b"")
    (out / "ckpt.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path: Path):
    """Rebuild the model from its config and seed, then load the trained sections."""
    path = Path(path)
    meta = json.loads((path / "ckpt.json").read_text())
    if meta.get("format") != CKPT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
    model_cfg = ModelConfig(**meta["model"])
    cfg = TrainConfig(**meta["train"])
    params = build_model(model_cfg, meta["shapes"]["d_in"], meta["shapes"]["d_o"], cfg.seed)
    flat = np.fromfile(path / "params.bin", dtype="<f8")
    arrays = {s["name"]: flat[s["offset"] : s["offset"] + s["count"]].reshape(s["shape"]).astype(np.float64)
              for s in meta["sections"]}
    if set(arrays) != set(params.trainable()):
        raise ValueError("checkpoint sections do not match the model's parameters")
    return params.with_trainable(arrays), model_cfg, cfg, meta
