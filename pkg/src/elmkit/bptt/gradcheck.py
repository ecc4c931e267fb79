"""Compare BPTT gradients against central finite differences on random small cells."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cells import init_elm, init_lif, init_lstm, init_snn
from ..numerics import make_rng
from ..sequence import SequenceBatch
from . import backward, rollout, uses_surrogate

KINDS = ("elm", "elm_improved", "branch_elm", "elm_linear", "lstm", "lif", "alif", "snn")
SMOOTH_KINDS = ("elm_linear", "lstm")

DEFAULT_SIZES = {"d_s": 8, "d_m": 4, "d_mlp": 8, "d_o": 2, "T": 20, "B": 2, "hidden": 4,
                 "d_tree": 4, "d_brch": 3}

KINK_MARGIN = 1e-3
# keeps tanh and gate nonlinearities out of saturation, where gradient
# components shrink below the finite-difference rounding floor
INPUT_SCALE = 0.5


@dataclass
class GradReport:
    kind: str
    seed: int
    max_rel_err: float
    worst: tuple[str, tuple]
    n_params: int
    surrogate: bool = False
    note: str = ""
    per_param: dict[str, float] = field(default_factory=dict)

    def passed(self, threshold: float) -> bool:
        return self.surrogate or self.max_rel_err < threshold


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def build_case(kind: str, sizes: dict, seed: int):
    """Random parameters, inputs and loss weights ``c`` for ``L = sum(c * y)``."""
    sz = {**DEFAULT_SIZES, **(sizes or {})}
    rng = make_rng(seed, "gradcheck", kind)
    d_s, d_m, d_o, T, B = sz["d_s"], sz["d_m"], sz["d_o"], sz["T"], sz["B"]
    if kind in ("elm", "elm_improved", "branch_elm", "elm_linear"):
        p = init_elm(
            rng, d_s, d_m, d_o,
            d_mlp=sz["d_mlp"],
            l_mlp=0 if kind == "elm_linear" else 1,
            lam=float(rng.uniform(1.0, 2.0)),
            tau_init=(2.0, 50.0),
            tau_bounds=(0.5, 100.0),
            tau_s=float(rng.uniform(2.0, 10.0)),
            w_s=0.5,
            variant="improved" if kind == "elm_improved" else "original",
            branch=(sz["d_tree"], sz["d_brch"]) if kind == "branch_elm" else None,
        )
        # move off the symmetric init so every parameter carries signal
        p = p.with_trainable({
            "theta_m": p.theta_m + rng.normal(0, 0.3, d_m),
            **({"w_s": rng.uniform(0.2, 1.0, d_s)} if p.learn_w_s else {}),
        })
        p = _jitter(p, rng, keys=[k for k in p.trainable() if k.startswith("mlp_b") or k == "b_y"])
    elif kind == "lstm":
        p = init_lstm(rng, d_s, sz["hidden"], d_o)
        p = _jitter(p, rng, keys=["b"])
    elif kind in ("lif", "alif"):
        p = init_lif(rng, d_s, tau=float(rng.uniform(5, 20)), adaptive=kind == "alif",
                     strength=0.3, tau_a=50.0, threshold=0.3)
    elif kind == "snn":
        p = init_snn(rng, d_s, d_o, n_total=12, n_syn=5, w_init=0.5)
    else:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {KINDS}")

    inputs = rng.normal(0.0, INPUT_SCALE, (B, T, d_s))
    dt = rng.uniform(0.5, 2.0, T)
    c = rng.normal(0.0, 1.0, (B, T, d_o))
    return p, SequenceBatch(inputs, dt), c, rng


def _jitter(p, rng, keys):
    arrays = p.trainable()
    return p.with_trainable({k: arrays[k] + rng.normal(0.0, 0.3, arrays[k].shape) for k in keys})


def _loss(p, batch, c):
    y, tape = rollout(p, batch)
    return float(np.sum(c * y)), y, tape


def _kink_margin(tape) -> float:
    if tape.kind != "elm":
        return np.inf
    margins = [np.abs(a).min() for rec in tape.records["steps"] for a in rec["pre"]]
    return min(margins) if margins else np.inf


def grad_check(kind: str, sizes: dict | None = None, seed: int = 0, h: float = 1e-5,
               corrupt: bool = False) -> GradReport:
    p, batch, c, rng = build_case(kind, sizes, seed)
    note = ""
    _, y, tape = _loss(p, batch, c)
    tries = 0
    while _kink_margin(tape) < KINK_MARGIN:
        # nudge the inputs until no ReLU pre-activation sits near its kink
        tries += 1
        if tries > 100:
            note = "could not move all ReLU pre-activations off the kink"
            break
        batch = SequenceBatch(batch.inputs + rng.normal(0.0, 0.05, batch.inputs.shape), batch.dt)
        _, y, tape = _loss(p, batch, c)

    grads = backward(tape, p, c)
    if corrupt:
        key = next(iter(grads))
        grads[key] = grads[key] * 1.5 + 1e-3
    arrays = {k: v.copy() for k, v in p.trainable().items()}
    worst = ("", ())
    max_err = 0.0
    per_param = {}
    n = 0
    for name, base in arrays.items():
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + h
            lp, _, _ = _loss(p.with_trainable({name: base}), batch, c)
            base[idx] = orig - h
            lm, _, _ = _loss(p.with_trainable({name: base}), batch, c)
            base[idx] = orig
            fd[idx] = (lp - lm) / (2 * h)
            n += 1
        err = rel_err(grads[name], fd)
        per_param[name] = float(err.max()) if err.size else 0.0
        if err.size and err.max() > max_err:
            max_err = float(err.max())
            worst = (name, np.unravel_index(int(err.argmax()), err.shape))
    surrogate = uses_surrogate(p)
    if surrogate:
        note = "non-differentiable path, surrogate used"
    return GradReport(kind, seed, max_err, worst, n, surrogate, note, per_param)
