"""Adam / Adamax on dicts of arrays, and the cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def init_moments(params: dict[str, np.ndarray]) -> dict[str, dict[str, np.ndarray]]:
    return {"m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def _check(params, grads, t):
    if t < 1:
        raise ValueError("step counter t starts at 1")
    if params.keys() != grads.keys():
        raise ValueError(f"parameter/gradient names differ: {sorted(params)} vs {sorted(grads)}")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise ValueError(f"gradient shape mismatch for {k}")


def adam_step(params, grads, moments, t: int, lr_t: float):
    _check(params, grads, t)
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for k, p in params.items():
        g = grads[k]
        m = BETA1 * moments["m"][k] + (1.0 - BETA1) * g
        v = BETA2 * moments["v"][k] + (1.0 - BETA2) * g * g
        new_p[k] = p - lr_t * (m / c1) / (np.sqrt(v / c2) + EPS)
        new_m[k], new_v[k] = m, v
    return new_p, {"m": new_m, "v": new_v}


def adamax_step(params, grads, moments, t: int, lr_t: float):
    """Adamax; ``moments['v']`` holds the infinity-norm accumulator."""
    _check(params, grads, t)
    new_p, new_m, new_u = {}, {}, {}
    c1 = 1.0 - BETA1**t
    for k, p in params.items():
        g = grads[k]
        m = BETA1 * moments["m"][k] + (1.0 - BETA1) * g
        u = np.maximum(BETA2 * moments["v"][k], np.abs(g))
        new_p[k] = p - (lr_t / c1) * m / (u + EPS)
        new_m[k], new_u[k] = m, u
    return new_p, {"m": new_m, "v": new_u}


OPTIMIZERS = {"adam": adam_step, "adamax": adamax_step}


def cosine_lr(lr0: float, step: int, total_steps: int) -> float:
    if total_steps <= 0:
        return lr0
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
