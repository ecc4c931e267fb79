"""Leaky integrate-and-fire neurons, plain and with spike-frequency adaptation.

Exponential-Euler update, exact for input held constant over a step::

    v_pre = k * v + (1 - k) * (w . x + bias)        k = exp(-dt / tau)
    spike = v_pre >= threshold + a                  (a = 0 for plain LIF)
    v'    = v_reset if spike else v_pre
    a'    = exp(-dt / tau_a) * a + strength * spike

A membrane exactly at threshold fires.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..numerics import DTYPE, check_width

MIN_TAU = 0.1


@dataclass(frozen=True)
class LifParams:
    w: np.ndarray
    tau: float
    bias: float = 0.0
    threshold: float = 1.0
    v_reset: float = 0.0
    surrogate_width: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("membrane tau must be > 0")

    @property
    def d_s(self) -> int:
        return self.w.shape[0]

    def trainable(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "tau": np.array([self.tau]), "bias": np.array([self.bias])}

    def with_trainable(self, arrays):
        return replace(
            self,
            w=arrays.get("w", self.w),
            tau=max(float(arrays["tau"][0]), MIN_TAU) if "tau" in arrays else self.tau,
            bias=float(arrays["bias"][0]) if "bias" in arrays else self.bias,
        )


@dataclass(frozen=True)
class AlifParams(LifParams):
    tau_a: float = 200.0
    strength: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.tau_a <= 0:
            raise ValueError("adaptation tau must be > 0")

    def trainable(self) -> dict[str, np.ndarray]:
        out = super().trainable()
        out["tau_a"] = np.array([self.tau_a])
        return out

    def with_trainable(self, arrays):
        out = super().with_trainable(arrays)
        if "tau_a" in arrays:
            out = replace(out, tau_a=max(float(arrays["tau_a"][0]), MIN_TAU))
        return out


def init_lif(rng: np.random.Generator, d_s: int, *, tau: float = 20.0, adaptive: bool = False,
             tau_a: float = 200.0, strength: float = 0.0, **kw) -> LifParams:
    w = rng.uniform(-1.0, 1.0, size=d_s) / np.sqrt(d_s)
    if adaptive:
        return AlifParams(w=w, tau=tau, tau_a=tau_a, strength=strength, **kw)
    return LifParams(w=w, tau=tau, **kw)


def lif_step(p: LifParams, v, x, dt: float):
    """Returns ``(v', spike, v_pre)``; ``v_pre`` is the pre-reset membrane."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=DTYPE)
    check_width(x, p.d_s, "lif_step input")
    k = np.exp(-dt / p.tau)
    v_pre = k * np.asarray(v, dtype=DTYPE) + (1.0 - k) * (x @ p.w + p.bias)
    spike = (v_pre >= p.threshold).astype(DTYPE)
    v_new = np.where(spike > 0, p.v_reset, v_pre)
    return v_new, spike, v_pre


def alif_step(p: AlifParams, state, x, dt: float):
    """Returns ``((v', a'), spike, v_pre)`` with threshold raised by ``a``."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v, a = state
    x = np.asarray(x, dtype=DTYPE)
    check_width(x, p.d_s, "alif_step input")
    k = np.exp(-dt / p.tau)
    v_pre = k * np.asarray(v, dtype=DTYPE) + (1.0 - k) * (x @ p.w + p.bias)
    spike = (v_pre >= p.threshold + a).astype(DTYPE)
    v_new = np.where(spike > 0, p.v_reset, v_pre)
    a_new = np.exp(-dt / p.tau_a) * a + p.strength * spike
    return (v_new, a_new), spike, v_pre


def triangle_surrogate(v, threshold: float, width: float):
    """Pseudo-derivative of the spike nonlinearity, used on the backward pass only."""
    return np.maximum(0.0, 1.0 - np.abs(v - threshold) / width)
