"""Full-sequence rollouts and exact (or surrogate) reverse-mode gradients.

No truncation: every rollout is unrolled over the whole sequence.
"""

from __future__ import annotations

import numpy as np

from ..cells import ElmParams, LifParams, LstmParams, SnnParams
from ..sequence import SequenceBatch
from . import elm as _elm
from . import lif as _lif
from . import lstm as _lstm
from . import snn as _snn
from .tape import Tape

_BY_TYPE = {ElmParams: _elm, LstmParams: _lstm, SnnParams: _snn, LifParams: _lif}


def _impl(params):
    for cls, mod in _BY_TYPE.items():
        if isinstance(params, cls):
            return mod
    raise TypeError(f"no BPTT rules for {type(params).__name__}")


def draw_masks(params, batch: int, steps: int, rng, dropout_p: float = 0.0,
               recurrent_dropout_p: float = 0.0):
    """Training-mode dropout masks for a rollout, or None when dropout is off."""
    if isinstance(params, ElmParams):
        return _elm.draw_masks(params, batch, steps, dropout_p, rng)
    if isinstance(params, LstmParams):
        return _lstm.draw_masks(params, batch, steps, dropout_p, recurrent_dropout_p, rng)
    return None


def rollout(params, batch: SequenceBatch, state0=None, masks=None) -> tuple[np.ndarray, Tape]:
    """Run ``params`` over every step of ``batch``; returns outputs (B, T, d_o) and the tape."""
    return _impl(params).rollout(params, batch.inputs, batch.dt, state0, masks)


def replay(tape: Tape, params) -> np.ndarray:
    outputs, _ = _impl(params).rollout(params, tape.inputs, tape.dt, tape.state0, tape.masks)
    return outputs


def backward(tape: Tape, params, loss_grads: np.ndarray, spike_grad: float = 0.0) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every trainable array of ``params``.

    ``loss_grads`` holds dL/dy for every step, shaped like the rollout outputs.
    """
    loss_grads = np.asarray(loss_grads, dtype=float)
    mod = _impl(params)
    if mod is _snn:
        return mod.backward(tape, params, loss_grads, spike_grad=spike_grad)
    return mod.backward(tape, params, loss_grads)


def uses_surrogate(params) -> bool:
    return isinstance(params, (LifParams, SnnParams))


__all__ = ["Tape", "backward", "draw_masks", "replay", "rollout", "uses_surrogate"]
