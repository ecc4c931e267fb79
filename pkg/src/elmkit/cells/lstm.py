"""LSTM baseline with optional chrono bias initialization.

Gates are stacked as ``[input, forget, cell, output]`` along the first axis
of ``W``. The LSTM has no explicit timescales, so ``dt`` is accepted for
interface parity and ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..numerics import DTYPE, ShapeError, batch_linear, check_width, kaiming_uniform_init, sigmoid


@dataclass(frozen=True)
class LstmParams:
    W: np.ndarray  # (4H, D + H)
    b: np.ndarray  # (4H,)
    w_y: np.ndarray  # (d_o, H)
    b_y: np.ndarray
    chrono: bool = False
    t_max: float | None = None

    def __post_init__(self):
        H = self.hidden
        if self.W.shape[0] != 4 * H or self.b.shape != (4 * H,):
            raise ShapeError("LSTM weight/bias shapes inconsistent")
        if self.w_y.shape[1] != H or self.b_y.shape != (self.w_y.shape[0],):
            raise ShapeError("LSTM readout shape mismatch")

    @property
    def hidden(self) -> int:
        return self.W.shape[0] // 4

    @property
    def d_in(self) -> int:
        return self.W.shape[1] - self.hidden

    @property
    def d_o(self) -> int:
        return self.w_y.shape[0]

    def trainable(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b, "w_y": self.w_y, "b_y": self.b_y}

    def with_trainable(self, arrays):
        return replace(self, **{k: arrays[k] for k in ("W", "b", "w_y", "b_y") if k in arrays})


def chrono_biases(rng: np.random.Generator, hidden: int, t_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Forget biases ``log(U(1, t_max - 1))`` and input biases of opposite sign."""
    if t_max < 2:
        raise ValueError("chrono initialization needs t_max >= 2")
    b_f = np.log(rng.uniform(1.0, t_max - 1.0, size=hidden))
    return -b_f, b_f


def init_lstm(rng: np.random.Generator, d_in: int, hidden: int, d_o: int, *,
              chrono: bool = False, t_max: float | None = None) -> LstmParams:
    W = kaiming_uniform_init(rng, d_in + hidden, 4 * hidden)
    b = np.zeros(4 * hidden)
    if chrono:
        if t_max is None:
            raise ValueError("chrono initialization needs t_max")
        b_i, b_f = chrono_biases(rng, hidden, t_max)
        b[:hidden] = b_i
        b[hidden : 2 * hidden] = b_f
    w_y = kaiming_uniform_init(rng, hidden, d_o)
    b_y = np.zeros(d_o)
    return LstmParams(W, b, w_y, b_y, chrono=chrono, t_max=t_max)


def lstm_forward(p: LstmParams, h, c, x, h_mask=None):
    H = p.hidden
    h_in = h if h_mask is None else h * h_mask
    z = np.concatenate([x, h_in], axis=-1)
    a = batch_linear(z, p.W, p.b)
    i = sigmoid(a[..., :H])
    f = sigmoid(a[..., H : 2 * H])
    g = np.tanh(a[..., 2 * H : 3 * H])
    o = sigmoid(a[..., 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    rec = {"z": z, "c_prev": c, "i": i, "f": f, "g": g, "o": o, "tc": tc, "h": h_new}
    return h_new, c_new, rec


def lstm_step(p: LstmParams, state, x, dt: float | None = None):
    """Returns ``((h', c'), y)`` where ``y`` is the linear readout of ``h'``."""
    h, c = state
    x = np.asarray(x, dtype=DTYPE)
    check_width(x, p.d_in, "lstm_step input")
    h_new, c_new, _ = lstm_forward(p, h, c, x)
    return (h_new, c_new), batch_linear(h_new, p.w_y, p.b_y)
