"""Small numeric kernel shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the strict shape checking the hand-written backward passes rely on.
"""

from __future__ import annotations

import zlib

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised on any dimension mismatch; nothing is broadcast implicitly."""


class NonFiniteError(FloatingPointError):
    """A NaN or inf showed up where the dynamics require finite values."""

    def __init__(self, message: str, step: int | None = None, sequence: int | None = None):
        super().__init__(message)
        self.step = step
        self.sequence = sequence


def make_rng(seed: int, *names: str) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and optional substream names.

    The same ``(seed, names)`` always yields the same stream, independent of
    platform. Named substreams let init, data order and dropout draw from
    one master seed without interfering with each other.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    key.extend(zlib.crc32(n.encode("utf-8")) for n in names)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"expected {cols} cols, got {m.shape[1]}")
    return m


def matvec(M, v) -> np.ndarray:
    M = as_matrix(M)
    v = np.asarray(v, dtype=DTYPE)
    if v.ndim != 1 or v.shape[0] != M.shape[1]:
        raise ShapeError(f"matvec: matrix is {M.shape}, vector has shape {v.shape}")
    return M @ v


def batch_linear(x: np.ndarray, W: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``x @ W.T + b`` for ``x`` of shape (..., in) and ``W`` of shape (out, in)."""
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight cols {W.shape[1]}")
    out = x @ W.T
    if b is not None:
        if b.shape != (W.shape[0],):
            raise ShapeError(f"linear: bias shape {b.shape} != ({W.shape[0]},)")
        out = out + b
    return out


def check_width(x: np.ndarray, width: int, what: str) -> None:
    if x.shape[-1] != width:
        raise ShapeError(f"{what}: expected trailing width {width}, got shape {x.shape}")


def decay_factor(tau, dt):
    """Per-step retention ``exp(-dt / tau)``; ``tau`` and ``dt`` in milliseconds."""
    tau = np.asarray(tau, dtype=DTYPE)
    dt = np.asarray(dt, dtype=DTYPE)
    if np.any(tau <= 0):
        raise ValueError("decay_factor: tau must be > 0")
    if np.any(dt < 0):
        raise ValueError("decay_factor: dt must be >= 0")
    out = np.exp(-dt / tau)
    return float(out) if out.ndim == 0 else out


def kaiming_uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Weights of shape (fan_out, fan_in) drawn from U[-b, b], b = sqrt(6 / fan_in)."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("kaiming_uniform_init: fan_in and fan_out must be >= 1")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def sigmoid(x):
    x = np.asarray(x, dtype=DTYPE)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p):
    p = np.asarray(p, dtype=DTYPE)
    return np.log(p) - np.log1p(-p)


def relu(x):
    return np.maximum(x, 0.0)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softplus(x):
    x = np.asarray(x, dtype=DTYPE)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def require_finite(a: np.ndarray, what: str, step: int | None = None) -> None:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(np.atleast_2d(a)))[0]
        seq = int(bad[0]) if np.ndim(a) > 1 else None
        where = f" at step {step}" if step is not None else ""
        raise NonFiniteError(f"non-finite {what}{where}", step=step, sequence=seq)
