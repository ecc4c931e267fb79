from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DTYPE, ShapeError


@dataclass
class SequenceBatch:
    """Batched input sequences.

    ``inputs`` is (B, T, C). ``dt`` holds one step size in ms per timestep.
    ``targets`` is task dependent: (B, T, 2) voltage/spike pairs for teacher
    fitting or (B,) class indices. ``mask`` (T,) marks steps that enter the loss.
    """

    inputs: np.ndarray
    dt: np.ndarray
    targets: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=DTYPE)
        if self.inputs.ndim != 3:
            raise ShapeError(f"inputs must be (B, T, C), got {self.inputs.shape}")
        T = self.inputs.shape[1]
        dt = np.asarray(self.dt, dtype=DTYPE)
        if dt.ndim == 0:
            dt = np.full(T, float(dt))
        if dt.shape != (T,):
            raise ShapeError(f"dt must have one entry per step ({T}), got {dt.shape}")
        if np.any(dt <= 0):
            raise ValueError("dt must be > 0")
        self.dt = dt
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (T,):
                raise ShapeError("mask must be (T,)")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def length(self) -> int:
        return self.inputs.shape[1]

    @property
    def channels(self) -> int:
        return self.inputs.shape[2]

    def subset(self, idx) -> "SequenceBatch":
        t = None if self.targets is None else self.targets[idx]
        return SequenceBatch(self.inputs[idx], self.dt, t, self.mask)
