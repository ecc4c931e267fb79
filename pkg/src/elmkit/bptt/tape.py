from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..numerics import NonFiniteError


@dataclass
class Tape:
    """Forward intermediates of one batched rollout.

    ``records`` maps names to arrays stacked along a leading time axis, so
    the backward pass never recomputes the forward. ``masks`` holds any
    dropout masks drawn for the rollout; replaying with them reproduces
    ``outputs`` exactly.
    """

    kind: str
    signature: tuple
    inputs: np.ndarray
    dt: np.ndarray
    state0: Any
    records: dict[str, Any]
    outputs: np.ndarray
    masks: dict[str, Any] | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.inputs.shape[1]

    @property
    def empty(self) -> bool:
        return self.length == 0

    def __len__(self) -> int:
        return self.length


def signature_of(params) -> tuple:
    return (type(params).__name__,) + tuple(
        (k, v.shape) for k, v in params.trainable().items()
    )


def check_tape(tape: Tape, params, kind: str) -> None:
    if tape.kind != kind or tape.signature != signature_of(params):
        raise ValueError(
            f"tape recorded for {tape.kind} {tape.signature} cannot be used with {signature_of(params)}"
        )


def check_loss_grads(tape: Tape, gy: np.ndarray) -> None:
    if gy.shape != tape.outputs.shape:
        raise ValueError(f"loss grads {gy.shape} do not match outputs {tape.outputs.shape}")


def guard_finite(step: int, *arrays) -> None:
    for a in arrays:
        finite = np.isfinite(a)
        if not finite.all():
            bad = np.nonzero(~finite.reshape(a.shape[0], -1).all(axis=1))[0]
            seq = int(bad[0])
            raise NonFiniteError(f"non-finite activation at sequence {seq}, step {step}",
                                 step=step, sequence=seq)
