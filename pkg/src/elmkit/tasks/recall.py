from __future__ import annotations

import numpy as np

from ..numerics import make_rng
from ..sequence import SequenceBatch


def gen_delayed_recall(length: int, n_symbols: int, delay: int, seed: int, n: int = 256,
                       noise_channels: int = 4, noise_rate: float = 0.05,
                       dt: float = 1.0, cue_steps: int = 1) -> SequenceBatch:
    """Recall a cue after ``delay`` distractor steps.

    The cue is a one-hot input on one of ``n_symbols`` channels, held for
    ``cue_steps`` steps and ending at step ``length - 1 - delay``; the extra
    channels carry sparse signed noise. Targets are the cue indices, to be
    read at the final step.
    """
    if not 0 <= delay < length:
        raise ValueError(f"need 0 <= delay < length, got delay={delay}, length={length}")
    if not 1 <= cue_steps <= length - delay:
        raise ValueError(f"cue_steps must lie in [1, {length - delay}], got {cue_steps}")
    if n_symbols < 2:
        raise ValueError("n_symbols must be >= 2")
    rng = make_rng(seed, "recall", str(length), str(n_symbols), str(delay))
    labels = rng.integers(0, n_symbols, size=n)
    x = np.zeros((n, length, n_symbols + noise_channels))
    t0 = length - 1 - delay
    for t in range(t0 - cue_steps + 1, t0 + 1):
        x[np.arange(n), t, labels] = 1.0
    if noise_channels:
        fire = rng.random((n, length, noise_channels)) < noise_rate
        sign = np.where(rng.random((n, length, noise_channels)) < 0.5, -1.0, 1.0)
        x[:, :, n_symbols:] = fire * sign
    return SequenceBatch(x, dt, labels)
