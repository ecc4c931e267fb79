from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpikeRaster:
    """Signed spike counts of shape (steps, channels).

    The sign of a channel encodes its excitatory (+) or inhibitory (-)
    identity; ``k`` bounds the magnitude of any entry.
    """

    values: np.ndarray
    dt: float
    k: int = 1

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("raster values must be (steps, channels)")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.values.size and np.abs(self.values).max() > self.k:
            raise ValueError(f"raster entries exceed the documented bound k={self.k}")

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def duration_ms(self) -> float:
        return self.steps * self.dt


def bernoulli_spikes(rng: np.random.Generator, rates_hz: np.ndarray, dt: float, what: str = "rates") -> np.ndarray:
    """At most one spike per bin, with probability ``rate * dt``."""
    p = np.asarray(rates_hz, dtype=float) * dt / 1000.0
    if np.any(p > 1.0):
        warnings.warn(f"{what} exceed one spike per {dt} ms bin; clipped to the raster range",
                      stacklevel=3)
        p = np.minimum(p, 1.0)
    return (rng.random(p.shape) < p).astype(np.int16)


def rebin(raster: SpikeRaster, bin_ms: float) -> SpikeRaster:
    """Sum counts over bins of ``bin_ms``, which must be a whole multiple of ``dt``."""
    ratio = bin_ms / raster.dt
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise ValueError(f"bin {bin_ms} ms is not a positive multiple of dt={raster.dt} ms")
    if factor == 1:
        return raster
    T, C = raster.values.shape
    n_bins = -(-T // factor)
    padded = np.zeros((n_bins * factor, C), dtype=raster.values.dtype)
    padded[:T] = raster.values
    summed = padded.reshape(n_bins, factor, C).sum(axis=1)
    return SpikeRaster(summed.astype(np.int16), float(bin_ms), raster.k * factor)


def concat(a: SpikeRaster, b: SpikeRaster) -> SpikeRaster:
    if a.channels != b.channels:
        raise ValueError(f"channel mismatch: {a.channels} vs {b.channels}")
    if a.dt != b.dt:
        raise ValueError(f"dt mismatch: {a.dt} vs {b.dt}")
    return SpikeRaster(np.concatenate([a.values, b.values]), a.dt, max(a.k, b.k))
