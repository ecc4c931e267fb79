"""Synthetic spoken-digit stand-in: cochlea-like multi-band spike templates.

Each digit owns a fixed template of a few frequency bands whose centre
drifts over time; samples are Poisson draws from that template. Channel
positions are expressed as fractions so a template renders at any channel
count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..numerics import make_rng
from .raster import SpikeRaster, bernoulli_spikes, concat

N_DIGITS = 10
N_SUMS = 2 * (N_DIGITS - 1) + 1
DIGIT_MS = 1000.0
TEMPLATE_SEED = 1337
# bands are cut at this many widths; channels beyond every band never spike
BAND_CUTOFF = 3.0


@dataclass(frozen=True)
class Band:
    start: float  # centre at onset, fraction of the channel axis
    end: float  # centre at offset
    width: float  # Gaussian width, fraction of the channel axis
    peak_hz: float
    onset: float  # fraction of the duration
    offset: float


@dataclass(frozen=True)
class DigitTemplate:
    label: int
    bands: tuple[Band, ...]

    def rates(self, channels: int, steps: int) -> np.ndarray:
        """Firing rate in Hz, shape (steps, channels), evaluated at bin centres."""
        t = (np.arange(steps) + 0.5) / steps
        ch = (np.arange(channels) + 0.5) / channels
        out = np.zeros((steps, channels))
        for b in self.bands:
            span = b.offset - b.onset
            u = np.clip((t - b.onset) / span, 0.0, 1.0)
            active = (t >= b.onset) & (t <= b.offset)
            env = np.where(active, np.sin(np.pi * u) ** 2, 0.0)
            centre = b.start + (b.end - b.start) * u
            z = (ch[None, :] - centre[:, None]) / b.width
            profile = np.where(np.abs(z) <= BAND_CUTOFF, np.exp(-0.5 * z**2), 0.0)
            out += b.peak_hz * env[:, None] * profile
        return out


@lru_cache(maxsize=None)
def digit_template(label: int) -> DigitTemplate:
    if not 0 <= label < N_DIGITS:
        raise ValueError(f"label must be in 0..{N_DIGITS - 1}, got {label}")
    rng = make_rng(TEMPLATE_SEED, "digit-template", str(label))
    n_bands = int(rng.integers(2, 5))
    bands = []
    for _ in range(n_bands):
        onset = float(rng.uniform(0.0, 0.4))
        bands.append(Band(
            start=float(rng.uniform(0.1, 0.9)),
            end=float(rng.uniform(0.1, 0.9)),
            width=float(rng.uniform(0.03, 0.08)),
            peak_hz=float(rng.uniform(40.0, 120.0)),
            onset=onset,
            offset=float(min(1.0, onset + rng.uniform(0.3, 0.6))),
        ))
    return DigitTemplate(label, tuple(bands))


@dataclass(frozen=True)
class DigitSample:
    raster: SpikeRaster
    label: int


@dataclass(frozen=True)
class AddingSample:
    raster: SpikeRaster
    label: int


def gen_digit(label: int, channels: int, duration_ms: float = DIGIT_MS, dt: float = 1.0,
              seed: int = 0) -> DigitSample:
    steps = int(round(duration_ms / dt))
    rates = digit_template(label).rates(channels, steps)
    rng = make_rng(seed, "digit", str(label))
    spikes = bernoulli_spikes(rng, rates, dt, what="template rates")
    return DigitSample(SpikeRaster(spikes, dt, 1), label)


def make_adding(d1: DigitSample, d2: DigitSample) -> AddingSample:
    """Two digits back to back; the boundary is not marked in the input."""
    return AddingSample(concat(d1.raster, d2.raster), d1.label + d2.label)


def gen_adding(n: int, channels: int, seed: int, duration_ms: float = DIGIT_MS,
               dt: float = 1.0) -> list[AddingSample]:
    """``n`` adding samples with independently and uniformly drawn digits."""
    rng = make_rng(seed, "adding", "labels")
    labels = rng.integers(0, N_DIGITS, size=(n, 2))
    sample_seeds = rng.integers(0, 2**31 - 1, size=(n, 2))
    return [
        make_adding(gen_digit(int(a), channels, duration_ms, dt, int(sa)),
                    gen_digit(int(b), channels, duration_ms, dt, int(sb)))
        for (a, b), (sa, sb) in zip(labels, sample_seeds)
    ]
