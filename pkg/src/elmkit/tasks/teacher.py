"""Teacher-neuron fitting data: Poisson input spikes driving a LIF or ALIF neuron.

The teacher plays the role of the biophysical neuron: a model is trained to
predict its pre-reset membrane voltage and its output spikes from the
presynaptic raster alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..cells import AlifParams, LifParams
from ..numerics import make_rng
from .raster import SpikeRaster, bernoulli_spikes


@dataclass
class TeacherConfig:
    kind: str = "lif"  # "lif" | "alif"
    channels: int = 64
    rate_hz: float = 10.0
    inhibitory_fraction: float = 0.2
    dt: float = 1.0
    tau: float = 10.0
    # calibrated: the default LIF teacher fires at 6-10 Hz for 64 channels @ 10 Hz
    weight_scale: float = 10.5
    bias: float = 0.0
    threshold: float = 1.0
    v_reset: float = 0.0
    tau_a: float = 200.0
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lif", "alif"):
            raise ValueError(f"unknown teacher kind {self.kind!r}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def alif_teacher_config(**overrides) -> TeacherConfig:
    """Adapting teacher calibrated to fire at about 6 Hz under the default input."""
    return TeacherConfig(**{"kind": "alif", "weight_scale": 16.0, "strength": 0.5, "tau_a": 200.0,
                            **overrides})


@dataclass(frozen=True)
class TeacherTrace:
    raster: SpikeRaster
    voltage: np.ndarray
    spikes: np.ndarray

    def __post_init__(self):
        if not (self.raster.steps == self.voltage.shape[0] == self.spikes.shape[0]):
            raise ValueError("raster, voltage and spikes must have equal length")


def channel_signs(channels: int, seed: int, inhibitory_fraction: float = 0.2) -> np.ndarray:
    """Fixed E/I identity per channel: +1 excitatory, -1 inhibitory."""
    rng = make_rng(seed, "teacher", "signs")
    n_inh = int(round(inhibitory_fraction * channels))
    signs = np.ones(channels, dtype=np.int16)
    signs[rng.permutation(channels)[:n_inh]] = -1
    return signs


def make_teacher(cfg: TeacherConfig, seed: int) -> LifParams:
    """Teacher neuron; the weights do not depend on ``kind``, only the adaptation does."""
    rng = make_rng(seed, "teacher", "weights")
    w = cfg.weight_scale * rng.uniform(0.5, 1.5, size=cfg.channels) / np.sqrt(cfg.channels)
    common = dict(w=w, tau=cfg.tau, bias=cfg.bias, threshold=cfg.threshold, v_reset=cfg.v_reset)
    if cfg.kind == "alif":
        return AlifParams(**common, tau_a=cfg.tau_a, strength=cfg.strength)
    return LifParams(**common)


def simulate_teacher(p: LifParams, raster: SpikeRaster) -> tuple[np.ndarray, np.ndarray]:
    """Single-neuron simulation; returns (pre-reset voltage, spikes) per step."""
    drive = raster.values.astype(float) @ p.w + p.bias
    T = raster.steps
    k = float(np.exp(-raster.dt / p.tau))
    adaptive = isinstance(p, AlifParams)
    k_a = float(np.exp(-raster.dt / p.tau_a)) if adaptive else 0.0
    strength = float(p.strength) if adaptive else 0.0
    volt = np.empty(T)
    spikes = np.zeros(T)
    v = 0.0
    a = 0.0
    # scalar loop: same update as lif_step / alif_step, without array overhead
    for t in range(T):
        v_pre = k * v + (1.0 - k) * drive[t]
        volt[t] = v_pre
        if v_pre >= p.threshold + a:
            spikes[t] = 1.0
            v = p.v_reset
            a = k_a * a + strength
        else:
            v = v_pre
            a = k_a * a
    return volt, spikes


def gen_teacher_io(teacher: LifParams, channels: int, duration_ms: float, rates, seed: int,
                   dt: float = 1.0, inhibitory_fraction: float = 0.2,
                   stream: str = "train") -> TeacherTrace:
    """Poisson presynaptic input at ``rates`` (Hz, scalar or per channel) and the teacher's response.

    Channel signs depend only on ``seed``; ``stream`` selects independent
    input realizations (e.g. train vs test) for the same channels.
    """
    if duration_ms < 1000:
        raise ValueError("duration_ms must be >= 1000")
    if channels < 1:
        raise ValueError("channels must be >= 1")
    if np.shape(teacher.w) != (channels,):
        raise ValueError(f"teacher has {np.size(teacher.w)} input weights, expected {channels}")
    steps = int(round(duration_ms / dt))
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (channels,))
    rng = make_rng(seed, "teacher", "input", stream)
    spikes_in = bernoulli_spikes(rng, np.broadcast_to(rates, (steps, channels)), dt)
    raster = SpikeRaster(spikes_in * channel_signs(channels, seed, inhibitory_fraction), dt, 1)
    volt, spikes = simulate_teacher(teacher, raster)
    return TeacherTrace(raster, volt, spikes)


def teacher_trace(cfg: TeacherConfig, duration_ms: float, seed: int, stream: str = "train") -> TeacherTrace:
    return gen_teacher_io(make_teacher(cfg, seed), cfg.channels, duration_ms, cfg.rate_hz, seed,
                          dt=cfg.dt, inhibitory_fraction=cfg.inhibitory_fraction, stream=stream)


def cut_samples(trace: TeacherTrace, sample_ms: float) -> tuple[np.ndarray, np.ndarray]:
    """Split a long trace into consecutive samples: inputs (N, T, C), targets (N, T, 2)."""
    T = int(round(sample_ms / trace.raster.dt))
    n = trace.raster.steps // T
    inputs = trace.raster.values[: n * T].reshape(n, T, -1)
    targets = np.stack([trace.voltage[: n * T], trace.spikes[: n * T]], axis=-1).reshape(n, T, 2)
    return inputs, targets
