"""Two-layer recurrent spiking network used as a baseline on spike-digit tasks.

A recurrent layer of ``N_r`` LIF neurons feeds an output layer of ``N_o``
neurons (one per class). Each neuron owns ``n_syn`` synapses; every synapse
picks its source from the previous layer with probability 0.9 and from the
neuron's own layer otherwise. Synapse weights are rectified, and spikes from
inhibitory neurons enter with a negative sign. On reaching ``v_thr`` a neuron
spikes and ``reset * v_thr`` is subtracted from its membrane. Output spikes
are low-pass filtered and the filtered trace is used as class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..numerics import DTYPE, check_width
from .lif import MIN_TAU


@dataclass(frozen=True)
class SnnParams:
    w_r: np.ndarray  # (N_r, n_syn), unconstrained; relu applied
    w_o: np.ndarray  # (N_o, n_syn)
    idx_r: np.ndarray  # sources in [inputs, recurrent layer]
    idx_o: np.ndarray  # sources in [recurrent layer, output layer]
    inhibitory: np.ndarray  # bool, length N_r + N_o
    tau_r: np.ndarray
    tau_o: np.ndarray
    n_in: int
    v_thr: float = 1.0
    reset: float = 0.9
    tau_out: float = 20.0
    surrogate_width: float = 1.0
    _sign_r: np.ndarray = field(default=None, repr=False, compare=False)
    _sign_o: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        N_r, N_o = self.n_rec, self.n_out
        if self.idx_r.shape != self.w_r.shape or self.idx_o.shape != self.w_o.shape:
            raise ValueError("connectivity and weight shapes differ")
        if self.idx_r.min() < 0 or self.idx_r.max() >= self.n_in + N_r:
            raise ValueError("recurrent-layer connectivity index out of range")
        if self.idx_o.min() < 0 or self.idx_o.max() >= N_r + N_o:
            raise ValueError("output-layer connectivity index out of range")
        if self.inhibitory.shape != (N_r + N_o,):
            raise ValueError("one inhibitory flag per neuron required")
        neuron_sign = np.where(self.inhibitory, -1.0, 1.0)
        object.__setattr__(self, "_sign_r", np.concatenate([np.ones(self.n_in), neuron_sign[:N_r]]))
        object.__setattr__(self, "_sign_o", neuron_sign)

    @property
    def n_rec(self) -> int:
        return self.w_r.shape[0]

    @property
    def n_out(self) -> int:
        return self.w_o.shape[0]

    def dense_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed, rectified per-synapse weights scattered into dense matrices."""
        return (
            _scatter(np.maximum(self.w_r, 0.0), self.idx_r, self._sign_r),
            _scatter(np.maximum(self.w_o, 0.0), self.idx_o, self._sign_o),
        )

    def trainable(self) -> dict[str, np.ndarray]:
        return {"w_r": self.w_r, "w_o": self.w_o, "tau_r": self.tau_r, "tau_o": self.tau_o}

    def with_trainable(self, arrays):
        upd = {k: arrays[k] for k in ("w_r", "w_o") if k in arrays}
        for k in ("tau_r", "tau_o"):
            if k in arrays:
                upd[k] = np.maximum(arrays[k], MIN_TAU)
        return replace(self, **upd)


def _scatter(w: np.ndarray, idx: np.ndarray, sign: np.ndarray) -> np.ndarray:
    n, k = w.shape
    dense = np.zeros((n, sign.shape[0]))
    rows = np.repeat(np.arange(n), k)
    np.add.at(dense, (rows, idx.ravel()), (w * sign[idx]).ravel())
    return dense


def init_snn(rng: np.random.Generator, n_in: int, n_out: int, *, n_total: int = 500,
             n_syn: int = 100, inhibitory_fraction: float = 0.2, tau_mem: float = 25.0,
             w_init: float | None = None, p_prev: float = 0.9, **kw) -> SnnParams:
    n_rec = n_total - n_out
    if n_rec < 1:
        raise ValueError("n_total must exceed n_out")
    w0 = 0.3 / np.sqrt(n_syn) if w_init is None else w_init

    def draw(n, n_prev, n_own, prev_offset, own_offset):
        from_prev = rng.random((n, n_syn)) < p_prev
        prev_idx = prev_offset + rng.integers(0, n_prev, size=(n, n_syn))
        own_idx = own_offset + rng.integers(0, n_own, size=(n, n_syn))
        return np.where(from_prev, prev_idx, own_idx)

    idx_r = draw(n_rec, n_in, n_rec, 0, n_in)
    idx_o = draw(n_out, n_rec, n_out, 0, n_rec)
    n_inh = int(round(inhibitory_fraction * n_total))
    inhibitory = np.zeros(n_total, dtype=bool)
    inhibitory[rng.permutation(n_total)[:n_inh]] = True
    return SnnParams(
        w_r=np.full((n_rec, n_syn), w0),
        w_o=np.full((n_out, n_syn), w0),
        idx_r=idx_r,
        idx_o=idx_o,
        inhibitory=inhibitory,
        tau_r=np.full(n_rec, tau_mem),
        tau_o=np.full(n_out, tau_mem),
        n_in=n_in,
        **kw,
    )


@dataclass(frozen=True)
class SnnState:
    v_r: np.ndarray
    z_r: np.ndarray
    v_o: np.ndarray
    z_o: np.ndarray
    out: np.ndarray


def snn_zero_state(p: SnnParams, batch: int | None = None) -> SnnState:
    b = () if batch is None else (batch,)
    return SnnState(
        np.zeros(b + (p.n_rec,)), np.zeros(b + (p.n_rec,)),
        np.zeros(b + (p.n_out,)), np.zeros(b + (p.n_out,)), np.zeros(b + (p.n_out,)),
    )


def snn_forward(p: SnnParams, st: SnnState, x, dt: float, dense=None):
    Wr, Wo = p.dense_weights() if dense is None else dense
    src_r = np.concatenate([x, st.z_r], axis=-1)
    k_r = np.exp(-dt / p.tau_r)
    vpre_r = k_r * st.v_r + src_r @ Wr.T
    z_r = (vpre_r >= p.v_thr).astype(DTYPE)
    src_o = np.concatenate([z_r, st.z_o], axis=-1)
    k_o = np.exp(-dt / p.tau_o)
    vpre_o = k_o * st.v_o + src_o @ Wo.T
    z_o = (vpre_o >= p.v_thr).astype(DTYPE)
    out = np.exp(-dt / p.tau_out) * st.out + z_o
    new = SnnState(vpre_r - p.reset * p.v_thr * z_r, z_r, vpre_o - p.reset * p.v_thr * z_o, z_o, out)
    rec = {"src_r": src_r, "src_o": src_o, "vpre_r": vpre_r, "vpre_o": vpre_o,
           "v_r": st.v_r, "v_o": st.v_o}
    return new, out, rec


def snn_step(p: SnnParams, st: SnnState, x, dt: float):
    """Returns ``(state', logits)``; logits are the filtered output spike trains."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=DTYPE)
    check_width(x, p.n_in, "snn_step input")
    new, out, _ = snn_forward(p, st, x, dt)
    return new, out
