"""Rollout and surrogate-gradient reverse pass for the spiking baseline."""

from __future__ import annotations

import numpy as np

from ..cells.lif import triangle_surrogate
from ..cells.snn import SnnParams, snn_forward, snn_zero_state
from ..numerics import check_width
from .tape import Tape, check_loss_grads, check_tape, guard_finite, signature_of

KIND = "snn"


def rollout(p: SnnParams, inputs, dt, state0=None, masks=None):
    B, T, _ = inputs.shape
    check_width(inputs, p.n_in, "SNN rollout input")
    st = snn_zero_state(p, B) if state0 is None else state0
    first = st
    dense = p.dense_weights()
    ys = np.empty((B, T, p.n_out))
    recs = []
    n_spikes = 0.0
    for t in range(T):
        st, out, rec = snn_forward(p, st, inputs[:, t], float(dt[t]), dense=dense)
        guard_finite(t, st.v_r, st.v_o)
        ys[:, t] = out
        rec["z_r"] = st.z_r
        rec["z_o"] = st.z_o
        n_spikes += st.z_r.sum() + st.z_o.sum()
        recs.append(rec)
    tape = Tape(KIND, signature_of(p), inputs, dt, first, {"steps": recs, "dense": dense}, ys,
                extras={"final": st, "spike_count": n_spikes})
    return ys, tape


def backward(tape: Tape, p: SnnParams, gy: np.ndarray, spike_grad: float = 0.0):
    """``spike_grad`` is added to the gradient of every emitted spike (L1 penalty)."""
    check_tape(tape, p, KIND)
    check_loss_grads(tape, gy)
    Wr, Wo = tape.records["dense"]
    B = tape.inputs.shape[0]
    N_r, N_o, n_in = p.n_rec, p.n_out, p.n_in
    gWr = np.zeros_like(Wr)
    gWo = np.zeros_like(Wo)
    g_kr = np.zeros(N_r)
    g_ko = np.zeros(N_o)
    gv_r = np.zeros((B, N_r))
    gv_o = np.zeros((B, N_o))
    gz_r_next = np.zeros((B, N_r))
    gz_o_next = np.zeros((B, N_o))
    gout = np.zeros((B, N_o))
    g_tau_r = np.zeros(N_r)
    g_tau_o = np.zeros(N_o)
    R = p.reset * p.v_thr
    for t in range(tape.length - 1, -1, -1):
        r = tape.records["steps"][t]
        dt = float(tape.dt[t])
        k_r = np.exp(-dt / p.tau_r)
        k_o = np.exp(-dt / p.tau_o)
        gout = gout + gy[:, t]
        gz_o = gout + gz_o_next + spike_grad - R * gv_o
        g_vpre_o = gv_o + gz_o * triangle_surrogate(r["vpre_o"], p.v_thr, p.surrogate_width)
        gWo += g_vpre_o.T @ r["src_o"]
        g_src_o = g_vpre_o @ Wo
        g_ko += (g_vpre_o * r["v_o"]).sum(axis=0)
        gv_o = g_vpre_o * k_o
        gz_o_next = g_src_o[:, N_r:]
        gz_r = g_src_o[:, :N_r] + gz_r_next + spike_grad - R * gv_r
        g_vpre_r = gv_r + gz_r * triangle_surrogate(r["vpre_r"], p.v_thr, p.surrogate_width)
        gWr += g_vpre_r.T @ r["src_r"]
        g_src_r = g_vpre_r @ Wr
        g_kr += (g_vpre_r * r["v_r"]).sum(axis=0)
        gv_r = g_vpre_r * k_r
        gz_r_next = g_src_r[:, n_in:]
        gout = gout * np.exp(-dt / p.tau_out)
        g_tau_r += g_kr * k_r * dt / p.tau_r**2
        g_tau_o += g_ko * k_o * dt / p.tau_o**2
        g_kr[:] = 0.0
        g_ko[:] = 0.0

    def per_synapse(gdense, w, idx, sign):
        rows = np.arange(w.shape[0])[:, None]
        return gdense[rows, idx] * sign[idx] * (w > 0)

    return {
        "w_r": per_synapse(gWr, p.w_r, p.idx_r, p._sign_r),
        "w_o": per_synapse(gWo, p.w_o, p.idx_o, p._sign_o),
        "tau_r": g_tau_r,
        "tau_o": g_tau_o,
    }
