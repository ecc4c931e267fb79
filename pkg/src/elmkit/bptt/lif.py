"""Rollout and surrogate-gradient reverse pass for LIF / ALIF models.

The model output at each step is ``[v_pre, v_pre - (threshold + a)]``: the
pre-reset membrane as voltage prediction and its distance to threshold as
spike logit. The hard threshold is differentiated with the triangular
surrogate, so these gradients are not exact derivatives of the forward map.
"""

from __future__ import annotations

import numpy as np

from ..cells.lif import AlifParams, LifParams, triangle_surrogate
from ..numerics import check_width
from .tape import Tape, check_loss_grads, check_tape, guard_finite, signature_of

KIND = "lif"


def rollout(p: LifParams, inputs, dt, state0=None, masks=None):
    B, T, _ = inputs.shape
    check_width(inputs, p.d_s, "LIF rollout input")
    adaptive = isinstance(p, AlifParams)
    if state0 is None:
        state0 = (np.zeros(B), np.zeros(B))
    v, a = state0
    drive = inputs @ p.w + p.bias  # (B, T)
    ys = np.empty((B, T, 2))
    vs, as_, vpres, spikes = [], [], [], []
    for t in range(T):
        k = np.exp(-dt[t] / p.tau)
        v_pre = k * v + (1.0 - k) * drive[:, t]
        thr = p.threshold + a
        spike = (v_pre >= thr).astype(float)
        vs.append(v)
        as_.append(a)
        vpres.append(v_pre)
        spikes.append(spike)
        ys[:, t, 0] = v_pre
        ys[:, t, 1] = v_pre - thr
        guard_finite(t, ys[:, t])
        v = np.where(spike > 0, p.v_reset, v_pre)
        if adaptive:
            a = np.exp(-dt[t] / p.tau_a) * a + p.strength * spike
    records = {"v": np.array(vs), "a": np.array(as_), "v_pre": np.array(vpres),
               "spike": np.array(spikes), "drive": drive}
    tape = Tape(KIND, signature_of(p), inputs, dt, state0, records, ys,
                extras={"final": (v, a)})
    return ys, tape


def backward(tape: Tape, p: LifParams, gy: np.ndarray) -> dict[str, np.ndarray]:
    check_tape(tape, p, KIND)
    check_loss_grads(tape, gy)
    adaptive = isinstance(p, AlifParams)
    R = tape.records
    B = tape.inputs.shape[0]
    gv = np.zeros(B)
    ga = np.zeros(B)
    g_drive = np.zeros((B, tape.length))
    g_tau = 0.0
    g_tau_a = 0.0
    for t in range(tape.length - 1, -1, -1):
        dt = tape.dt[t]
        k = np.exp(-dt / p.tau)
        v_pre, spike, a_prev = R["v_pre"][t], R["spike"][t], R["a"][t]
        thr = p.threshold + a_prev
        g_vpre = gy[:, t, 0] + gy[:, t, 1] + gv * (1.0 - spike)
        g_thr = -gy[:, t, 1]
        g_spike = gv * (p.v_reset - v_pre)
        ga_prev = np.zeros(B)
        if adaptive:
            ka = np.exp(-dt / p.tau_a)
            g_spike = g_spike + ga * p.strength
            g_tau_a += float((ga * a_prev).sum()) * ka * dt / p.tau_a**2
            ga_prev = ga * ka
        sg = triangle_surrogate(v_pre - thr, 0.0, p.surrogate_width)
        g_vpre = g_vpre + g_spike * sg
        g_thr = g_thr - g_spike * sg
        if adaptive:
            ga_prev = ga_prev + g_thr
        ga = ga_prev
        g_tau += float((g_vpre * (R["v"][t] - R["drive"][:, t])).sum()) * k * dt / p.tau**2
        g_drive[:, t] = g_vpre * (1.0 - k)
        gv = g_vpre * k
    grads = {
        "w": np.einsum("bt,btc->c", g_drive, tape.inputs),
        "tau": np.array([g_tau]),
        "bias": np.array([g_drive.sum()]),
    }
    if adaptive:
        grads["tau_a"] = np.array([g_tau_a])
    return grads
