"""Rollout and reverse pass for ELM / Branch-ELM."""

from __future__ import annotations

import numpy as np

from ..cells.elm import ElmParams, ElmState, elm_forward, step_coefficients
from ..numerics import check_width, sigmoid
from .tape import Tape, check_loss_grads, check_tape, guard_finite, signature_of

KIND = "elm"


def draw_masks(p: ElmParams, batch: int, steps: int, rate: float, rng) -> dict | None:
    """Inverted-dropout masks on the MLP hidden activations, fresh every step."""
    if rate <= 0 or p.l_mlp == 0:
        return None
    keep = 1.0 - rate
    hidden = [
        (rng.random((steps, batch, W.shape[0])) < keep) / keep for W in p.mlp_weights[:-1]
    ]
    return {"hidden": hidden}


def rollout(p: ElmParams, inputs: np.ndarray, dt: np.ndarray, state0: ElmState | None = None,
            masks: dict | None = None) -> tuple[np.ndarray, Tape]:
    B, T, C = inputs.shape
    check_width(inputs, p.d_s, "ELM rollout input")
    if state0 is None:
        state0 = ElmState(np.zeros((B, p.d_s)), np.zeros((B, p.d_m)))
    s, m = state0.s, state0.m
    cache: dict[float, dict] = {}
    ys = np.empty((B, T, p.d_o))
    recs = []
    for t in range(T):
        d = float(dt[t])
        coeffs = cache.get(d)
        if coeffs is None:
            coeffs = cache[d] = step_coefficients(p, d)
        hm = None if masks is None else [mk[t] for mk in masks["hidden"]]
        s, m, y, rec = elm_forward(p, s, m, inputs[:, t], coeffs, hidden_masks=hm)
        guard_finite(t, m, y)
        ys[:, t] = y
        recs.append(rec)
    records = {"steps": recs, "coeffs": cache}
    tape = Tape(KIND, signature_of(p), inputs, dt, state0, records, ys, masks,
                extras={"final": ElmState(s, m)})
    return ys, tape


def backward(tape: Tape, p: ElmParams, gy: np.ndarray) -> dict[str, np.ndarray]:
    check_tape(tape, p, KIND)
    check_loss_grads(tape, gy)
    n_layers = len(p.mlp_weights)
    gW = [np.zeros_like(W) for W in p.mlp_weights]
    gb = [np.zeros_like(b) for b in p.mlp_biases]
    gw_y = np.zeros_like(p.w_y)
    gb_y = np.zeros_like(p.b_y)
    g_tau = np.zeros(p.d_m)
    g_ws = np.zeros(p.d_s)
    d_feat = p.layout.d_tree if p.layout is not None else p.d_s
    B = tape.inputs.shape[0]
    gm_next = np.zeros((B, p.d_m))
    gs_next = np.zeros((B, p.d_s))
    masks = tape.masks
    steps = tape.records["steps"]
    cache = tape.records["coeffs"]
    for t in range(tape.length - 1, -1, -1):
        rec = steps[t]
        co = cache[float(tape.dt[t])]
        kappa_m, coef, tau_m, dt = co["kappa_m"], co["coef"], co["tau_m"], co["dt"]
        g = gy[:, t]
        gw_y += g.T @ rec["m"]
        gb_y += g.sum(axis=0)
        gm = gm_next + g @ p.w_y
        dm = rec["dm"]
        g_coef = (gm * dm).sum(axis=0)
        g_a = gm * coef * (1.0 - dm * dm)
        acts = rec["acts"]
        for i in range(n_layers - 1, -1, -1):
            h_in = acts[i]
            gW[i] += g_a.T @ h_in
            gb[i] += g_a.sum(axis=0)
            g_h = g_a @ p.mlp_weights[i]
            if i > 0:
                g_a = g_h * (h_in > 0)
                if masks is not None:
                    g_a = g_a * masks["hidden"][i - 1][t]
        g_feat = g_h[:, :d_feat]
        g_mk = gm + g_h[:, d_feat:]
        g_kappa = (g_mk * rec["m_prev"]).sum(axis=0)
        gm_next = g_mk * kappa_m
        if p.variant == "original":
            g_kappa = g_kappa - p.lam * g_coef
            g_tau += g_kappa * kappa_m * dt / tau_m**2
        else:
            k_lam = co["kappa_lam"]
            g_tau += g_kappa * kappa_m * dt / tau_m**2 - g_coef * k_lam * dt * p.lam / tau_m**2
        g_s = gs_next + (g_feat @ p._assign if p.layout is not None else g_feat)
        g_ws += (g_s * rec["x"]).sum(axis=0)
        gs_next = g_s * co["kappa_s"]

    lo, hi = p.tau_bounds
    sig = sigmoid(p.theta_m)
    grads = {"theta_m": g_tau * (hi - lo) * sig * (1.0 - sig)}
    for i in range(n_layers):
        grads[f"mlp_w{i}"] = gW[i]
        grads[f"mlp_b{i}"] = gb[i]
    grads["w_y"] = gw_y
    grads["b_y"] = gb_y
    if p.learn_w_s:
        grads["w_s"] = g_ws * (p.w_s > 0)
    return grads
