"""Rollout and reverse pass for the LSTM baseline."""

from __future__ import annotations

import numpy as np

from ..cells.lstm import LstmParams, lstm_forward
from ..numerics import batch_linear, check_width
from .tape import Tape, check_loss_grads, check_tape, guard_finite, signature_of

KIND = "lstm"


def draw_masks(p: LstmParams, batch: int, steps: int, rate: float, recurrent_rate: float, rng):
    """Per-step dropout on the readout input; one recurrent mask reused over all steps."""
    if rate <= 0 and recurrent_rate <= 0:
        return None
    H = p.hidden
    out = {}
    if rate > 0:
        out["out"] = (rng.random((steps, batch, H)) < 1 - rate) / (1 - rate)
    if recurrent_rate > 0:
        out["rec"] = (rng.random((batch, H)) < 1 - recurrent_rate) / (1 - recurrent_rate)
    return out


def rollout(p: LstmParams, inputs, dt, state0=None, masks=None):
    B, T, _ = inputs.shape
    check_width(inputs, p.d_in, "LSTM rollout input")
    H = p.hidden
    if state0 is None:
        state0 = (np.zeros((B, H)), np.zeros((B, H)))
    h, c = state0
    masks = masks or {}
    om, hm = masks.get("out"), masks.get("rec")
    ys = np.empty((B, T, p.d_o))
    recs = []
    for t in range(T):
        h, c, rec = lstm_forward(p, h, c, inputs[:, t], h_mask=hm)
        h_read = h if om is None else h * om[t]
        y = batch_linear(h_read, p.w_y, p.b_y)
        guard_finite(t, c, y)
        rec["h_read"] = h_read
        ys[:, t] = y
        recs.append(rec)
    tape = Tape(KIND, signature_of(p), inputs, dt, state0, {"steps": recs}, ys, masks or None,
                extras={"final": (h, c)})
    return ys, tape


def backward(tape: Tape, p: LstmParams, gy: np.ndarray) -> dict[str, np.ndarray]:
    check_tape(tape, p, KIND)
    check_loss_grads(tape, gy)
    H, D = p.hidden, p.d_in
    masks = tape.masks or {}
    om, hm = masks.get("out"), masks.get("rec")
    gW = np.zeros_like(p.W)
    gb = np.zeros_like(p.b)
    gw_y = np.zeros_like(p.w_y)
    gb_y = np.zeros_like(p.b_y)
    B = tape.inputs.shape[0]
    gh_next = np.zeros((B, H))
    gc_next = np.zeros((B, H))
    for t in range(tape.length - 1, -1, -1):
        r = tape.records["steps"][t]
        g = gy[:, t]
        gw_y += g.T @ r["h_read"]
        gb_y += g.sum(axis=0)
        g_read = g @ p.w_y
        gh = gh_next + (g_read if om is None else g_read * om[t])
        i, f, gg, o, tc = r["i"], r["f"], r["g"], r["o"], r["tc"]
        gc = gc_next + gh * o * (1.0 - tc * tc)
        ga = np.concatenate(
            [
                gc * gg * i * (1.0 - i),
                gc * r["c_prev"] * f * (1.0 - f),
                gc * i * (1.0 - gg * gg),
                gh * tc * o * (1.0 - o),
            ],
            axis=-1,
        )
        gW += ga.T @ r["z"]
        gb += ga.sum(axis=0)
        gz = ga @ p.W
        gh_next = gz[:, D:] if hm is None else gz[:, D:] * hm
        gc_next = gc * f
    return {"W": gW, "b": gb, "w_y": gw_y, "b_y": gb_y}
