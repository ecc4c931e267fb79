from __future__ import annotations

import numpy as np

from ..numerics import log_softmax, sigmoid

LOGIT_CLAMP = 30.0


def burn_in_mask(steps: int, burn_in_steps: int) -> np.ndarray:
    if not 0 <= burn_in_steps < steps:
        raise ValueError(f"burn-in of {burn_in_steps} steps leaves nothing of a {steps}-step sequence")
    mask = np.ones(steps, dtype=bool)
    mask[:burn_in_steps] = False
    return mask


def neuronio_loss(pred_voltage: np.ndarray, pred_spike_logit: np.ndarray, targets: np.ndarray,
                  burn_in_steps: int, voltage_scale: float = 1.0):
    """Equal-weight BCE (spikes) + MSE (voltage), averaged over post-burn-in steps.

    Shapes: predictions (B, T), targets (B, T, 2) holding (voltage, spike).
    The target voltage is multiplied by ``voltage_scale`` before the MSE.
    Returns ``(loss, d_loss/d_voltage, d_loss/d_logit)``.
    """
    pred_voltage = np.asarray(pred_voltage, dtype=float)
    z = np.asarray(pred_spike_logit, dtype=float)
    if pred_voltage.shape != z.shape or targets.shape != pred_voltage.shape + (2,):
        raise ValueError("prediction and target shapes disagree")
    B, T = z.shape
    mask = burn_in_mask(T, burn_in_steps)[None, :]
    n = B * int(mask.sum())
    v_target = voltage_scale * targets[..., 0]
    spikes = targets[..., 1]

    zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    bce = np.logaddexp(0.0, zc) - spikes * zc
    err = pred_voltage - v_target
    loss = float(np.sum(np.where(mask, bce + err**2, 0.0)) / n)

    inside = np.abs(z) < LOGIT_CLAMP
    g_logit = np.where(mask & inside, sigmoid(zc) - spikes, 0.0) / n
    g_volt = np.where(mask, 2.0 * err, 0.0) / n
    return loss, g_volt, g_logit


def last_step_ce(logits_T: np.ndarray, classes: np.ndarray):
    """Mean softmax cross-entropy of (B, K) final-step logits; returns (loss, grad)."""
    logits_T = np.atleast_2d(np.asarray(logits_T, dtype=float))
    classes = np.atleast_1d(np.asarray(classes))
    B, K = logits_T.shape
    if classes.shape != (B,):
        raise ValueError("one class index per sequence required")
    if np.any(classes < 0) or np.any(classes >= K):
        raise ValueError(f"class index outside 0..{K - 1}")
    lp = log_softmax(logits_T)
    rows = np.arange(B)
    loss = float(-lp[rows, classes].mean())
    grad = np.exp(lp)
    grad[rows, classes] -= 1.0
    return loss, grad / B
