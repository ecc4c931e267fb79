"""Expressive Leaky Memory cell and its branched variant.

One step of the dynamics, for synaptic traces ``s`` and memory units ``m``::

    s'  = k_s * s + relu(w_s) * x                 k_s = exp(-dt / tau_s)
    dm  = tanh(MLP([s' or branches(s'), k_m * m]))  k_m = exp(-dt / tau_m)
    m'  = k_m * m + c * dm
    y   = w_y @ m' + b_y

with ``c = lam * (1 - k_m)`` for the original update and
``c = 1 - exp(-dt * lam / tau_m)`` for the improved one. Memory timescales
are kept inside ``(lo, hi)`` through ``tau_m = lo + (hi - lo) * sigmoid(theta_m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from ..numerics import (
    DTYPE,
    NonFiniteError,
    ShapeError,
    batch_linear,
    check_width,
    kaiming_uniform_init,
    logit,
    sigmoid,
)

Variant = Literal["original", "improved"]


@dataclass(frozen=True)
class BranchLayout:
    """Equally spaced, possibly overlapping windows of ``d_brch`` synapses."""

    d_s: int
    d_tree: int
    d_brch: int
    window_starts: tuple[int, ...]

    def __post_init__(self):
        if len(self.window_starts) != self.d_tree:
            raise ValueError("one window start per branch required")
        prev = 0
        for start in self.window_starts:
            if start < 0 or start + self.d_brch > self.d_s:
                raise ValueError(
                    f"branch window [{start}, {start + self.d_brch}) outside [0, {self.d_s})"
                )
            if start < prev:
                raise ValueError("window starts must be nondecreasing")
            prev = start

    @classmethod
    def equally_spaced(cls, d_s: int, d_tree: int, d_brch: int) -> "BranchLayout":
        if d_tree < 1 or d_brch < 1:
            raise ValueError("d_tree and d_brch must be >= 1")
        if d_brch > d_s:
            raise ValueError(f"d_brch={d_brch} exceeds d_s={d_s}")
        if d_tree == 1:
            starts = (0,)
        else:
            stride = (d_s - d_brch) / (d_tree - 1)
            # round-half-even is fine: starts only need to be deterministic
            starts = tuple(int(round(j * stride)) for j in range(d_tree))
        return cls(d_s, d_tree, d_brch, starts)

    @property
    def assignment(self) -> np.ndarray:
        """0/1 matrix of shape (d_tree, d_s); row j marks window j."""
        A = np.zeros((self.d_tree, self.d_s), dtype=DTYPE)
        for j, start in enumerate(self.window_starts):
            A[j, start : start + self.d_brch] = 1.0
        return A


def branch_reduce(layout: BranchLayout, s: np.ndarray) -> np.ndarray:
    """Sum synaptic traces inside each branch window.

    Traces already carry the synapse weights, so no weighting happens here.
    """
    s = np.asarray(s, dtype=DTYPE)
    check_width(s, layout.d_s, "branch_reduce")
    return s @ layout.assignment.T


@dataclass(frozen=True)
class ElmParams:
    w_s: np.ndarray  # unconstrained; the dynamics use relu(w_s)
    tau_s: np.ndarray
    theta_m: np.ndarray
    tau_bounds: tuple[float, float]
    mlp_weights: tuple[np.ndarray, ...]
    mlp_biases: tuple[np.ndarray, ...]
    w_y: np.ndarray
    b_y: np.ndarray
    lam: float = 5.0
    variant: Variant = "original"
    layout: BranchLayout | None = None
    learn_w_s: bool = False
    _assign: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lo, hi = self.tau_bounds
        if not 0 < lo < hi:
            raise ValueError(f"tau_bounds must satisfy 0 < lo < hi, got {self.tau_bounds}")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.variant not in ("original", "improved"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if len(self.mlp_weights) != len(self.mlp_biases) or not self.mlp_weights:
            raise ShapeError("mlp needs matching, non-empty weight and bias lists")
        d_s = self.w_s.shape[0]
        if self.tau_s.shape != (d_s,):
            raise ShapeError("tau_s must have one entry per synapse")
        if np.any(self.tau_s <= 0):
            raise ValueError("tau_s must be > 0")
        d_in = self.layout.d_tree if self.layout is not None else d_s
        if self.layout is not None and self.layout.d_s != d_s:
            raise ShapeError("branch layout built for a different synapse count")
        width = d_in + self.d_m
        for W, b in zip(self.mlp_weights, self.mlp_biases):
            if W.shape[1] != width or b.shape != (W.shape[0],):
                raise ShapeError(f"mlp layer {W.shape} does not accept width {width}")
            width = W.shape[0]
        if width != self.d_m:
            raise ShapeError(f"mlp output width {width} != d_m {self.d_m}")
        if self.w_y.shape[1] != self.d_m or self.b_y.shape != (self.w_y.shape[0],):
            raise ShapeError("readout shape mismatch")
        if self.layout is not None and self._assign is None:
            object.__setattr__(self, "_assign", self.layout.assignment)

    @property
    def d_s(self) -> int:
        return self.w_s.shape[0]

    @property
    def d_m(self) -> int:
        return self.theta_m.shape[0]

    @property
    def d_o(self) -> int:
        return self.w_y.shape[0]

    @property
    def l_mlp(self) -> int:
        return len(self.mlp_weights) - 1

    @property
    def d_mlp(self) -> int:
        return self.mlp_weights[0].shape[0] if self.l_mlp > 0 else 0

    @property
    def tau_m(self) -> np.ndarray:
        lo, hi = self.tau_bounds
        return lo + (hi - lo) * sigmoid(self.theta_m)

    @property
    def w_s_eff(self) -> np.ndarray:
        return np.maximum(self.w_s, 0.0)

    def trainable(self) -> dict[str, np.ndarray]:
        out = {"theta_m": self.theta_m}
        for i, (W, b) in enumerate(zip(self.mlp_weights, self.mlp_biases)):
            out[f"mlp_w{i}"] = W
            out[f"mlp_b{i}"] = b
        out["w_y"] = self.w_y
        out["b_y"] = self.b_y
        if self.learn_w_s:
            out["w_s"] = self.w_s
        return out

    def with_trainable(self, arrays: dict[str, np.ndarray]) -> "ElmParams":
        n = len(self.mlp_weights)
        return replace(
            self,
            theta_m=arrays.get("theta_m", self.theta_m),
            mlp_weights=tuple(arrays.get(f"mlp_w{i}", self.mlp_weights[i]) for i in range(n)),
            mlp_biases=tuple(arrays.get(f"mlp_b{i}", self.mlp_biases[i]) for i in range(n)),
            w_y=arrays.get("w_y", self.w_y),
            b_y=arrays.get("b_y", self.b_y),
            w_s=arrays.get("w_s", self.w_s) if self.learn_w_s else self.w_s,
        )


@dataclass(frozen=True)
class ElmState:
    s: np.ndarray
    m: np.ndarray


def theta_for_tau(tau, bounds: tuple[float, float]) -> np.ndarray:
    """Invert the sigmoid bounding so that ``tau_m(theta) == tau``.

    Targets on (or outside) a bound are pulled 0.1% of the range inside it.
    """
    lo, hi = bounds
    frac = (np.asarray(tau, dtype=DTYPE) - lo) / (hi - lo)
    frac = np.clip(frac, 1e-3, 1 - 1e-3)
    return logit(frac)


def tau_init_targets(d_m: int, lo: float, hi: float, spacing: str = "log") -> np.ndarray:
    if d_m == 1:
        return np.array([np.sqrt(lo * hi) if spacing == "log" else 0.5 * (lo + hi)])
    if spacing == "log":
        return np.logspace(np.log10(lo), np.log10(hi), d_m)
    if spacing == "linear":
        return np.linspace(lo, hi, d_m)
    raise ValueError(f"unknown tau spacing {spacing!r}")


def init_elm(
    rng: np.random.Generator,
    d_s: int,
    d_m: int,
    d_o: int,
    *,
    d_mlp: int | None = None,
    l_mlp: int = 1,
    lam: float = 5.0,
    tau_init: tuple[float, float] = (1.0, 150.0),
    tau_spacing: str = "log",
    tau_bounds: tuple[float, float] = (0.5, 1000.0),
    tau_s: float = 5.0,
    w_s: float = 0.5,
    variant: Variant = "original",
    branch: tuple[int, int] | None = None,
) -> ElmParams:
    """Fresh ELM parameters with Kaiming-uniform MLP and readout weights.

    ``branch=(d_tree, d_brch)`` builds a Branch-ELM, whose synapse weights
    are learnable.
    """
    d_mlp = 2 * d_m if d_mlp is None else d_mlp
    layout = BranchLayout.equally_spaced(d_s, *branch) if branch is not None else None
    d_in = layout.d_tree if layout is not None else d_s
    widths = [d_in + d_m] + [d_mlp] * l_mlp + [d_m]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(kaiming_uniform_init(rng, fan_in, fan_out))
        bound = 1.0 / np.sqrt(fan_in)
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    w_y = kaiming_uniform_init(rng, d_m, d_o)
    b_y = rng.uniform(-1.0 / np.sqrt(d_m), 1.0 / np.sqrt(d_m), size=d_o)
    theta = theta_for_tau(tau_init_targets(d_m, *tau_init, spacing=tau_spacing), tau_bounds)
    return ElmParams(
        w_s=np.full(d_s, float(w_s)),
        tau_s=np.full(d_s, float(tau_s)),
        theta_m=theta,
        tau_bounds=(float(tau_bounds[0]), float(tau_bounds[1])),
        mlp_weights=tuple(weights),
        mlp_biases=tuple(biases),
        w_y=w_y,
        b_y=b_y,
        lam=float(lam),
        variant=variant,
        layout=layout,
        learn_w_s=layout is not None,
    )


def zero_state(p: ElmParams, batch: int | None = None) -> ElmState:
    shape = () if batch is None else (batch,)
    return ElmState(np.zeros(shape + (p.d_s,)), np.zeros(shape + (p.d_m,)))


def step_coefficients(p: ElmParams, dt: float) -> dict[str, np.ndarray]:
    """Everything in one step that depends on ``dt`` and the timescales only."""
    tau_m = p.tau_m
    kappa_m = np.exp(-dt / tau_m)
    # 1 - kappa (not expm1) so kappa*m + coef rounds to at most lam
    if p.variant == "original":
        kappa_lam = None
        coef = p.lam * (1.0 - kappa_m)
    else:
        kappa_lam = np.exp(-dt * p.lam / tau_m)
        coef = 1.0 - kappa_lam
    return {
        "dt": dt,
        "kappa_s": np.exp(-dt / p.tau_s),
        "w_s": p.w_s_eff,
        "tau_m": tau_m,
        "kappa_m": kappa_m,
        "kappa_lam": kappa_lam,
        "coef": coef,
        # |m| bound from a zero start: lam, or max(lam, 1) for the improved rule
        "m_bound": p.lam if p.variant == "original" else max(p.lam, 1.0),
    }


def elm_forward(p: ElmParams, s, m, x, coeffs, hidden_masks=None):
    """One step, returning ``(s', m', y, record)``; the record feeds the backward pass."""
    s_new = coeffs["kappa_s"] * s + coeffs["w_s"] * x
    mk = coeffs["kappa_m"] * m
    feat = s_new @ p._assign.T if p.layout is not None else s_new
    h = np.concatenate([feat, mk], axis=-1)
    acts = [h]
    pre = []
    n = len(p.mlp_weights)
    for i, (W, b) in enumerate(zip(p.mlp_weights, p.mlp_biases)):
        a = batch_linear(h, W, b)
        if i < n - 1:
            pre.append(a)
            h = np.maximum(a, 0.0)
            if hidden_masks is not None:
                h = h * hidden_masks[i]
            acts.append(h)
    dm = np.tanh(a)
    m_new = mk + coeffs["coef"] * dm
    # Exact arithmetic never leaves [-lim, lim]; the clip only removes 1-ulp
    # rounding overshoot, so the backward pass treats it as the identity.
    lim = np.maximum(coeffs["m_bound"], np.abs(m))
    m_new = np.clip(m_new, -lim, lim)
    y = batch_linear(m_new, p.w_y, p.b_y)
    rec = {"x": x, "m_prev": m, "acts": acts, "pre": pre, "dm": dm, "m": m_new}
    return s_new, m_new, y, rec


def elm_step(p: ElmParams, st: ElmState, x, dt: float) -> tuple[ElmState, np.ndarray]:
    """Advance one step of ``dt`` milliseconds. Works on single or batched vectors."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=DTYPE)
    check_width(x, p.d_s, "elm_step input")
    check_width(st.s, p.d_s, "elm_step traces")
    check_width(st.m, p.d_m, "elm_step memory")
    s_new, m_new, y, _ = elm_forward(p, st.s, st.m, x, step_coefficients(p, dt))
    if not (np.all(np.isfinite(m_new)) and np.all(np.isfinite(y))):
        raise NonFiniteError("non-finite ELM state")
    return ElmState(s_new, m_new), y
