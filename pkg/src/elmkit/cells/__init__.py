"""Forward dynamics of every recurrent cell."""


from .elm import (
    BranchLayout,
    ElmParams,
    ElmState,
    branch_reduce,
    elm_step,
    init_elm,
    step_coefficients,
    theta_for_tau,
    zero_state,
)
from .lif import AlifParams, LifParams, alif_step, init_lif, lif_step, triangle_surrogate
from .lstm import LstmParams, chrono_biases, init_lstm, lstm_step
from .snn import SnnParams, SnnState, init_snn, snn_step, snn_zero_state


def count_params(p) -> int:
    """Number of trainable scalars.

    ELM counts the MLP, readout (with bias) and one timescale per memory
    unit; Branch-ELM adds its ``d_s`` synapse weights. Fixed quantities
    (``tau_s``, ``lam``, bounds, thresholds) are not counted.
    """
    return int(sum(a.size for a in p.trainable().values()))


def elm_param_formula(d_s: int, d_m: int, d_o: int, d_mlp: int | None = None,
                      l_mlp: int = 1, d_tree: int | None = None) -> int:
    """Closed-form trainable-parameter count of an ELM (Branch-ELM if ``d_tree``)."""
    d_mlp = 2 * d_m if d_mlp is None else d_mlp
    d_in = (d_tree if d_tree is not None else d_s) + d_m
    widths = [d_in] + [d_mlp] * l_mlp + [d_m]
    mlp = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    total = mlp + d_m * d_o + d_o + d_m
    if d_tree is not None:
        total += d_s
    return total


__all__ = [
    "AlifParams", "BranchLayout", "ElmParams", "ElmState", "LifParams", "LstmParams",
    "SnnParams", "SnnState", "alif_step", "branch_reduce", "chrono_biases", "count_params",
    "elm_param_formula", "elm_step", "init_elm", "init_lif", "init_lstm", "init_snn",
    "lif_step", "lstm_step", "snn_step", "snn_zero_state", "step_coefficients",
    "theta_for_tau", "triangle_surrogate", "zero_state",
]
