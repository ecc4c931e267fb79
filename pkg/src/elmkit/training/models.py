from __future__ import annotations

from dataclasses import asdict, dataclass

from ..cells import init_elm, init_lif, init_lstm, init_snn
from ..numerics import make_rng

MODEL_KINDS = ("elm", "branch_elm", "lstm", "snn", "lif", "alif")


@dataclass
class ModelConfig:
    """Model hyperparameters; ELM defaults follow the recommended settings."""

    kind: str = "elm"
    d_m: int = 10
    d_mlp: int | None = None
    l_mlp: int = 1
    lam: float = 5.0
    tau_init: tuple[float, float] = (1.0, 150.0)
    tau_spacing: str = "log"
    tau_bounds: tuple[float, float] = (0.5, 1000.0)
    tau_s: float = 5.0
    w_s: float = 0.5
    variant: str = "original"
    d_tree: int | None = None
    d_brch: int | None = None
    hidden: int = 64
    chrono: bool = False
    t_max: float | None = None
    n_total: int = 500
    n_syn: int = 100
    tau_mem: float = 25.0
    lif_tau: float = 20.0
    tau_a: float = 200.0

    def __post_init__(self):
        self.tau_init = tuple(float(v) for v in self.tau_init)
        self.tau_bounds = tuple(float(v) for v in self.tau_bounds)
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.d_m < 1 or self.l_mlp < 0:
            raise ValueError("d_m must be >= 1 and l_mlp >= 0")
        lo, hi = self.tau_bounds
        if not 0 < lo < hi:
            raise ValueError(f"tau bounds must satisfy 0 < lo < hi, got {self.tau_bounds}")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.variant not in ("original", "improved"):
            raise ValueError(f"unknown ELM variant {self.variant!r}")
        if self.kind == "branch_elm" and (self.d_tree is None or self.d_brch is None):
            raise ValueError("branch_elm needs d_tree and d_brch")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tau_init"] = list(self.tau_init)
        d["tau_bounds"] = list(self.tau_bounds)
        return d


def build_model(cfg: ModelConfig, d_in: int, d_o: int, seed: int):
    """Fresh parameters; the same (cfg, shapes, seed) always gives the same model."""
    rng = make_rng(seed, "init", cfg.kind)
    if cfg.kind in ("elm", "branch_elm"):
        return init_elm(
            rng, d_in, cfg.d_m, d_o, d_mlp=cfg.d_mlp, l_mlp=cfg.l_mlp, lam=cfg.lam,
            tau_init=cfg.tau_init, tau_spacing=cfg.tau_spacing, tau_bounds=cfg.tau_bounds,
            tau_s=cfg.tau_s, w_s=cfg.w_s, variant=cfg.variant,
            branch=(cfg.d_tree, cfg.d_brch) if cfg.kind == "branch_elm" else None,
        )
    if cfg.kind == "lstm":
        return init_lstm(rng, d_in, cfg.hidden, d_o, chrono=cfg.chrono, t_max=cfg.t_max)
    if cfg.kind == "snn":
        return init_snn(rng, d_in, d_o, n_total=cfg.n_total, n_syn=cfg.n_syn, tau_mem=cfg.tau_mem)
    if d_o != 2:
        raise ValueError("single LIF/ALIF models only fit the two-output teacher task")
    return init_lif(rng, d_in, tau=cfg.lif_tau, adaptive=cfg.kind == "alif", tau_a=cfg.tau_a)
