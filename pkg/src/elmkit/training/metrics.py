from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FPRS = (0.001, 0.01, 0.1)


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels.astype(bool)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == pos.size:
        raise ValueError("AUC is undefined with a single class present")
    return scores, pos


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    uniq, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    return ((ends - counts + 1 + ends) / 2.0)[inv]


def auc(scores, labels) -> float:
    """Rank statistic; a tied positive/negative pair counts one half."""
    scores, pos = _binary(scores, labels)
    ranks = average_ranks(scores)
    n_pos = pos.sum()
    n_neg = pos.size - n_pos
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def tpr_at_fpr(scores, labels, fpr: float) -> float:
    """TPR at the threshold (predict positive when score >= threshold) with the largest FPR <= ``fpr``."""
    if not 0.0 < fpr < 1.0:
        raise ValueError("fpr must be in (0, 1)")
    scores, pos = _binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    # only the last index of each run of equal scores is a realizable threshold
    last = np.r_[s[1:] != s[:-1], True]
    fprs = fp[last] / (~pos).sum()
    tprs = tp[last] / pos.sum()
    ok = np.nonzero(fprs <= fpr)[0]
    return float(tprs[ok[-1]]) if ok.size else 0.0


def rmse(pred, target) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


def accuracy(logits, classes) -> float:
    return float(np.mean(np.argmax(logits, axis=-1) == np.asarray(classes)))


@dataclass
class MetricsReport:
    loss: float
    rmse: float | None = None
    auc: float | None = None
    accuracy: float | None = None
    tpr_at_fpr: dict[float, float] = field(default_factory=dict)
    curves: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for name in ("auc", "accuracy"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} outside [0, 1]: {v}")
        if self.rmse is not None and self.rmse < 0:
            raise ValueError("rmse must be >= 0")

    def to_dict(self) -> dict:
        return {"loss": self.loss, "rmse": self.rmse, "auc": self.auc, "accuracy": self.accuracy,
                "tpr_at_fpr": {str(k): v for k, v in self.tpr_at_fpr.items()}}
