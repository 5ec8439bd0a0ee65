"""Three-term training objective.

Total = w_classifier * cross_entropy(actual, predicted)
      + w_discrepancy * mean_abs_diff(reference probs, adapted probs)
      + lam * sum_of_squared_fc_weights

All terms are built from engine ops, so the objective is differentiable
end to end through the compute graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import FC_WEIGHT_NAMES
from .tensor import Tensor, as_tensor

N_CLASSES = 4


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1e-4
    w_classifier: float = 1.0
    w_discrepancy: float = 1.0
    epsilon_log: float = 1e-12

    def __post_init__(self):
        for field in ("lam", "w_classifier", "w_discrepancy"):
            value = getattr(self, field)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{field} must be finite and non-negative, got {value}")


def _pair(p1, p2, op: str) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(p1), as_tensor(p2)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"{op} expects [batch, classes] inputs")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"{op}: batch size mismatch {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"{op}: class count mismatch {a.shape[1]} vs {b.shape[1]}")
    return a, b


def classifier_loss(actual, predicted, epsilon_log: float = 1e-12) -> Tensor:
    """Batch-mean cross entropy -sum_v actual(v) * log(predicted(v)).

    Predicted entries are clamped below at epsilon_log before the log, so a
    perfect one-hot match scores ~0 instead of producing -inf elsewhere.
    """
    p1, p2 = _pair(actual, predicted, "classifier_loss")
    n = p1.shape[0]
    logs = T.log(T.clamp_min(p2, epsilon_log))
    return T.scale(T.tsum(T.mul(p1, logs)), -1.0 / n)


def discrepancy_loss(p1, p2) -> Tensor:
    """Batch-mean of (1/K) * sum_k |p1_k - p2_k|; bounded by 2/K."""
    a, b = _pair(p1, p2, "discrepancy_loss")
    if a.shape[1] != N_CLASSES:
        raise ValueError(f"discrepancy_loss expects {N_CLASSES} classes, got {a.shape[1]}")
    n = a.shape[0]
    return T.scale(T.tsum(T.absolute(T.sub(a, b))), 1.0 / (N_CLASSES * n))


def l2_regularizer(params) -> Tensor:
    """Sum of squared entries of the three dense weight matrices only."""
    missing = [name for name in FC_WEIGHT_NAMES if name not in params]
    if missing:
        raise ValueError(f"params missing fc weights {missing}")
    total = None
    for name in FC_WEIGHT_NAMES:
        w = params[name]
        term = T.tsum(T.mul(w, w))
        total = term if total is None else T.add(total, term)
    return total


def overall_loss(cls, disc, reg, cfg: LossConfig) -> Tensor:
    """Weighted sum of the three terms.

    A term whose weight is exactly 0 may be passed as None; it then
    contributes neither value nor graph edges, which keeps zero-weight
    ablations bit-identical to pipelines that never compute the term.
    """
    terms = []
    for name, value, weight in (
        ("classifier", cls, cfg.w_classifier),
        ("discrepancy", disc, cfg.w_discrepancy),
        ("regularization", reg, cfg.lam),
    ):
        if value is None:
            if weight != 0.0:
                raise ValueError(f"{name} term is required when its weight is nonzero")
            continue
        value = as_tensor(value)
        if not np.isfinite(value.data).all():
            raise ValueError(f"{name} term is not finite: {float(value.data)}")
        if weight == 0.0:
            continue
        terms.append(value if weight == 1.0 else T.scale(value, weight))
    if not terms:
        raise ValueError("all loss terms have zero weight")
    total = terms[0]
    for term in terms[1:]:
        total = T.add(total, term)
    return total
