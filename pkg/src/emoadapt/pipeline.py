"""Two-phase training workflow.

Phase 1 (pretrain): fresh weights, source-domain data, cross-entropy plus
L2 only. Phase 2 (adapt): weights start from the phase-1 checkpoint and
train on target-domain data with the full objective, where a frozen copy of
the phase-1 model supplies the reference distribution for the discrepancy
term. The frozen copy never receives updates.

Determinism: (dataset, settings, seed) fix every checkpoint byte. Epoch
shuffles and per-step dropout masks derive from the run seed alone, so two
runs with equal inputs produce identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import CLASS_NAMES
from .checkpoint import Checkpoint, CheckpointError
from .data import Dataset, DataError
from .losses import (
    LossConfig,
    classifier_loss,
    discrepancy_loss,
    l2_regularizer,
    overall_loss,
)
from .model import AttentionCnn
from .optim import AdamState, adam_step
from .rng import Rng, derive_key
from .tensor import Tensor, zero_grads


class NumericError(Exception):
    """Training produced a non-finite loss."""


@dataclass
class TrainSettings:
    epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class LogRow:
    epoch: int
    split: str
    loss_total: float
    loss_cls: float
    loss_disc: float
    loss_reg: float
    accuracy: float


LOG_HEADER = "epoch,split,loss_total,loss_cls,loss_disc,loss_reg,accuracy"


def log_csv(rows: list[LogRow]) -> str:
    lines = [LOG_HEADER]
    for r in rows:
        lines.append(
            f"{r.epoch},{r.split},{r.loss_total:.10g},{r.loss_cls:.10g},"
            f"{r.loss_disc:.10g},{r.loss_reg:.10g},{r.accuracy:.10g}"
        )
    return "\n".join(lines) + "\n"


def _term_value(t) -> float:
    value = float(t.data)
    return value


def train_run(
    model: AttentionCnn,
    params: dict[str, Tensor],
    dataset: Dataset,
    settings: TrainSettings,
    frozen_params: dict[str, Tensor] | None = None,
) -> tuple[dict[str, Tensor], list[LogRow], int]:
    """Adam over the configured objective; returns (params, log rows, steps).

    Terms whose weight is exactly zero are never computed, so a zero-weight
    run executes the identical op sequence as one that lacks the term.
    """
    n = len(dataset)
    if n == 0:
        raise DataError("training dataset is empty")
    if dataset.labels.min() < 0 or dataset.labels.max() >= len(CLASS_NAMES):
        raise DataError("dataset labels outside the 4-class set")
    cfg = settings.loss
    use_disc = frozen_params is not None and cfg.w_discrepancy != 0.0
    use_reg = cfg.lam != 0.0
    dtype = params["conv1"].dtype
    onehot = np.eye(len(CLASS_NAMES), dtype=dtype)[dataset.labels]

    state = AdamState.for_params(
        params, lr=settings.lr, beta1=settings.beta1,
        beta2=settings.beta2, eps=settings.eps,
    )
    rows: list[LogRow] = []
    step = 0
    for epoch in range(1, settings.epochs + 1):
        perm = Rng(settings.seed, "shuffle", epoch).permutation(n)
        sums = np.zeros(4)
        correct = 0
        for lo in range(0, n, settings.batch_size):
            idx = perm[lo:lo + settings.batch_size]
            x = dataset.images[idx]
            y = dataset.labels[idx]

            # non-finite intermediates are converted to NumericError below,
            # so numpy's per-op warnings would only duplicate the diagnostic
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                p2 = model.forward(
                    params, x, training=True,
                    seed=derive_key(settings.seed, "dropout", step),
                )
                cls = classifier_loss(onehot[idx], p2, cfg.epsilon_log)
                disc = None
                if use_disc:
                    p1 = model.forward(frozen_params, x, training=False)
                    disc = discrepancy_loss(p1, p2)
                reg = l2_regularizer(params) if use_reg else None

            for name, term in (("classifier", cls), ("discrepancy", disc),
                               ("regularization", reg)):
                if term is not None and not np.isfinite(term.data):
                    raise NumericError(
                        f"{name} loss is not finite at epoch {epoch}, step {step}"
                    )
            loss = overall_loss(cls, disc, reg, cfg)

            zero_grads(params)
            loss.backward()
            params, state = adam_step(
                params, {k: t.grad for k, t in params.items()}, state
            )
            step += 1

            bs = len(idx)
            sums += bs * np.array([
                _term_value(loss), _term_value(cls),
                _term_value(disc) if disc is not None else 0.0,
                _term_value(reg) if reg is not None else 0.0,
            ])
            correct += int((np.argmax(p2.data, axis=1) == y).sum())
        rows.append(LogRow(
            epoch=epoch, split="train",
            loss_total=sums[0] / n, loss_cls=sums[1] / n,
            loss_disc=sums[2] / n, loss_reg=sums[3] / n,
            accuracy=correct / n,
        ))
    return params, rows, step


def params_to_checkpoint(
    params: dict[str, Tensor], phase: str, step: int, digest: str, seed: int
) -> Checkpoint:
    return Checkpoint(
        tensors={k: np.array(t.data, copy=True) for k, t in params.items()},
        phase=phase,
        step=step,
        class_names=list(CLASS_NAMES),
        config_digest=digest,
        seed=seed,
    )


def params_from_checkpoint(
    ckpt: Checkpoint, model: AttentionCnn, requires_grad: bool
) -> dict[str, Tensor]:
    if list(ckpt.class_names) != list(CLASS_NAMES):
        raise CheckpointError(
            f"checkpoint class names {ckpt.class_names} do not match {list(CLASS_NAMES)}"
        )
    shapes = model.param_shapes()
    missing = sorted(set(shapes) - set(ckpt.tensors))
    extra = sorted(set(ckpt.tensors) - set(shapes))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint tensors do not match the model: missing {missing}, "
            f"unexpected {extra}"
        )
    params: dict[str, Tensor] = {}
    for name, shape in shapes.items():
        arr = ckpt.tensors[name]
        if tuple(arr.shape) != shape:
            raise CheckpointError(
                f"tensor {name!r} has shape {arr.shape}, model expects {shape}"
            )
        params[name] = Tensor(arr.copy(), requires_grad=requires_grad)
    return params


def pretrain(
    model: AttentionCnn, dataset: Dataset, settings: TrainSettings, digest: str
) -> tuple[Checkpoint, list[LogRow]]:
    """Phase 1: cross-entropy (+ L2) on the source domain, fresh weights."""
    cfg = settings.loss
    phase1 = TrainSettings(
        epochs=settings.epochs, batch_size=settings.batch_size,
        lr=settings.lr, beta1=settings.beta1, beta2=settings.beta2,
        eps=settings.eps, seed=settings.seed,
        loss=LossConfig(
            lam=cfg.lam, w_classifier=cfg.w_classifier,
            w_discrepancy=0.0, epsilon_log=cfg.epsilon_log,
        ),
    )
    params = model.init_params(settings.seed)
    params, rows, step = train_run(model, params, dataset, phase1)
    return params_to_checkpoint(params, "source", step, digest, settings.seed), rows


def adapt(
    model: AttentionCnn,
    dataset: Dataset,
    source_ckpt: Checkpoint,
    settings: TrainSettings,
    digest: str,
) -> tuple[Checkpoint, list[LogRow]]:
    """Phase 2: full objective on the target domain, weights from phase 1."""
    if source_ckpt.phase != "source":
        raise CheckpointError(
            f"adaptation requires a source-phase checkpoint, got phase "
            f"{source_ckpt.phase!r}"
        )
    if source_ckpt.config_digest != digest:
        raise CheckpointError(
            f"checkpoint config digest {source_ckpt.config_digest[:12]}... does "
            f"not match the current config {digest[:12]}..."
        )
    params = params_from_checkpoint(source_ckpt, model, requires_grad=True)
    frozen = params_from_checkpoint(source_ckpt, model, requires_grad=False)
    params, rows, step = train_run(model, params, dataset, settings, frozen)
    return params_to_checkpoint(params, "adapted", step, digest, settings.seed), rows
