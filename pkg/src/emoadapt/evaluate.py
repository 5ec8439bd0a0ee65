"""Accuracy, confusion matrix, and embedding-plot export."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import CLASS_NAMES
from .data import Dataset
from .intersection import pca3


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # [4, 4] int64, rows = true, cols = predicted
    per_class_recall: dict[str, float | None]


def evaluate(model, params, dataset: Dataset, batch_size: int = 64) -> EvalResult:
    """Argmax predictions per sample; ties resolve to the lowest class index."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    confusion = np.zeros((4, 4), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        batch = dataset.images[start:start + batch_size]
        truth = dataset.labels[start:start + batch_size]
        pred = np.argmax(model.forward(params, batch).data, axis=1)
        for t, p in zip(truth, pred):
            confusion[t, p] += 1
    total = int(confusion.sum())
    accuracy = float(np.trace(confusion)) / total
    recall: dict[str, float | None] = {}
    for i, name in enumerate(CLASS_NAMES):
        row = int(confusion[i].sum())
        recall[name] = float(confusion[i, i]) / row if row else None
    return EvalResult(accuracy=accuracy, confusion=confusion, per_class_recall=recall)


def confusion_csv(confusion: np.ndarray) -> str:
    lines = ["true\\pred," + ",".join(CLASS_NAMES)]
    for i, name in enumerate(CLASS_NAMES):
        lines.append(name + "," + ",".join(str(int(v)) for v in confusion[i]))
    return "\n".join(lines) + "\n"


def metrics_json(result: EvalResult) -> str:
    payload = {
        "accuracy": result.accuracy,
        "per_class_recall": result.per_class_recall,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def export_embedding_plot(matrix: np.ndarray, labels: np.ndarray) -> str:
    """CSV of 3-component projections: sample_id,label,x,y,z."""
    proj = pca3(matrix).projection
    labels = np.asarray(labels)
    lines = ["sample_id,label,x,y,z"]
    for i in range(proj.shape[0]):
        x, y, z = proj[i]
        lines.append(f"{i},{CLASS_NAMES[int(labels[i])]},{x:.10g},{y:.10g},{z:.10g}")
    return "\n".join(lines) + "\n"
