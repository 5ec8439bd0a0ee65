"""Accuracy/confusion reporting and embedding-plot export."""

import json

import numpy as np
import pytest

from emoadapt import CLASS_NAMES
from emoadapt.evaluate import (
    confusion_csv,
    evaluate,
    export_embedding_plot,
    metrics_json,
)
from emoadapt.data import Dataset
from emoadapt.intersection import pca3
from emoadapt.tensor import Tensor


class StubModel:
    """Predicts from a hidden label channel baked into pixel [0, 0, 0]."""

    def __init__(self, mode="perfect"):
        self.mode = mode

    def forward(self, params, batch, training=False, seed=0):
        batch = np.asarray(batch)
        n = batch.shape[0]
        probs = np.full((n, 4), 0.01, dtype=np.float64)
        for i in range(n):
            target = int(round(batch[i, 0, 0, 0] * 10)) if self.mode == "perfect" else 1
            probs[i, target] = 0.97
        return Tensor(probs)


def balanced_dataset(per_class=2, seed=0):
    rng = np.random.default_rng(seed)
    n = 4 * per_class
    images = rng.uniform(0.3, 0.9, (n, 1, 4, 4)).astype(np.float32)
    labels = np.repeat(np.arange(4), per_class)
    for i, lab in enumerate(labels):
        images[i, 0, 0, 0] = lab / 10.0
    return Dataset(images=images, labels=labels, paths=[f"img{i}" for i in range(n)])


def test_perfect_predictor_identity_confusion():
    ds = balanced_dataset()
    res = evaluate(StubModel("perfect"), {}, ds)
    assert res.accuracy == 1.0
    np.testing.assert_array_equal(res.confusion, 2 * np.eye(4, dtype=np.int64))
    assert all(v == 1.0 for v in res.per_class_recall.values())


def test_constant_happy_predictor():
    ds = balanced_dataset()
    res = evaluate(StubModel("constant"), {}, ds)
    assert res.accuracy == 0.25
    happy = CLASS_NAMES.index("happy")
    assert res.confusion[:, happy].sum() == len(ds)
    assert res.confusion.sum() == res.confusion[:, happy].sum()


def test_row_sums_equal_class_counts_and_trace_consistency():
    ds = balanced_dataset(per_class=3, seed=1)
    res = evaluate(StubModel("perfect"), {}, ds, batch_size=5)
    for i in range(4):
        assert res.confusion[i].sum() == 3
    assert res.accuracy == np.trace(res.confusion) / res.confusion.sum()


def test_order_invariance():
    ds = balanced_dataset(per_class=4, seed=2)
    rng = np.random.default_rng(3)
    perm = rng.permutation(len(ds))
    res_a = evaluate(StubModel("perfect"), {}, ds)
    res_b = evaluate(StubModel("perfect"), {}, ds.subset(perm))
    assert res_a.accuracy == res_b.accuracy
    np.testing.assert_array_equal(res_a.confusion, res_b.confusion)


def test_empty_dataset_rejected():
    ds = balanced_dataset()
    empty = ds.subset(np.array([], dtype=np.int64))
    with pytest.raises(ValueError, match="empty"):
        evaluate(StubModel(), {}, empty)


def test_confusion_csv_layout():
    confusion = np.arange(16).reshape(4, 4)
    text = confusion_csv(confusion)
    lines = text.strip().split("\n")
    assert lines[0] == "true\\pred,angry,happy,sad,neutral"
    assert lines[1] == "angry,0,1,2,3"
    assert lines[4] == "neutral,12,13,14,15"


def test_metrics_json_fields():
    ds = balanced_dataset()
    res = evaluate(StubModel("perfect"), {}, ds)
    payload = json.loads(metrics_json(res))
    assert payload["accuracy"] == 1.0
    assert set(payload["per_class_recall"]) == set(CLASS_NAMES)


def test_embedding_plot_export():
    rng = np.random.default_rng(4)
    matrix = rng.standard_normal((4, 6))
    labels = np.array([0, 1, 2, 3])
    text = export_embedding_plot(matrix, labels)
    lines = text.strip().split("\n")
    assert lines[0] == "sample_id,label,x,y,z"
    assert len(lines) == 5
    proj = pca3(matrix).projection
    for i, line in enumerate(lines[1:]):
        sid, label, x, y, z = line.split(",")
        assert int(sid) == i
        assert label == CLASS_NAMES[labels[i]]
        np.testing.assert_allclose(
            [float(x), float(y), float(z)], proj[i], rtol=1e-9, atol=1e-12
        )
