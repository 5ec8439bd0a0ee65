"""Layer-separability analysis of captured embeddings.

Per layer: project embeddings onto the top three principal components,
summarize each class by a mean +/- 2 sigma range per component, measure the
pairwise range overlap ratio per component, multiply the three ratios into
a pairwise score, and sum over class pairs. Smaller totals mean better
separated classes; the off-diagonal total reaches 0 for fully separated
clusters, while the literal total keeps the four self-overlap terms and is
bounded below by 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, FormatError
from .model import LAYER_TAGS

N_CLASSES = 4

MODES = ("off-diagonal", "paper-literal")

_PAIRS = [(i, j) for i in range(N_CLASSES) for j in range(i + 1, N_CLASSES)]


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic-by-rows Jacobi eigendecomposition of a symmetric matrix.

    Deterministic sweep order, float64. Sweeps continue past the nominal
    tolerance while the off-diagonal norm keeps shrinking (quadratic
    convergence makes that at most a sweep or two), so eigenvectors come
    out at the floating-point floor. Returns (eigenvalues, eigenvector
    columns), unsorted.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    n = a.shape[0]
    v = np.eye(n)
    norm = np.sqrt((a * a).sum())
    if norm == 0.0:
        return np.zeros(n), v
    prev = np.inf
    diag_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt((a[diag_mask] ** 2).sum())
        if off == 0.0 or (off >= prev and off <= tol * norm):
            break
        if off >= prev:  # stalled at the rounding floor
            break
        prev = off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:  # theta**2 would overflow
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v


@dataclass
class Pca3:
    projection: np.ndarray   # [n, 3]
    basis: np.ndarray        # [dims, 3]
    eigenvalues: np.ndarray  # [3], descending
    total_variance: float
    degenerate: bool         # true when a kept component has ~zero variance


def pca3(matrix: np.ndarray) -> Pca3:
    """Top-3 principal components of pooled rows (float64 throughout).

    Rows are centered by the global mean. Basis signs are fixed so each
    column's largest-magnitude entry is positive. Components with
    effectively zero variance are kept as exact-zero columns and flagged.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    if d < 3:
        raise ValueError(f"need at least 3 dims for a 3-component projection, got {d}")
    if not np.isfinite(x).all():
        raise ValueError("embedding matrix contains non-finite values")
    xc = x - x.mean(axis=0)

    if d <= n:
        cov = (xc.T @ xc) / n
        eigvals, eigvecs = jacobi_eigh(cov)
        order = np.argsort(eigvals)[::-1][:3]
        lams = eigvals[order]
        basis = eigvecs[:, order]
    else:
        gram = (xc @ xc.T) / n
        eigvals, eigvecs = jacobi_eigh(gram)
        order = np.argsort(eigvals)[::-1][:3]
        lams = eigvals[order]
        basis = np.zeros((d, 3))
        for m in range(3):
            if lams[m] > 0:
                basis[:, m] = xc.T @ eigvecs[:, order[m]] / np.sqrt(n * lams[m])

    total = float(np.maximum(eigvals, 0.0).sum())
    lams = np.maximum(lams, 0.0)
    zero_floor = 1e-12 * max(float(lams[0]), 1e-30)
    degenerate = bool((lams <= zero_floor).any())
    for m in range(3):
        if lams[m] <= zero_floor:
            lams[m] = 0.0
            basis[:, m] = 0.0
        else:
            j = int(np.argmax(np.abs(basis[:, m])))
            if basis[j, m] < 0:
                basis[:, m] = -basis[:, m]
    projection = xc @ basis
    return Pca3(projection, basis, lams, total, degenerate)


def class_stats(projection: np.ndarray, labels: np.ndarray):
    """Per-class, per-component mean and population standard deviation."""
    proj = np.asarray(projection, dtype=np.float64)
    labels = np.asarray(labels)
    means = np.zeros((N_CLASSES, proj.shape[1]))
    stds = np.zeros((N_CLASSES, proj.shape[1]))
    for i in range(N_CLASSES):
        rows = proj[labels == i]
        if rows.shape[0] < 2:
            raise ValueError(
                f"class {i} has {rows.shape[0]} samples; need at least 2 per class"
            )
        means[i] = rows.mean(axis=0)
        stds[i] = np.sqrt(((rows - means[i]) ** 2).mean(axis=0))
    return means, stds


def ranges(means: np.ndarray, stds: np.ndarray):
    """[mean - 2 sigma, mean + 2 sigma] per class and component."""
    return means - 2.0 * stds, means + 2.0 * stds


def pair_overlap(li: float, ri: float, lj: float, rj: float) -> float:
    """Overlap ratio of two ranges: intersection length over union span.

    Both ranges collapsed to the same point count as full overlap (1);
    a zero union span with distinct points would be no overlap (0).
    """
    denom = max(ri, rj) - min(li, lj)
    if denom <= 0.0:
        return 1.0 if li == ri == lj == rj else 0.0
    return max(min(ri, rj) - max(li, lj), 0.0) / denom


def total_pair(ix: float, iy: float, iz: float) -> float:
    """Product of the three component overlaps; 1 only if all three are 1."""
    return ix * iy * iz


@dataclass
class LayerIntersection:
    layer: str
    pair_matrix: np.ndarray  # [4, 4], symmetric, unit diagonal
    c_offdiag: float
    c_literal: float
    eigenvalues: np.ndarray
    degenerate: bool

    def pair(self, i: int, j: int) -> float:
        return float(self.pair_matrix[i, j])

    def score(self, mode: str) -> float:
        _check_mode(mode)
        return self.c_offdiag if mode == "off-diagonal" else self.c_literal


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def analyze_embeddings(matrix, labels, layer: str = "") -> LayerIntersection:
    res = pca3(matrix)
    means, stds = class_stats(res.projection, labels)
    lo, hi = ranges(means, stds)
    pairs = np.eye(N_CLASSES)
    for i, j in _PAIRS:
        value = total_pair(
            *(pair_overlap(lo[i, m], hi[i, m], lo[j, m], hi[j, m]) for m in range(3))
        )
        pairs[i, j] = pairs[j, i] = value
    c_literal = float(pairs.sum())
    c_offdiag = float(pairs.sum() - np.trace(pairs))
    return LayerIntersection(
        layer=layer,
        pair_matrix=pairs,
        c_offdiag=c_offdiag,
        c_literal=c_literal,
        eigenvalues=res.eigenvalues,
        degenerate=res.degenerate,
    )


def intersection_score(matrix, labels, mode: str = "off-diagonal") -> float:
    """Total pairwise overlap of class clusters in the 3-component space."""
    _check_mode(mode)
    return analyze_embeddings(matrix, labels).score(mode)


@dataclass
class IntersectionReport:
    layers: list[LayerIntersection]

    def to_csv(self) -> str:
        lines = ["layer,C_offdiag,C_literal,I_12,I_13,I_14,I_23,I_24,I_34"]
        for res in self.layers:
            pairs = ",".join(f"{res.pair(i, j):.10g}" for i, j in _PAIRS)
            lines.append(
                f"{res.layer},{res.c_offdiag:.10g},{res.c_literal:.10g},{pairs}"
            )
        return "\n".join(lines) + "\n"


def layer_convergence(
    model,
    params,
    images: np.ndarray,
    labels: np.ndarray,
    layers=LAYER_TAGS,
    batch_size: int = 64,
) -> IntersectionReport:
    """Intersection totals per captured layer, in the given layer order."""
    labels = np.asarray(labels)
    for i in range(N_CLASSES):
        count = int((labels == i).sum())
        if count < 8:
            raise ValueError(
                f"probe set needs >= 8 samples per class, class {i} has {count}"
            )
    dumps = capture_embeddings(model, params, images, layers, batch_size)
    return IntersectionReport(
        [analyze_embeddings(dumps[tag], labels, layer=tag) for tag in layers]
    )


def capture_embeddings(
    model, params, images: np.ndarray, layers=LAYER_TAGS, batch_size: int = 64
) -> dict[str, np.ndarray]:
    """Batched inference capture, concatenated in dataset order."""
    layers = tuple(layers)
    chunks: dict[str, list[np.ndarray]] = {tag: [] for tag in layers}
    for start in range(0, images.shape[0], batch_size):
        _, dump = model.forward_with_embeddings(
            params, images[start:start + batch_size], tags=layers
        )
        for tag in layers:
            chunks[tag].append(dump[tag])
    return {tag: np.concatenate(chunks[tag], axis=0) for tag in layers}


def embeddings_to_checkpoint(
    dumps: dict[str, np.ndarray],
    labels: np.ndarray,
    digest: str,
    seed: int,
    step: int,
    class_names,
) -> Checkpoint:
    """Pack captured embeddings into the standard container (phase 'embeddings')."""
    tensors = {f"emb.{tag}": np.asarray(matrix) for tag, matrix in dumps.items()}
    tensors["labels"] = np.asarray(labels, dtype=np.float64)
    return Checkpoint(
        tensors=tensors,
        phase="embeddings",
        step=step,
        class_names=list(class_names),
        config_digest=digest,
        seed=seed,
    )


def embeddings_from_checkpoint(ckpt: Checkpoint):
    """Unpack an embeddings container into ({tag: matrix}, labels)."""
    if ckpt.phase != "embeddings":
        raise FormatError(
            f"expected an embeddings container, got phase {ckpt.phase!r}"
        )
    if "labels" not in ckpt.tensors:
        raise FormatError("embeddings container is missing the labels vector")
    dumps = {
        name[len("emb."):]: arr
        for name, arr in ckpt.tensors.items()
        if name.startswith("emb.")
    }
    if not dumps:
        raise FormatError("embeddings container holds no emb.* matrices")
    labels = ckpt.tensors["labels"].astype(np.int64)
    return dumps, labels
