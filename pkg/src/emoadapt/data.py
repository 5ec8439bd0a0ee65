"""Dataset ingestion and the synthetic two-domain glyph generator.

Images are binary PGM (P5, maxval 255), listed by a ``path,label`` manifest
CSV. The generator renders face-like glyphs whose geometry encodes the
class: mouth arc up = happy, down = sad, flat = neutral, flat plus
inward-slanted eyebrow strokes = angry. The target domain overlays a
brightness gradient, flips contrast for half the samples, and translates
the glyph by up to 4 px, shifting the marginal distribution while keeping
labels consistent.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass

import numpy as np

from . import CLASS_NAMES
from .rng import Rng

LABEL_TO_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}

IMAGE_SIZE = 48


class DataError(Exception):
    """Malformed manifest, image file, or generator target."""


# ---------------------------------------------------------------- PGM codec

def read_pgm(data: bytes) -> np.ndarray:
    """Decode binary PGM (P5, maxval 255) into a uint8 [H, W] array."""
    buf = io.BytesIO(data)

    def token() -> bytes:
        out = b""
        while True:
            ch = buf.read(1)
            if not ch:
                raise DataError("truncated PGM header")
            if ch == b"#":  # comment to end of line
                while ch not in (b"\n", b""):
                    ch = buf.read(1)
                continue
            if ch.isspace():
                if out:
                    return out
                continue
            out += ch

    magic = token()
    if magic != b"P5":
        raise DataError(f"not a binary PGM (P5) file, magic {magic!r}")
    try:
        width, height, maxval = int(token()), int(token()), int(token())
    except ValueError as exc:
        raise DataError(f"bad PGM header field: {exc}") from exc
    if maxval != 255:
        raise DataError(f"unsupported PGM maxval {maxval}, expected 255")
    payload = buf.read()
    if len(payload) != width * height:
        raise DataError(
            f"PGM payload is {len(payload)} bytes, expected {width * height}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def write_pgm(img: np.ndarray) -> bytes:
    if img.ndim != 2:
        raise DataError(f"PGM writer expects a 2-d array, got shape {img.shape}")
    arr = np.ascontiguousarray(img, dtype=np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    return header + arr.tobytes()


# ------------------------------------------------------------- preprocessing

def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic box-filter weights mapping n_in samples to n_out."""
    ratio = n_in / n_out
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * ratio, (i + 1) * ratio
        for h in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            weights[i, h] = max(0.0, min(hi, h + 1) - max(lo, h)) / ratio
    return weights


def resize_area(img: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    """Exact area-averaging resize to size x size (float64)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape == (size, size):
        return img
    wy = _overlap_matrix(img.shape[0], size)
    wx = _overlap_matrix(img.shape[1], size)
    return wy @ img @ wx.T


# ----------------------------------------------------------------- datasets

@dataclass
class Dataset:
    images: np.ndarray  # float32 [M, 1, 48, 48] in [0, 1]
    labels: np.ndarray  # int64 [M], indexes into CLASS_NAMES
    paths: list[str]

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            paths=[self.paths[i] for i in indices],
        )


def load_manifest(manifest_path) -> list[tuple[str, str]]:
    try:
        with open(manifest_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["path", "label"]:
                raise DataError(
                    f"{manifest_path}: manifest header must be 'path,label', got {header}"
                )
            rows = []
            seen: set[str] = set()
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2:
                    raise DataError(f"{manifest_path}:{lineno}: expected 2 columns")
                path, label = row
                if label not in LABEL_TO_INDEX:
                    raise DataError(
                        f"{manifest_path}:{lineno}: unknown label {label!r}; "
                        f"expected one of {CLASS_NAMES}"
                    )
                if path in seen:
                    raise DataError(f"{manifest_path}:{lineno}: duplicate path {path!r}")
                seen.add(path)
                rows.append((path, label))
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest_path}: {exc}") from exc
    return rows


def load_dataset(manifest_path, image_root=None, size: int = IMAGE_SIZE) -> Dataset:
    """Decode every manifest row into a normalized grayscale image.

    Rows keep manifest order. PGM input is grayscale by construction; other
    sources must be converted before they enter a manifest.
    """
    rows = load_manifest(manifest_path)
    if not rows:
        raise DataError(f"{manifest_path}: manifest lists no images")
    root = image_root if image_root is not None else os.path.dirname(str(manifest_path))
    images = np.empty((len(rows), 1, size, size), dtype=np.float32)
    labels = np.empty(len(rows), dtype=np.int64)
    for i, (rel, label) in enumerate(rows):
        full = os.path.join(root, rel)
        try:
            with open(full, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise DataError(f"row {i + 1} ({rel!r}): cannot read image: {exc}") from exc
        try:
            img = read_pgm(raw)
        except DataError as exc:
            raise DataError(f"row {i + 1} ({rel!r}): {exc}") from exc
        images[i, 0] = (resize_area(img, size) / 255.0).astype(np.float32)
        labels[i] = LABEL_TO_INDEX[label]
    return Dataset(images=images, labels=labels, paths=[r[0] for r in rows])


def split_dataset(ds: Dataset, test_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Deterministic 80/20 split: rank paths by SHA-256, tail is the test set.

    Manifest order is preserved inside each split.
    """
    n_test = int(len(ds) * test_fraction)
    ranked = sorted(
        range(len(ds)),
        key=lambda i: (hashlib.sha256(ds.paths[i].encode()).hexdigest(), ds.paths[i]),
    )
    test_set = set(ranked[len(ds) - n_test:])
    train_idx = [i for i in range(len(ds)) if i not in test_set]
    test_idx = [i for i in range(len(ds)) if i in test_set]
    return ds.subset(train_idx), ds.subset(test_idx)


# ------------------------------------------------------------ glyph renderer

@dataclass(frozen=True)
class GlyphSpec:
    label: str
    domain: str
    background: float
    ink: float
    eye_row: int
    eye_left_col: int
    eye_right_col: int
    mouth_row: int
    mouth_center_col: int
    mouth_half_width: int
    mouth_amp: float  # negative bends the arc upward (happy), positive down (sad)
    brows: bool
    noise_key: int
    noise_amp: float
    shift_row: int = 0
    shift_col: int = 0
    gradient_amp: float = 0.0
    gradient_theta: float = 0.0
    invert: bool = False


def sample_glyph_spec(label: str, domain: str, rng: Rng) -> GlyphSpec:
    if label not in LABEL_TO_INDEX:
        raise DataError(f"unknown label {label!r}")
    if domain not in ("source", "target"):
        raise DataError(f"domain must be 'source' or 'target', got {domain!r}")
    amp = float(rng.uniform(1, 2.5, 4.5)[0])
    if label == "happy":
        amp = -amp
    elif label != "sad":
        amp = 0.0
    jit = lambda: int(rng.integers(-1, 1)[0])
    spec = dict(
        label=label,
        domain=domain,
        background=float(rng.uniform(1, 0.84, 0.92)[0]),
        ink=float(rng.uniform(1, 0.08, 0.16)[0]),
        eye_row=15 + jit(),
        eye_left_col=15 + jit(),
        eye_right_col=30 + jit(),
        mouth_row=31 + jit(),
        mouth_center_col=23 + jit(),
        mouth_half_width=int(rng.integers(8, 10)[0]),
        mouth_amp=amp,
        brows=label == "angry",
        noise_key=int(rng.integers(0, 2 ** 31 - 1)[0]),
        noise_amp=0.015,
    )
    if domain == "target":
        spec.update(
            shift_row=int(rng.integers(-4, 4)[0]),
            shift_col=int(rng.integers(-4, 4)[0]),
            gradient_amp=float(rng.uniform(1, 0.10, 0.22)[0]),
            gradient_theta=float(rng.uniform(1, 0.0, 2 * np.pi)[0]),
            invert=rng.choice(0.5),
        )
    return GlyphSpec(**spec)


def _stroke_line(img, r0, c0, r1, c1, value):
    steps = max(abs(r1 - r0), abs(c1 - c0)) * 2 + 1
    for t in np.linspace(0.0, 1.0, steps):
        r = int(round(r0 + t * (r1 - r0)))
        c = int(round(c0 + t * (c1 - c0)))
        img[r:r + 2, c:c + 2] = value


def render_glyph(spec: GlyphSpec) -> np.ndarray:
    """Render a spec to a float64 [48, 48] image in [0, 1]; pure function."""
    dr, dc = spec.shift_row, spec.shift_col
    img = np.full((IMAGE_SIZE, IMAGE_SIZE), spec.background)
    noise = Rng(spec.noise_key, "pixel-noise").uniform(
        IMAGE_SIZE * IMAGE_SIZE, -spec.noise_amp, spec.noise_amp
    ).reshape(IMAGE_SIZE, IMAGE_SIZE)
    img += noise

    for col in (spec.eye_left_col, spec.eye_right_col):
        img[spec.eye_row + dr:spec.eye_row + dr + 3, col + dc:col + dc + 3] = spec.ink

    hw = spec.mouth_half_width
    for c in range(spec.mouth_center_col - hw, spec.mouth_center_col + hw + 1):
        t = (c - spec.mouth_center_col) / hw
        r = int(round(spec.mouth_row + spec.mouth_amp * (t * t - 0.5)))
        img[r + dr:r + dr + 2, c + dc] = spec.ink

    if spec.brows:
        ey = spec.eye_row
        lx, rx = spec.eye_left_col, spec.eye_right_col
        # inner ends sit lower: slanted toward the nose
        _stroke_line(img, ey - 7 + dr, lx - 3 + dc, ey - 3 + dr, lx + 4 + dc, spec.ink)
        _stroke_line(img, ey - 3 + dr, rx - 2 + dc, ey - 7 + dr, rx + 5 + dc, spec.ink)

    if spec.gradient_amp:
        rr, cc = np.meshgrid(
            np.linspace(-0.5, 0.5, IMAGE_SIZE), np.linspace(-0.5, 0.5, IMAGE_SIZE),
            indexing="ij",
        )
        ramp = np.cos(spec.gradient_theta) * cc + np.sin(spec.gradient_theta) * rr
        img += 2.0 * spec.gradient_amp * ramp
    img = np.clip(img, 0.0, 1.0)
    if spec.invert:
        img = 1.0 - img
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def generate_synthetic(out_dir, domain: str, per_class_count: int, seed: int) -> str:
    """Write a class-balanced PGM dataset plus manifest; returns manifest path.

    Bit-deterministic in (domain, per_class_count, seed).
    """
    if per_class_count < 1:
        raise DataError(f"per_class_count must be >= 1, got {per_class_count}")
    image_dir = os.path.join(str(out_dir), "images")
    try:
        os.makedirs(image_dir, exist_ok=True)
        probe = os.path.join(image_dir, ".write-test")
        with open(probe, "wb"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise DataError(f"cannot write dataset under {out_dir}: {exc}") from exc

    rows = []
    for label in CLASS_NAMES:
        for i in range(per_class_count):
            spec = sample_glyph_spec(label, domain, Rng(seed, domain, label, i))
            rel = f"images/{label}_{i:05d}.pgm"
            with open(os.path.join(str(out_dir), rel), "wb") as fh:
                fh.write(write_pgm(quantize(render_glyph(spec))))
            rows.append((rel, label))
    manifest_path = os.path.join(str(out_dir), "manifest.csv")
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        writer.writerows(rows)
    return manifest_path
