"""Attention-gated convolutional classifier over four emotion classes.

Pipeline: a sigmoid spatial mask (conv -> ReLU -> conv -> sigmoid over the
input) multiplies the input, then conv1 -> conv2 -> 2x2 maxpool -> ReLU ->
dropout -> three dense layers -> softmax. Intermediate embeddings can be
captured at named layer tags for the separability analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

LAYER_TAGS = ("conv-n", "fc-1", "fc-2", "fc-3", "op")

FC_WEIGHT_NAMES = ("fc1.w", "fc2.w", "fc3.w")


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 48
    in_channels: int = 1
    conv1_filters: int = 8
    conv2_filters: int = 16
    kernel_size: int = 3
    pool: int = 2
    dropout_rate: float = 0.5
    fc1_width: int = 128
    fc2_width: int = 64
    n_classes: int = 4
    attention_enabled: bool = True
    attention_hidden_filters: int = 4

    def __post_init__(self):
        if self.n_classes != 4:
            raise ValueError("class count is fixed at 4")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        if self.pool != 2:
            raise ValueError("only 2x2 pooling is supported")
        if self.conv_out_size % self.pool:
            raise ValueError(
                f"conv output size {self.conv_out_size} not divisible by pool "
                f"{self.pool}; adjust input_size"
            )

    @property
    def conv_out_size(self) -> int:
        return self.input_size - 2 * (self.kernel_size - 1)

    @property
    def pooled_size(self) -> int:
        return self.conv_out_size // self.pool

    @property
    def flat_dim(self) -> int:
        return self.conv2_filters * self.pooled_size * self.pooled_size


def _xavier(rng: Rng, shape: tuple[int, ...], fan_in: int, fan_out: int, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(int(np.prod(shape)), -bound, bound).reshape(shape).astype(dtype)


class AttentionCnn:
    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        k = cfg.kernel_size
        shapes: dict[str, tuple[int, ...]] = {}
        if cfg.attention_enabled:
            shapes["attn.conv1"] = (cfg.attention_hidden_filters, cfg.in_channels, k, k)
            shapes["attn.conv2"] = (1, cfg.attention_hidden_filters, k, k)
        shapes["conv1"] = (cfg.conv1_filters, cfg.in_channels, k, k)
        shapes["conv2"] = (cfg.conv2_filters, cfg.conv1_filters, k, k)
        shapes["fc1.w"] = (cfg.flat_dim, cfg.fc1_width)
        shapes["fc1.b"] = (cfg.fc1_width,)
        shapes["fc2.w"] = (cfg.fc1_width, cfg.fc2_width)
        shapes["fc2.b"] = (cfg.fc2_width,)
        shapes["fc3.w"] = (cfg.fc2_width, cfg.n_classes)
        shapes["fc3.b"] = (cfg.n_classes,)
        return shapes

    def init_params(self, seed: int, dtype=np.float32) -> dict[str, Tensor]:
        """Uniform Xavier weights, zero biases; bit-deterministic per seed."""
        k2 = self.config.kernel_size ** 2
        params: dict[str, Tensor] = {}
        for name, shape in self.param_shapes().items():
            if name.endswith(".b"):
                data = np.zeros(shape, dtype=dtype)
            else:
                if len(shape) == 4:
                    fan_in, fan_out = shape[1] * k2, shape[0] * k2
                else:
                    fan_in, fan_out = shape
                data = _xavier(Rng(seed, "init", name), shape, fan_in, fan_out, dtype)
            params[name] = Tensor(data, requires_grad=True)
        return params

    def _check_batch(self, params: dict[str, Tensor], batch) -> Tensor:
        cfg = self.config
        data = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
        expected = (cfg.in_channels, cfg.input_size, cfg.input_size)
        if data.ndim != 4 or data.shape[1:] != expected:
            raise ValueError(
                f"batch shape {data.shape} does not match (N, {expected[0]}, "
                f"{expected[1]}, {expected[2]})"
            )
        dtype = params["conv1"].dtype
        return Tensor(data.astype(dtype, copy=False))

    def _gate(self, params: dict[str, Tensor], x: Tensor) -> Tensor:
        pad = self.config.kernel_size // 2
        h = T.relu(T.conv2d(x, params["attn.conv1"], padding=pad))
        return T.sigmoid(T.conv2d(h, params["attn.conv2"], padding=pad))

    def attention_mask(self, params: dict[str, Tensor], batch) -> np.ndarray:
        if not self.config.attention_enabled:
            raise ValueError("attention is disabled in this config")
        return self._gate(params, self._check_batch(params, batch)).data

    def forward(
        self,
        params: dict[str, Tensor],
        batch,
        training: bool = False,
        seed: int = 0,
        _capture: dict[str, np.ndarray] | None = None,
    ) -> Tensor:
        """Class probabilities [N, 4]; rows live on the simplex."""
        cfg = self.config
        x = self._check_batch(params, batch)
        n = x.shape[0]

        if cfg.attention_enabled:
            x = T.mul(x, self._gate(params, x))

        h = T.conv2d(x, params["conv1"])
        h = T.conv2d(h, params["conv2"])
        h = T.relu(T.maxpool2d(h))
        if _capture is not None and "conv-n" in _capture:
            _capture["conv-n"] = h.data.reshape(n, -1).copy()
        h = T.dropout(h, cfg.dropout_rate, seed=seed, training=training)
        h = T.reshape(h, (n, cfg.flat_dim))

        z1 = T.dense(h, params["fc1.w"], params["fc1.b"])
        if _capture is not None and "fc-1" in _capture:
            _capture["fc-1"] = z1.data.copy()
        z2 = T.dense(T.relu(z1), params["fc2.w"], params["fc2.b"])
        if _capture is not None and "fc-2" in _capture:
            _capture["fc-2"] = z2.data.copy()
        z3 = T.dense(T.relu(z2), params["fc3.w"], params["fc3.b"])
        if _capture is not None and "fc-3" in _capture:
            _capture["fc-3"] = z3.data.copy()
        probs = T.softmax(z3)
        if _capture is not None and "op" in _capture:
            _capture["op"] = probs.data.copy()
        return probs

    def forward_with_embeddings(
        self, params: dict[str, Tensor], batch, tags
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Inference pass that also returns flattened activations per tag.

        Predictions are identical to forward(); capture never perturbs them.
        """
        tags = tuple(tags)
        if not tags:
            raise ValueError("at least one layer tag is required")
        unknown = [t for t in tags if t not in LAYER_TAGS]
        if unknown:
            raise ValueError(f"unknown layer tags {unknown}; valid: {LAYER_TAGS}")
        capture: dict[str, np.ndarray] = {t: None for t in tags}  # type: ignore[misc]
        probs = self.forward(params, batch, training=False, _capture=capture)
        return probs.data, capture
