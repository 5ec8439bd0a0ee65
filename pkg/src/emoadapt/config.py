"""Run configuration: key=value file, CLI overrides, canonical digest.

The ``model.*`` subset, serialized canonically (sorted keys), is hashed
into the config digest stored in checkpoints; re-training and evaluation
verify it so parameters are never loaded into a mismatched architecture.
Training-schedule keys (epochs, seed, ...) deliberately stay out of the
digest.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .losses import LossConfig
from .model import ModelConfig


class ConfigError(Exception):
    pass


DEFAULTS: dict[str, object] = {
    "model.input_size": 48,
    "model.in_channels": 1,
    "model.conv1_filters": 8,
    "model.conv2_filters": 16,
    "model.kernel_size": 3,
    "model.pool": 2,
    "model.dropout_rate": 0.5,
    "model.fc1_width": 128,
    "model.fc2_width": 64,
    "model.attention_enabled": True,
    "model.attention_hidden_filters": 4,
    "loss.lambda": 1e-4,
    "loss.w_classifier": 1.0,
    "loss.w_discrepancy": 1.0,
    "loss.epsilon_log": 1e-12,
    "train.epochs": 5,
    "train.batch_size": 32,
    "train.lr": 1e-3,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.seed": 0,
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class RunConfig:
    values: dict[str, object]

    def __getitem__(self, key: str):
        return self.values[key]

    def canonical_text(self, prefix: str | None = None) -> str:
        keys = sorted(
            k for k in self.values if prefix is None or k.startswith(prefix)
        )
        return "".join(f"{k}={_format(self.values[k])}\n" for k in keys)

    def digest(self) -> str:
        """SHA-256 over the canonical model.* lines."""
        return hashlib.sha256(self.canonical_text("model.").encode()).hexdigest()

    def model_config(self) -> ModelConfig:
        v = self.values
        try:
            return ModelConfig(
                input_size=v["model.input_size"],
                in_channels=v["model.in_channels"],
                conv1_filters=v["model.conv1_filters"],
                conv2_filters=v["model.conv2_filters"],
                kernel_size=v["model.kernel_size"],
                pool=v["model.pool"],
                dropout_rate=v["model.dropout_rate"],
                fc1_width=v["model.fc1_width"],
                fc2_width=v["model.fc2_width"],
                attention_enabled=v["model.attention_enabled"],
                attention_hidden_filters=v["model.attention_hidden_filters"],
            )
        except ValueError as exc:
            raise ConfigError(f"invalid model config: {exc}") from exc

    def loss_config(self) -> LossConfig:
        v = self.values
        try:
            return LossConfig(
                lam=v["loss.lambda"],
                w_classifier=v["loss.w_classifier"],
                w_discrepancy=v["loss.w_discrepancy"],
                epsilon_log=v["loss.epsilon_log"],
            )
        except ValueError as exc:
            raise ConfigError(f"invalid loss config: {exc}") from exc


def parse_config_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def build_config(
    config_path=None, overrides: dict[str, object] | None = None
) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by CLI overrides."""
    values = dict(DEFAULTS)
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    return RunConfig(values)
