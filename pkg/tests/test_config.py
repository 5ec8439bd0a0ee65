"""Config file parsing, canonical text, and digest scope."""

import pytest

from emoadapt.config import ConfigError, build_config


def test_defaults():
    rc = build_config()
    assert rc["model.input_size"] == 48
    assert rc["train.batch_size"] == 32
    assert rc["loss.lambda"] == 1e-4
    assert rc.model_config().flat_dim == 7744


def test_file_parsing_with_comments(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "\n"
        "model.conv1_filters = 4\n"
        "model.attention_enabled=false\n"
        "train.lr=0.01\n"
    )
    rc = build_config(cfg)
    assert rc["model.conv1_filters"] == 4
    assert rc["model.attention_enabled"] is False
    assert rc["train.lr"] == 0.01


def test_unknown_key_rejected_with_location(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model.color_channels=3\n")
    with pytest.raises(ConfigError, match=r"run.cfg:1: unknown config key"):
        build_config(cfg)


def test_malformed_line_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("just some words\n")
    with pytest.raises(ConfigError, match="key=value"):
        build_config(cfg)


def test_bad_value_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train.epochs=three\n")
    with pytest.raises(ConfigError, match="train.epochs"):
        build_config(cfg)


def test_overrides_beat_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train.seed=1\ntrain.epochs=9\n")
    rc = build_config(cfg, {"train.seed": 42, "train.epochs": None})
    assert rc["train.seed"] == 42
    assert rc["train.epochs"] == 9  # None override is a no-op


def test_unknown_override_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        build_config(None, {"model.bogus": 1})


def test_canonical_text_sorted_and_typed():
    rc = build_config()
    text = rc.canonical_text("model.")
    lines = text.strip().split("\n")
    assert lines == sorted(lines)
    assert "model.attention_enabled=true" in lines
    assert "model.dropout_rate=0.5" in lines


def test_digest_covers_only_model_keys():
    base = build_config().digest()
    assert len(base) == 64
    assert build_config(None, {"train.epochs": 99}).digest() == base
    assert build_config(None, {"loss.lambda": 0.5}).digest() == base
    assert build_config(None, {"model.conv1_filters": 4}).digest() != base
