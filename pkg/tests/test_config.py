"""YAML config loading and command-line overrides."""

import pytest

from devloop.config import apply_backend_overrides, default_config, load_config
from devloop.errors import InvalidInput
from devloop.gateway import Mode


def test_defaults_without_file():
    config = load_config(None)
    assert config == default_config()
    assert config.backend.mode is Mode.LIVE
    assert config.max_auto_iterations == 5


def test_file_values_override_defaults(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text(
        "max_auto_iterations: 3\n"
        "run_timeout: 2.5\n"
        "interpreter_command: python3.11\n"
        "backend:\n"
        "  model_name: test-model\n"
        "  temperature: 0.0\n"
    )
    config = load_config(path)
    assert config.max_auto_iterations == 3
    assert config.run_timeout == 2.5
    assert config.interpreter_command == "python3.11"
    assert config.backend.model_name == "test-model"
    assert config.backend.temperature == 0.0
    assert config.backend.mode is Mode.LIVE
    assert config.max_manual_rounds == 5  # untouched default


def test_replay_mode_with_cassette(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("backend:\n  mode: replay\n  cassette_path: runs/demo.jsonl\n")
    config = load_config(path)
    assert config.backend.mode is Mode.REPLAY
    assert config.backend.cassette_path == "runs/demo.jsonl"


def test_missing_file(tmp_path):
    with pytest.raises(InvalidInput, match="not found"):
        load_config(tmp_path / "nope.yaml")


def test_empty_file_is_defaults(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("")
    assert load_config(path) == default_config()


def test_unknown_top_level_key(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("max_auto_iters: 3\n")
    with pytest.raises(InvalidInput, match="max_auto_iters"):
        load_config(path)


def test_unknown_backend_key(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("backend:\n  modle: live\n")
    with pytest.raises(InvalidInput, match="modle"):
        load_config(path)


def test_api_key_in_file_rejected(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("backend:\n  api_key: sk-secret\n")
    with pytest.raises(InvalidInput, match="environment"):
        load_config(path)


def test_budget_validation_still_applies(tmp_path):
    path = tmp_path / "devloop.yaml"
    path.write_text("max_auto_iterations: 0\n")
    with pytest.raises(InvalidInput):
        load_config(path)


def test_overrides_replace_mode_and_cassette():
    config = default_config()
    out = apply_backend_overrides(config, mode="replay", cassette_path="c.jsonl")
    assert out.backend.mode is Mode.REPLAY
    assert out.backend.cassette_path == "c.jsonl"
    assert config.backend.mode is Mode.LIVE  # original untouched


def test_overrides_noop_when_absent():
    config = default_config()
    assert apply_backend_overrides(config, None, None) is config


def test_unknown_mode_override():
    with pytest.raises(InvalidInput, match="unknown backend mode"):
        apply_backend_overrides(default_config(), mode="playback")
