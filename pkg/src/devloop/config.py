"""YAML run configuration for the CLI and the HTTP service.

A config file looks like:

    max_auto_iterations: 5
    max_manual_rounds: 5
    design_review_enabled: false
    run_timeout: 10.0
    interpreter_command: python3
    backend:
      mode: live            # live | record | replay
      endpoint: https://api.openai.com/v1/chat/completions
      model_name: gpt-3.5-turbo-16k
      temperature: 1.0
      max_response_tokens: 4096
      cassette_path: runs/demo.jsonl
      retry_policy:
        max_attempts: 3
        backoff: 0.5

Every key is optional.  API keys are never read from this file; the gateway
picks them up from environment variables at request time.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import yaml

from .errors import InvalidInput
from .gateway import BackendProfile, Mode
from .session import SessionConfig

_TOP_KEYS = {
    "max_auto_iterations",
    "max_manual_rounds",
    "design_review_enabled",
    "run_timeout",
    "interpreter_command",
    "backend",
}
_BACKEND_KEYS = {
    "mode",
    "endpoint",
    "model_name",
    "temperature",
    "max_response_tokens",
    "cassette_path",
    "retry_policy",
}


def default_config() -> SessionConfig:
    return SessionConfig()


def load_config(path: Path | str | None = None) -> SessionConfig:
    if path is None:
        return default_config()
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidInput(f"config file is not valid: {exc}") from exc
    if document is None:
        return default_config()
    if not isinstance(document, dict):
        raise InvalidInput(f"{path}: config must be a mapping")
    unknown = set(document) - _TOP_KEYS
    if unknown:
        raise InvalidInput(f"{path}: unknown config keys: {sorted(unknown)}")
    backend_raw = document.get("backend") or {}
    if not isinstance(backend_raw, dict):
        raise InvalidInput(f"{path}: backend must be a mapping")
    if "api_key" in backend_raw:
        raise InvalidInput(
            "api keys must not appear in config files; set them in the environment"
        )
    unknown = set(backend_raw) - _BACKEND_KEYS
    if unknown:
        raise InvalidInput(f"{path}: unknown backend keys: {sorted(unknown)}")
    # config files default to live mode; from_dict alone would default to
    # replay, which is only meaningful once a cassette is named
    backend_raw = {"mode": "live", **backend_raw}
    defaults = SessionConfig()
    return SessionConfig(
        max_auto_iterations=document.get(
            "max_auto_iterations", defaults.max_auto_iterations
        ),
        max_manual_rounds=document.get("max_manual_rounds", defaults.max_manual_rounds),
        design_review_enabled=document.get(
            "design_review_enabled", defaults.design_review_enabled
        ),
        run_timeout=document.get("run_timeout", defaults.run_timeout),
        interpreter_command=document.get(
            "interpreter_command", defaults.interpreter_command
        ),
        backend=BackendProfile.from_dict(backend_raw),
    )


def apply_backend_overrides(config: SessionConfig, mode: str | None = None,
                            cassette_path: str | None = None) -> SessionConfig:
    """Command-line flags win over the config file."""
    if mode is None and cassette_path is None:
        return config
    backend = config.backend.to_dict()
    if mode is not None:
        try:
            backend["mode"] = Mode(mode).value
        except ValueError as exc:
            raise InvalidInput(f"unknown backend mode {mode!r}") from exc
    if cassette_path is not None:
        backend["cassette_path"] = cassette_path
    return replace(config, backend=BackendProfile.from_dict(backend))
