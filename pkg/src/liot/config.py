"""Runtime configuration and the flat key-value config file format.

The file is one ``key = value`` pair per line, ``#`` starts a comment.
Command-line flags override file values. Recognized keys:

    host, port, window, window.<RELATION>, cascade, call_timeout_ms,
    queue, log, webhook.<RELATION>, base_url
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DEFAULT_CASCADE_LIMIT = 64
DEFAULT_CALL_TIMEOUT_MS = 5000
DEFAULT_BODY_LIMIT = 1024 * 1024


@dataclass
class EngineConfig:
    window_default: int = 1024
    window_overrides: dict[str, int] = field(default_factory=dict)
    cascade_limit: int = DEFAULT_CASCADE_LIMIT
    call_timeout_ms: int = DEFAULT_CALL_TIMEOUT_MS
    queue_size: int = 1024
    log_path: str | None = None
    webhooks: dict[str, str] = field(default_factory=dict)
    base_url: str | None = None
    body_limit: int = DEFAULT_BODY_LIMIT
    inline_async: bool = False  # deliver ACALLs/webhooks synchronously (tests, scripts)

    def validate(self) -> None:
        for label, value in [
            ("window", self.window_default),
            ("cascade", self.cascade_limit),
            ("call_timeout_ms", self.call_timeout_ms),
            ("queue", self.queue_size),
        ]:
            if value < 1:
                raise ConfigError(f"{label} must be positive, got {value}")
        for name, size in self.window_overrides.items():
            if size < 1:
                raise ConfigError(f"window.{name} must be positive, got {size}")


@dataclass
class RunConfig(EngineConfig):
    host: str = "127.0.0.1"
    port: int = 8080


def read_config_file(path: str | Path) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for line_number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_number}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _positive_int(key: str, text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None
    if value < 1:
        raise ConfigError(f"{key} must be positive, got {value}")
    return value


def apply_config_pairs(config: RunConfig, pairs: dict[str, str]) -> None:
    for key, value in pairs.items():
        if key == "host":
            config.host = value
        elif key == "port":
            config.port = _positive_int(key, value)
        elif key == "window":
            config.window_default = _positive_int(key, value)
        elif key.startswith("window."):
            config.window_overrides[key.split(".", 1)[1]] = _positive_int(key, value)
        elif key == "cascade":
            config.cascade_limit = _positive_int(key, value)
        elif key == "call_timeout_ms":
            config.call_timeout_ms = _positive_int(key, value)
        elif key == "queue":
            config.queue_size = _positive_int(key, value)
        elif key == "log":
            config.log_path = value
        elif key.startswith("webhook."):
            config.webhooks[key.split(".", 1)[1]] = value
        elif key == "base_url":
            config.base_url = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
