"""Service configuration: `key = value` text files with env overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidArgumentError

LISTEN_ENV_VAR = "KNNSTORE_LISTEN"


@dataclass
class ServiceConfig:
    store_path: str
    listen: str = "127.0.0.1:8080"
    default_k: int = 10
    max_batch: int = 1000
    encoder_url: str | None = None
    read_only: bool = False
    image_base_url: str | None = None

    def __post_init__(self):
        if self.default_k < 1:
            raise InvalidArgumentError(f"default_k must be >= 1, got {self.default_k}")
        if self.max_batch < 1:
            raise InvalidArgumentError(f"max_batch must be >= 1, got {self.max_batch}")

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        if not host or not port.isdigit():
            raise InvalidArgumentError(f"listen must be host:port, got {self.listen!r}")
        return host, int(port)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config(path: str | Path) -> ServiceConfig:
    """Parse a config file. Recognized keys mirror ServiceConfig fields;
    KNNSTORE_LISTEN in the environment overrides the listen address."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    known = {
        "store_path",
        "listen",
        "default_k",
        "max_batch",
        "encoder_url",
        "read_only",
        "image_base_url",
    }
    unknown = set(values) - known
    if unknown:
        raise InvalidArgumentError(f"{path}: unknown config keys: {sorted(unknown)}")
    if "store_path" not in values:
        raise InvalidArgumentError(f"{path}: store_path is required")

    def as_bool(key: str, default: bool) -> bool:
        raw = values.get(key)
        if raw is None:
            return default
        if raw.lower() not in _BOOL:
            raise InvalidArgumentError(f"{path}: {key} must be true/false, got {raw!r}")
        return _BOOL[raw.lower()]

    try:
        config = ServiceConfig(
            store_path=values["store_path"],
            listen=os.environ.get(LISTEN_ENV_VAR) or values.get("listen", "127.0.0.1:8080"),
            default_k=int(values.get("default_k", 10)),
            max_batch=int(values.get("max_batch", 1000)),
            encoder_url=values.get("encoder_url") or None,
            read_only=as_bool("read_only", False),
            image_base_url=values.get("image_base_url") or None,
        )
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
    config.host_port()
    return config
