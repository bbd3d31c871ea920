"""Server configuration: UTF-8 JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .importer import RemoteRepoRef
from .registry import DEFAULT_FIELD_WEIGHTS

DATA_DIR_ENV = "MOS_DATA_DIR"

_KNOWN_KEYS = {
    "listen",
    "data_dir",
    "profile_dir",
    "remote_repos",
    "expansion_depth",
    "field_weights",
    "network_timeout",
}


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: Path = Path("data")
    profile_dir: Path | None = None  # None: use the packaged corpora
    remote_repos: tuple[RemoteRepoRef, ...] = ()
    expansion_depth: int = 1
    field_weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_FIELD_WEIGHTS)
    )
    network_timeout: float = 10.0


def _parse_listen(value: object) -> tuple[str, int]:
    if not isinstance(value, str) or ":" not in value:
        raise ConfigError(f"listen must be 'host:port', got {value!r}")
    host, _, port_text = value.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigError(f"listen port {port_text!r} is not an integer") from None
    if not 0 <= port <= 65535:
        raise ConfigError(f"listen port {port} out of range")
    return host or "127.0.0.1", port


def load_config(path: Path | str | None = None, env: Mapping[str, str] | None = None) -> ServerConfig:
    """Read the config file (all keys optional) and apply env overrides."""
    env = os.environ if env is None else env
    doc: dict = {}
    if path is not None:
        raw = Path(path)
        if not raw.exists():
            raise ConfigError(f"config file {raw} does not exist")
        try:
            doc = json.loads(raw.read_text("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file {raw} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {raw} must hold a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")

    host, port = ("127.0.0.1", 8080)
    if "listen" in doc:
        host, port = _parse_listen(doc["listen"])

    data_dir = Path(doc.get("data_dir", "data"))
    if env.get(DATA_DIR_ENV):
        data_dir = Path(env[DATA_DIR_ENV])

    profile_dir = None
    if doc.get("profile_dir") is not None:
        if not isinstance(doc["profile_dir"], str):
            raise ConfigError("profile_dir must be a string path")
        profile_dir = Path(doc["profile_dir"])

    repos = []
    seen_names = set()
    for i, entry in enumerate(doc.get("remote_repos", [])):
        if (
            not isinstance(entry, dict)
            or set(entry) != {"name", "base_url"}
            or not isinstance(entry.get("name"), str)
            or not isinstance(entry.get("base_url"), str)
        ):
            raise ConfigError(f"remote_repos[{i}] must be {{\"name\", \"base_url\"}}")
        if entry["name"] in seen_names:
            raise ConfigError(f"duplicate remote repo name {entry['name']!r}")
        seen_names.add(entry["name"])
        repos.append(RemoteRepoRef(entry["name"], entry["base_url"]))

    depth = doc.get("expansion_depth", 1)
    if not isinstance(depth, int) or isinstance(depth, bool) or depth < 1:
        raise ConfigError(f"expansion_depth must be an integer >= 1, got {depth!r}")

    weights = dict(DEFAULT_FIELD_WEIGHTS)
    if "field_weights" in doc:
        given = doc["field_weights"]
        if not isinstance(given, dict) or set(given) - set(weights):
            raise ConfigError("field_weights allows only name, operation, documentation")
        for key, value in given.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"field weight {key!r} must be a positive number")
            weights[key] = float(value)

    timeout = doc.get("network_timeout", 10.0)
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        raise ConfigError(f"network_timeout must be a positive number, got {timeout!r}")

    return ServerConfig(
        host=host,
        port=port,
        data_dir=data_dir,
        profile_dir=profile_dir,
        remote_repos=tuple(repos),
        expansion_depth=depth,
        field_weights=weights,
        network_timeout=float(timeout),
    )
