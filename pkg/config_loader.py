"""Configuration loading: TOML/JSON parsing, deep merging, CLI overrides, and the config hash."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent / "configs"

# Code-level defaults; files and flags override them.
DEFAULTS: dict[str, Any] = {
    "general": {"log_level": "INFO", "seed": 0, "workers": 0, "numeric_mode": "float"},
    "source": {"name": "iid"},
    "measure": {"weights": "uniform"},
    "run": {
        "n": 1_000_000,
        "max_length": 3,
        "tolerance": 0.02,
        "trials": 1,
        "table_cap": 1 << 20,
        "memory_cap": 1 << 30,
    },
    "experiment": {"suite": "", "battery": "default", "measures": ["uniform"]},
    "output": {"dir": "results", "format": "csv"},
}

# Flag name -> (section, key)
CLI_OVERRIDES: dict[str, tuple[str, str]] = {
    "seed": ("general", "seed"),
    "workers": ("general", "workers"),
    "n": ("run", "n"),
    "trials": ("run", "trials"),
    "max_length": ("run", "max_length"),
    "tolerance": ("run", "tolerance"),
    "measure": ("measure", "weights"),
    "out": ("output", "dir"),
    "format": ("output", "format"),
    "suite": ("experiment", "suite"),
    "battery": ("experiment", "battery"),
}

# Excluded from the config hash: where results go does not change what they are.
HASH_EXCLUDED: tuple[tuple[str, str], ...] = (("output", "dir"), ("general", "log_level"), ("general", "workers"))


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Deep merge two dicts. override values take precedence."""
    result = base.copy()
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def _load_file(path: str | Path) -> dict[str, Any]:
    """Load a single TOML or JSON file (by suffix) and return its contents as a dict."""
    p = Path(path)
    if p.suffix == ".json":
        with open(p, "r", encoding="utf-8") as f:
            return json.load(f)
    with open(p, "rb") as f:
        return tomllib.load(f)


def _load_config_dir(config: dict[str, Any], config_d: Path) -> dict[str, Any]:
    """Load all *.toml files from a config.d directory as overlays."""
    if not config_d.is_dir():
        return config
    for override_file in sorted(config_d.glob("*.toml")):
        logger.info(f"Loading config override: {override_file}")
        config = deep_merge(config, _load_file(override_file))
    return config


def load_config(config_paths: list[str] | None = None, config_dir: str | Path = CONFIG_DIR) -> dict[str, Any]:
    """Load and merge configuration on top of DEFAULTS.

    When no --config paths are provided (default):
      1. Load base config from configs/defaults.toml
      2. Overlay files from configs/config.d/*.toml (alphabetical)

    When --config paths are provided:
      Load only those files in order, each overlaying the previous.
      The default base file and config.d are skipped.
    """
    config: dict[str, Any] = copy.deepcopy(DEFAULTS)
    if config_paths:
        for path in config_paths:
            if not os.path.exists(path):
                logger.error(f"Config file not found: {path}")
                continue
            logger.info(f"Loading config: {path}")
            config = deep_merge(config, _load_file(path))
        return config

    base_path = Path(config_dir) / "defaults.toml"
    if base_path.exists():
        config = deep_merge(config, _load_file(base_path))
        logger.info(f"Loaded base config from {base_path}")
    else:
        logger.warning(f"Base config not found at {base_path}, using defaults")

    return _load_config_dir(config, Path(config_dir) / "config.d")


def apply_cli_overrides(config: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Apply flag values (None means 'not given') on top of the merged config."""
    result = copy.deepcopy(config)
    for flag, value in overrides.items():
        if value is None:
            continue
        if flag in CLI_OVERRIDES:
            section, key = CLI_OVERRIDES[flag]
            result.setdefault(section, {})[key] = value
        elif flag.startswith("source_"):
            result.setdefault("source", {})[flag[len("source_"):]] = value
    return result


def config_hash(config: dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON rendering, with output location and logging excluded."""
    trimmed = copy.deepcopy(config)
    for section, key in HASH_EXCLUDED:
        trimmed.get(section, {}).pop(key, None)
    canonical = json.dumps(trimmed, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def log_config_sources(config: dict[str, Any]) -> None:
    """Log configuration summary."""
    general = config.get("general", {})
    source = config.get("source", {})
    run = config.get("run", {})
    experiment = config.get("experiment", {})

    logger.info(f"Seed: {general.get('seed', 0)}")
    logger.info(f"Source: {source.get('name', 'iid')}")
    logger.info(f"Horizon n={run.get('n')} L={run.get('max_length')} trials={run.get('trials')}")
    if experiment.get("suite"):
        logger.info(f"Suite: {experiment['suite']} (battery {experiment.get('battery', 'default')})")

    for section in ("source", "measure", "run", "experiment", "output"):
        for key, value in config.get(section, {}).items():
            logger.debug(f"  [{section}] {key}={value}")
