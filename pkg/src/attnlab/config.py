"""Experiment configuration: TOML files overridden by command-line flags.

Every experiment echoes its full configuration verbatim into its outputs, so
a report is reproducible from the report alone.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .errors import ConfigError

_DEFAULTS = {
    "seed": 0,
    "out": "out",
    "workers": 1,
    "force": False,
    "figures": True,
    # attention / experiment parameters
    "variant": "inline",
    "kernel": "identity",
    "kernel_params_file": "",  # optional INLA file holding affine (A, b)
    "window": 0,              # 0 means no window
    "temperature": 1.0,
    "n": 197,
    "d": 16,
    "heads": 1,
    "threshold": 1e-3,
    "separation": 0.1,
    "queries": 150,
    "layers": 4,
    "grid_h": 14,
    "grid_w": 14,
    "cls_token": True,
    "query_mode": "gaussian",  # gaussian | collinear
    # equiv
    "equiv_cases": 200,
    "equiv_tolerance": 1e-9,
    "perturb": 0.0,
    # train / mask
    "train_samples": 1536,
    "test_samples": 2048,
    "epochs": 8,
    "batch_size": 128,
    "learning_rate": 0.03,
    "momentum": 0.9,
    "train_seeds": 5,
    "model_dim": 32,
    "model_heads": 2,
    "depth": 2,
    "train_grid": 8,
    "suite": "orderings",
    "masks": "none,local3,local5,local7,rand9,rand25,rand49",
    # bench
    "n_values": "256,512,1024,2048,4096,8192,16384",
    "windows": "7,14,28,56",
    "bench_grid": 56,
    "repetitions": 5,
    "min_window_seconds": 0.02,
}


@dataclass
class ExperimentConfig:
    """One experiment's full parameter set; echoed into every artifact."""

    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        if name in values:
            return values[name]
        raise AttributeError(name)

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, **self.values}

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out"])

    def int_list(self, key: str) -> list[int]:
        raw = self.values[key]
        if isinstance(raw, (list, tuple)):
            return [int(v) for v in raw]
        try:
            return [int(tok) for tok in str(raw).split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"{key} must be a comma-separated integer list") from exc

    def str_list(self, key: str) -> list[str]:
        raw = self.values[key]
        if isinstance(raw, (list, tuple)):
            return [str(v) for v in raw]
        return [tok.strip() for tok in str(raw).split(",") if tok.strip()]


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc


def build_config(subcommand: str, config_path=None, overrides=None) -> ExperimentConfig:
    """defaults <- TOML file <- explicit flag overrides (flags win)."""
    values = dict(_DEFAULTS)
    if config_path is not None:
        loaded = load_toml(config_path)
        for key, val in loaded.items():
            if key not in values:
                raise ConfigError(f"unknown config key '{key}'")
            values[key] = val
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in values:
            raise ConfigError(f"unknown override '{key}'")
        values[key] = val
    return ExperimentConfig(subcommand, values)
