"""Output artifacts: fingerprinted CSV/JSON writers and run configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .env import EnvConfig
from .errors import LoadError
from .estimation import OptimizerSettings
from .nmpc import NmpcConfig
from .profiles import ProfileSpec
from .td3 import Td3Config


def config_fingerprint(resolved: dict) -> str:
    """Stable short hash of a fully resolved run configuration.

    Where artifacts land (and whether timing fields are suppressed) does not
    change what was computed, so those keys stay out of the hash.
    """
    body = {k: v for k, v in resolved.items() if k not in ("output_dir", "deterministic")}
    blob = json.dumps(body, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_csv(path, header, rows, fingerprint=""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        if fingerprint:
            f.write(f"# fingerprint={fingerprint}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_json(path, payload, fingerprint=""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    if fingerprint:
        body["fingerprint"] = fingerprint
    with open(path, "w") as f:
        json.dump(body, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


DEFAULT_CONFIG = {
    "cell_params": None,  # null -> bundled default cell
    "output_dir": "celloed_out",
    "seed": 0,
    "deterministic": False,
    "target": "k_p",
    "env": {},
    "td3": {"max_episodes": 1000},
    "nmpc": {},
    "estimation": {"n_starts": 10, "noise_sigma": 0.0, "optimizer": {}},
    "profile": {"kind": "cc_discharge", "c_rate": 1.0, "total_length_s": 3800.0},
    "map": {"c_rates": [0.5, 1.0, 2.0, 3.0, 5.0],
            "soc_grid": [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95],
            "temperature_K": 298.15},
    "compare": {"methods": []},
}


def load_run_config(path=None, overrides=None) -> dict:
    """Merge defaults, an optional config file, and CLI overrides."""
    resolved = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise LoadError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise LoadError(f"malformed JSON config {path}: {exc}") from exc
        for key, val in user.items():
            if key not in resolved:
                raise LoadError(f"unknown config section {key!r} in {path}")
            if isinstance(resolved[key], dict) and isinstance(val, dict):
                resolved[key].update(val)
            else:
                resolved[key] = val
    for key, val in (overrides or {}).items():
        if val is not None:
            resolved[key] = val
    if resolved["target"] not in ("k_p", "k_n"):
        raise LoadError(f"target must be k_p or k_n, got {resolved['target']!r}")
    return resolved


def _build(cls, section: dict, **extra):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise LoadError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    merged = {**section, **extra}
    return cls(**merged)


def build_env_config(resolved) -> EnvConfig:
    return _build(EnvConfig, resolved["env"], target=resolved["target"])


def build_td3_config(resolved) -> Td3Config:
    section = dict(resolved["td3"])
    if "hidden_sizes" in section:
        section["hidden_sizes"] = tuple(section["hidden_sizes"])
    return _build(Td3Config, section, seed=resolved["seed"])


def build_nmpc_config(resolved) -> NmpcConfig:
    section = dict(resolved["nmpc"])
    for key in ("i_bounds", "v_bounds"):
        if key in section:
            section[key] = tuple(section[key])
    return _build(NmpcConfig, section)


def build_profile_spec(resolved) -> ProfileSpec:
    section = dict(resolved["profile"])
    if "soc_stops" in section:
        section["soc_stops"] = tuple(section["soc_stops"])
    return _build(ProfileSpec, section)


def build_optimizer_settings(resolved) -> OptimizerSettings:
    return _build(OptimizerSettings, resolved["estimation"].get("optimizer", {}))
