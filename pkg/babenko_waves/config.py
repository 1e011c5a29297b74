"""
================================================================================
babenko_waves/config.py - Run Configuration
================================================================================

PURPOSE:
    Validated run configuration shared by every CLI command.

HOW IT WORKS:
    Layers are merged in increasing precedence:
        1. CONFIG_SCHEMA defaults
        2. packaged config.yaml
        3. user YAML file (--config)
        4. BABENKO_<KEY> environment variables
        5. explicit CLI flags (overrides)
    The merged dict is validated once; every violation is collected and
    reported in a single ValueError before any numerics run.

TUNABLE:
    - Edit babenko_waves/config.yaml or pass --config FILE
    - BABENKO_OUT_DIR: default output directory
================================================================================
"""

import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from babenko_waves.babenko_eq import EXTREME_N
from babenko_waves.continuation import ContinuationConfig

ENV_PREFIX = "BABENKO_"

PACKAGED_CONFIG = Path(__file__).with_name("config.yaml")

# Allowed config fields with types and constraints
CONFIG_SCHEMA: Dict[str, Dict[str, Any]] = {
    "R": {"type": float, "default": 0.0, "min": 0.0, "max_exclusive": 1.0},
    "MODE": {"type": int, "default": 1, "min": 1},
    "N": {"type": int, "default": 256, "min": 4, "max": 8192},
    "MAX_N": {"type": int, "default": EXTREME_N, "min": 4, "max": 8192},
    "NEWTON_TOL": {"type": float, "default": 1e-10, "min_exclusive": 0.0},
    "MAX_NEWTON_ITERS": {"type": int, "default": 25, "min": 1, "max": 1000},
    "INITIAL_STEP": {"type": float, "default": 1e-3, "min_exclusive": 0.0},
    "MAX_STEP": {"type": float, "default": 1e-2, "min_exclusive": 0.0},
    "MIN_STEP": {"type": float, "default": 1e-7, "min_exclusive": 0.0},
    "STEP_SHRINK": {"type": float, "default": 0.5, "min_exclusive": 0.0, "max_exclusive": 1.0},
    "STEP_GROW": {"type": float, "default": 1.2, "min": 1.0},
    "MAX_POINTS": {"type": int, "default": 2000, "min": 1},
    "MAX_AMPLITUDE": {"type": float, "default": math.inf, "min": 0.0},
    "DEALIAS": {"type": bool, "default": False},
    "FORMAT": {"type": str, "default": "json", "allowed": ["json", "csv"]},
    "OUT_DIR": {"type": str, "default": "./babenko_out"},
    "SWITCH_SIGN": {"type": int, "default": 1, "allowed": [1, -1]},
    "SWITCH_EPS": {"type": float, "default": 1e-3, "min_exclusive": 0.0, "max": 0.1},
    "SAMPLES": {"type": int, "default": 512, "min": 64},
    "JOBS": {"type": int, "default": 1, "min": 1, "max": 256},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def default_config() -> Dict[str, Any]:
    return {key: schema["default"] for key, schema in CONFIG_SCHEMA.items()}


def _normalize(key: str, value: Any) -> Any:
    """Integers are accepted where floats are expected; bools never are."""
    expected = CONFIG_SCHEMA[key]["type"]
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def validate_config(config: Mapping[str, Any]) -> None:
    """
    Validate configuration against CONFIG_SCHEMA.

    RAISES:
        ValueError: listing every unknown field, type error and range
                    violation found
    """
    errors = []

    for key in config.keys():
        if key not in CONFIG_SCHEMA:
            errors.append(f"Unknown config field: {key}")

    for key, schema in CONFIG_SCHEMA.items():
        if key not in config:
            continue
        value = _normalize(key, config[key])
        expected = schema["type"]

        if isinstance(value, bool) and expected is not bool:
            errors.append(f"Invalid type for {key}: expected {expected.__name__}, got bool")
            continue
        if not isinstance(value, expected):
            errors.append(
                f"Invalid type for {key}: expected {expected.__name__}, got {type(value).__name__}"
            )
            continue
        if expected is float and math.isnan(value):
            errors.append(f"Invalid value for {key}: nan")
            continue

        if "min" in schema and value < schema["min"]:
            errors.append(f"Value for {key} too small: {value} < {schema['min']}")
        if "min_exclusive" in schema and value <= schema["min_exclusive"]:
            errors.append(f"Value for {key} must be > {schema['min_exclusive']}, got {value}")
        if "max" in schema and value > schema["max"]:
            errors.append(f"Value for {key} too large: {value} > {schema['max']}")
        if "max_exclusive" in schema and value >= schema["max_exclusive"]:
            errors.append(f"Value for {key} must be < {schema['max_exclusive']}, got {value}")
        if "allowed" in schema and value not in schema["allowed"]:
            errors.append(f"Invalid value for {key}: {value}. Allowed: {schema['allowed']}")

    if not errors and {"MIN_STEP", "INITIAL_STEP", "MAX_STEP"} <= set(config):
        lo, mid, hi = (float(config[k]) for k in ("MIN_STEP", "INITIAL_STEP", "MAX_STEP"))
        if not lo < mid <= hi:
            errors.append(
                f"Step sizes must satisfy MIN_STEP < INITIAL_STEP <= MAX_STEP, got {lo}, {mid}, {hi}"
            )

    if errors:
        raise ValueError("Config validation failed:\n  - " + "\n  - ".join(errors))


def _parse_env_value(key: str, raw: str) -> Any:
    expected = CONFIG_SCHEMA[key]["type"]
    text = raw.strip()
    if expected is bool:
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValueError(f"{ENV_PREFIX}{key}={raw!r} is not a boolean")
    if expected is int:
        return int(text)
    if expected is float:
        return float(text)
    return text


def _read_yaml(path: Path) -> Dict[str, Any]:
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain a mapping, got {type(data).__name__}")
    return data


def _from_env(env: Mapping[str, str]) -> Dict[str, Any]:
    values, errors = {}, []
    for key in CONFIG_SCHEMA:
        raw = env.get(ENV_PREFIX + key)
        if raw is None or raw == "":
            continue
        try:
            values[key] = _parse_env_value(key, raw)
        except ValueError as exc:
            errors.append(f"Invalid {ENV_PREFIX}{key}: {exc}")
    if errors:
        raise ValueError("Config validation failed:\n  - " + "\n  - ".join(errors))
    return values


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one CLI run."""

    r: float
    mode: int
    n_modes: int
    max_modes: int
    newton_tol: float
    max_newton_iters: int
    initial_step: float
    max_step: float
    min_step: float
    step_shrink: float
    step_grow: float
    max_points: int
    max_amplitude: float
    dealias: bool
    format: str
    out_dir: str
    switch_sign: int
    switch_eps: float
    samples: int
    jobs: int

    @classmethod
    def from_dict(cls, config: Mapping[str, Any]) -> "RunConfig":
        merged = {**default_config(), **config}
        merged = {key: _normalize(key, value) for key, value in merged.items()}
        validate_config(merged)
        return cls(
            r=merged["R"],
            mode=merged["MODE"],
            n_modes=merged["N"],
            max_modes=merged["MAX_N"],
            newton_tol=merged["NEWTON_TOL"],
            max_newton_iters=merged["MAX_NEWTON_ITERS"],
            initial_step=merged["INITIAL_STEP"],
            max_step=merged["MAX_STEP"],
            min_step=merged["MIN_STEP"],
            step_shrink=merged["STEP_SHRINK"],
            step_grow=merged["STEP_GROW"],
            max_points=merged["MAX_POINTS"],
            max_amplitude=merged["MAX_AMPLITUDE"],
            dealias=merged["DEALIAS"],
            format=merged["FORMAT"],
            out_dir=merged["OUT_DIR"],
            switch_sign=merged["SWITCH_SIGN"],
            switch_eps=merged["SWITCH_EPS"],
            samples=merged["SAMPLES"],
            jobs=merged["JOBS"],
        )

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    @property
    def switch_eps_factors(self):
        return (self.switch_eps, 10.0 * self.switch_eps, 100.0 * self.switch_eps)

    def continuation_config(self, **changes) -> ContinuationConfig:
        values = dict(
            newton_tol=self.newton_tol,
            max_newton_iters=self.max_newton_iters,
            initial_step=self.initial_step,
            max_step=self.max_step,
            min_step=self.min_step,
            step_shrink=self.step_shrink,
            step_grow=self.step_grow,
            max_points=self.max_points,
            max_amplitude=self.max_amplitude,
            dealias=self.dealias,
            max_modes=self.max_modes,
        )
        values.update(changes)
        return ContinuationConfig(**values)

    def snapshot(self) -> Dict[str, Any]:
        """UPPER_CASE dict for file headers; infinities become strings."""
        out = {}
        for key, value in zip(CONFIG_SCHEMA, asdict(self).values()):
            if isinstance(value, float) and not math.isfinite(value):
                value = str(value)
            out[key] = value
        return out


def load_config(
    path: Optional[os.PathLike] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Build the RunConfig from all configuration layers.

    ARGS:
        path: optional user YAML file
        env: environment mapping (os.environ if omitted)
        overrides: explicit values from CLI flags; None entries are ignored

    RAISES:
        ValueError: invalid values in any layer
        FileNotFoundError: `path` does not exist
    """
    env = os.environ if env is None else env
    merged = default_config()
    if PACKAGED_CONFIG.exists():
        packaged = _read_yaml(PACKAGED_CONFIG)
        validate_config(packaged)
        merged.update(packaged)
    if path is not None:
        user = _read_yaml(Path(path))
        validate_config(user)
        merged.update(user)
    merged.update(_from_env(env))
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(merged)
