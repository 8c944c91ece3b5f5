"""Flat key = value configuration files driving the whole pipeline.

Lines are ``key = value`` with ``#`` comments; keys are typed and closed
(unknown keys are an error naming the key). One file can configure the
encoder, the masking, and the toy training loop together.
"""
from __future__ import annotations

from pathlib import Path

from .encoder import COMBINATION_MODES, EncoderConfig
from .errors import ConfigError
from .training import TrainConfig

__all__ = ["load_config", "encoder_config_from", "train_config_from", "CONFIG_KEYS"]


def _parse_bool(v: str) -> bool:
    if v.lower() in ("true", "1", "yes", "on"):
        return True
    if v.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(v)


def _parse_branches(v: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in v.split(","):
        k, _, d = part.strip().partition("x")
        out.append((int(k), int(d)))
    return tuple(out)


def _parse_strides(v: str) -> tuple[int, ...]:
    return tuple(int(s) for s in v.split(","))


def _parse_alpha(v: str):
    if "," in v:
        return tuple(float(a) for a in v.split(","))
    return float(v)


def _parse_mode(v: str) -> str:
    if v not in COMBINATION_MODES:
        raise ValueError(v)
    return v


CONFIG_KEYS = {
    # encoder
    "alpha": _parse_alpha,
    "stem_channels": int,
    "stages": int,
    "stage_strides": _parse_strides,
    "group_count": int,
    "frequency_policy": str,
    "branches": _parse_branches,
    "receptive_field": int,
    "combination_mode": _parse_mode,
    "symmetric_recouple": _parse_bool,
    "normalized_basis": _parse_bool,
    "seed": int,
    "dtype": str,
    # training
    "learning_rate": float,
    "momentum": float,
    "weight_decay": float,
    "steps": int,
    "batch_size": int,
    "image_size": int,
    "image_count": int,
    "mask_ratio": float,
    "mask_patch": int,
}

_ENCODER_KEYS = ("alpha", "stem_channels", "stages", "stage_strides", "group_count",
                 "frequency_policy", "branches", "receptive_field", "combination_mode",
                 "symmetric_recouple", "normalized_basis", "seed", "dtype")
_TRAIN_KEYS = ("learning_rate", "momentum", "weight_decay", "steps", "batch_size",
               "image_size", "image_count", "mask_ratio", "mask_patch")


def load_config(path) -> dict:
    """Parse a config file into typed values; unknown keys are rejected by name."""
    text = Path(path).read_text()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except (ValueError, TypeError):
            raise ConfigError(f"{path}:{lineno}: bad value for key {key!r}: {value!r}") from None
    return values


def encoder_config_from(values: dict, seed_override: int | None = None) -> EncoderConfig:
    kwargs = {k: v for k, v in values.items() if k in _ENCODER_KEYS}
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return EncoderConfig(**kwargs)


def train_config_from(values: dict, seed_override: int | None = None,
                      steps_override: int | None = None) -> TrainConfig:
    kwargs = {k: v for k, v in values.items() if k in _TRAIN_KEYS}
    if "seed" in values:
        kwargs["seed"] = values["seed"]
    if seed_override is not None:
        kwargs["seed"] = seed_override
    if steps_override is not None:
        kwargs["steps"] = steps_override
    return TrainConfig(**kwargs)
