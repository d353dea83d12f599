"""settings.yaml loading and resolution into a frozen run configuration."""

from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from src.rank_planner import DEFAULT_MAX_FACTOR, DEFAULT_PROBLEM_CAP, RankCandidate

LOGGER = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = "settings.yaml"


class ConfigError(RuntimeError):
    """Invalid or missing configuration."""


def load_settings(path: str | Path = DEFAULT_SETTINGS_PATH) -> dict:
    """YAML設定ファイルを辞書として読み込む。"""
    try:
        with open(path, "r", encoding="utf-8") as file_obj:
            loaded = yaml.safe_load(file_obj)
    except FileNotFoundError as exc:
        raise ConfigError(f"settings file not found: {path}") from exc
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"Failed to load settings file: {path}") from exc
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"settings root must be a mapping: {path}")
    return loaded


def parse_bool(value, default: bool = False) -> bool:
    """多様な入力値を bool に正規化する。"""
    if value is None:
        return default
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return value.strip().lower() in {"1", "true", "yes", "on"}
    return bool(value)


def apply_overrides(settings: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict:
    """Return a copy of `settings` with dotted keys (e.g. `tv.lambda`) replaced; None is skipped."""
    merged = copy.deepcopy(dict(settings))
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = merged
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {} if child is None else {"path": child}
                node[part] = child
            node = child
        node[parts[-1]] = value
    return merged


def _optional_int_list(value, key: str) -> tuple[int, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        value = [item for item in value.replace("x", ",").split(",") if item.strip()]
    try:
        return tuple(int(item) for item in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"settings: {key} must be a list of integers, got {value!r}") from exc


def _number(value, key: str, cast=float, minimum=None):
    try:
        number = cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"settings: {key} must be numeric, got {value!r}") from exc
    if minimum is not None and number < minimum:
        raise ConfigError(f"settings: {key} must be >= {minimum}, got {number}")
    return number


def _optional_number(value, key: str, cast=float, minimum=None):
    return None if value is None else _number(value, key, cast, minimum)


@dataclass(frozen=True)
class CompletionSettings:
    input: str | None
    mask_path: str | None
    mask_fraction: float
    mask_mode: str
    mask_seed: int
    truth: str | None
    output_dir: str
    dims: tuple[int, ...] | None
    factorization: tuple[int, ...] | None
    max_factor: int
    problem_cap: int
    pad_to: tuple[int, ...] | None
    ranks: tuple[int, ...] | None
    rank_schedule: RankCandidate
    tv_modes: tuple[int, ...]
    tv_lambda: float
    tv_adapt: bool
    gamma: float
    init: str
    box_factor: int | None
    resized_modes: tuple[int, ...]
    sweeps: int
    tolerance: float
    residual_threshold: float | None
    grouped_modes: int
    seed: int
    cv_candidates: tuple[RankCandidate, ...]
    cv_trials: int
    cv_holdout: float
    discord_webhook_url: str | None


def resolve_settings(settings: Mapping[str, Any]) -> CompletionSettings:
    """Validate a raw settings mapping and freeze it."""
    mask = settings.get("mask") or {}
    if isinstance(mask, str):
        mask = {"path": mask}
    tv = settings.get("tv") or {}
    cv = settings.get("cv") or {}
    discord = settings.get("discord") or {}

    init = str(settings.get("init", "interp")).strip().lower()
    if init not in ("interp", "zero"):
        raise ConfigError(f"settings: init must be 'interp' or 'zero', got {init!r}")
    mask_mode = str(mask.get("mode", "iid")).strip().lower()
    if mask_mode not in ("iid", "sensor"):
        raise ConfigError(f"settings: mask.mode must be 'iid' or 'sensor', got {mask_mode!r}")

    schedule_raw = settings.get("rank_schedule") or {"r2": 4, "r_mid": 8}
    try:
        schedule = RankCandidate.parse(schedule_raw)
        candidates = tuple(RankCandidate.parse(item) for item in (cv.get("candidates") or []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"settings: invalid rank schedule: {exc}") from exc

    tv_modes = _optional_int_list(tv.get("modes"), "tv.modes") or ()
    holdout = _number(cv.get("holdout", 0.1), "cv.holdout")
    if not 0.0 < holdout < 1.0:
        raise ConfigError(f"settings: cv.holdout must lie in (0, 1), got {holdout}")
    fraction = _number(mask.get("fraction", 0.1), "mask.fraction")
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"settings: mask.fraction must lie in (0, 1], got {fraction}")

    webhook = discord.get("webhook_url") if isinstance(discord, dict) else None
    return CompletionSettings(
        input=settings.get("input"),
        mask_path=mask.get("path"),
        mask_fraction=fraction,
        mask_mode=mask_mode,
        mask_seed=_number(mask.get("seed", settings.get("seed", 0)), "mask.seed", int),
        truth=settings.get("truth"),
        output_dir=str(settings.get("output_dir") or "out"),
        dims=_optional_int_list(settings.get("dims"), "dims"),
        factorization=_optional_int_list(settings.get("factorization"), "factorization"),
        max_factor=_number(settings.get("max_factor", DEFAULT_MAX_FACTOR), "max_factor", int, 2),
        problem_cap=_number(settings.get("problem_cap", DEFAULT_PROBLEM_CAP), "problem_cap", int, 1),
        pad_to=_optional_int_list(settings.get("pad_to"), "pad_to"),
        ranks=_optional_int_list(settings.get("ranks"), "ranks"),
        rank_schedule=schedule,
        tv_modes=tv_modes,
        tv_lambda=_number(tv.get("lambda", 1.0), "tv.lambda", float, 0.0),
        tv_adapt=parse_bool(tv.get("adapt"), default=True),
        gamma=_number(settings.get("gamma", 0.0), "gamma", float, 0.0),
        init=init,
        box_factor=_optional_number(settings.get("box_factor"), "box_factor", int, 1),
        resized_modes=_optional_int_list(settings.get("resized_modes"), "resized_modes") or (1, 2),
        sweeps=_number(settings.get("sweeps", 10), "sweeps", int, 1),
        tolerance=_number(settings.get("tolerance", 1e-6), "tolerance", float, 0.0),
        residual_threshold=_optional_number(
            settings.get("residual_threshold"), "residual_threshold", float, 0.0
        ),
        grouped_modes=_number(settings.get("grouped_modes", 0), "grouped_modes", int, 0),
        seed=_number(settings.get("seed", 0), "seed", int),
        cv_candidates=candidates,
        cv_trials=_number(cv.get("trials", 10), "cv.trials", int, 1),
        cv_holdout=holdout,
        discord_webhook_url=str(webhook).strip() if webhook else None,
    )


def resolve_discord_webhook_url(settings: CompletionSettings | None = None) -> str | None:
    """Resolve webhook URL from environment first, then settings."""
    env_value = os.environ.get("DISCORD_WEBHOOK_URL")
    if env_value and env_value.strip():
        return env_value.strip()
    if settings is not None and settings.discord_webhook_url:
        return settings.discord_webhook_url
    return None
