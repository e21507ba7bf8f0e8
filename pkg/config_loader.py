# -*- coding: utf-8 -*-
from __future__ import annotations

import os

from dotenv import dotenv_values

from hvselect.errors import ConfigError

DEFAULT_CONFIG = {
    "OUTPUT_DIR": "./hvs_output",
    "THREADS": 0,
    "SEED": 0,
    "CV_FOLDS": 5,
    "AVAILABILITY_THRESHOLD": 0.8,
    "MIN_DAILY_OBS": 60,
    "WINDOW_YEARS": 5,
    "ENABLE_LOGGER": False,
    "LOG_LEVEL": "INFO",
    "LOG_DIR": "./.logs",
    "RENDER_CHARTS": False,
}

BOOL_VALUES = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _cast(key: str, value, default):

    if not isinstance(value, str):
        return value

    value = value.strip()

    try:
        if isinstance(default, bool):
            return BOOL_VALUES[value.lower()]
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None

    return value


def load_config(env_file: str = "./.env", environ: dict = None) -> dict:

    CONFIGS = dict(DEFAULT_CONFIG)

    if os.path.isfile(env_file):
        CONFIGS.update({k: v for k, v in dotenv_values(env_file).items() if k in DEFAULT_CONFIG and v is not None})

    environ = os.environ if environ is None else environ

    for key in DEFAULT_CONFIG:
        try:
            CONFIGS[key] = environ[key]
        except KeyError:
            continue

    for key, default in DEFAULT_CONFIG.items():
        CONFIGS[key] = _cast(key, CONFIGS[key], default)

    if not 0 < CONFIGS["AVAILABILITY_THRESHOLD"] <= 1:
        raise ConfigError(f"AVAILABILITY_THRESHOLD must be in (0, 1], got {CONFIGS['AVAILABILITY_THRESHOLD']}")

    if CONFIGS["THREADS"] < 0:
        raise ConfigError(f"THREADS cannot be negative, got {CONFIGS['THREADS']}")

    return CONFIGS
