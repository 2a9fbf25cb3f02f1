import os
import json
import logging

from dotenv import load_dotenv
"""
This module defines the runtime configuration for trawlkit.
Attributes:
    JOBS (int): Default worker count for Monte Carlo and rolling forecasts (TRAWLKIT_JOBS, 0 = all CPUs).
    PRECISION (int): Significant digits for report tables (TRAWLKIT_PRECISION).
    MASTER_SEED (int): Default master seed when a command is given none (TRAWLKIT_SEED).
    TAIL_TOL (float): Relative tail mass left outside the simulated trawl (TRAWLKIT_TAIL_TOL).
    MAX_SLICES (int): Budget of slice draws per simulated path (TRAWLKIT_MAX_SLICES).
    CHUNK_CELLS (int): Slice draws generated per simulation block (TRAWLKIT_CHUNK_CELLS).
    study_config (dict): Study defaults loaded from config/model_config.json.
        Keys:
            - "trawl" (dict): Default trawl, e.g. {"kind": "exp", "lambda": 1.0}.
            - "marginal" (dict): Default seed law, e.g. {"kind": "negbin", "theta": 0.2}.
            - "levels" (list): Coverage levels.
            - "fixed_t" (list): Default report times.
            - "fixed_i" (list): Default report indices.
            - "slice_horizons" (list): Default slice horizons h.
            - "runs" (int): Default Monte Carlo runs per cell.
"""
load_dotenv()

logger = logging.getLogger(__name__)

############## PORT and HOST SETTINGS (can be overridden via env vars)
DEFAULT_PORT_NUM_APP = 8000
DEFAULT_HOST_APP = "localhost"

PORT_NUM_APP = int(os.environ.get('PORT_NUM_APP', DEFAULT_PORT_NUM_APP))
HOST_APP = os.environ.get('HOST_APP', DEFAULT_HOST_APP)

############## NUMERICAL SETTINGS
DEFAULT_JOBS = 0
DEFAULT_PRECISION = 6
DEFAULT_MASTER_SEED = 20240101
DEFAULT_TAIL_TOL = 1e-6
DEFAULT_MAX_SLICES = 500_000_000
DEFAULT_CHUNK_CELLS = 2_000_000
DEFAULT_SUBSAMPLE_EXPONENT = 1.0 / 3.0
DEFAULT_CLAMP_EPS = 1e-10


def _env_bool(key, default=False):
    v = os.environ.get(key)
    if v is None:
        return default
    return v.lower() in ("1", "true", "yes", "y")


def _env_int(key, default):
    v = os.environ.get(key)
    if not v:
        return default
    try:
        return int(float(v))
    except ValueError:
        logger.warning(f"Ignoring non-numeric {key}={v!r}, using {default}")
        return default


def _env_float(key, default):
    v = os.environ.get(key)
    if not v:
        return default
    try:
        return float(v)
    except ValueError:
        logger.warning(f"Ignoring non-numeric {key}={v!r}, using {default}")
        return default


JOBS = _env_int('TRAWLKIT_JOBS', DEFAULT_JOBS)
PRECISION = _env_int('TRAWLKIT_PRECISION', DEFAULT_PRECISION)
MASTER_SEED = _env_int('TRAWLKIT_SEED', DEFAULT_MASTER_SEED)
TAIL_TOL = _env_float('TRAWLKIT_TAIL_TOL', DEFAULT_TAIL_TOL)
MAX_SLICES = _env_int('TRAWLKIT_MAX_SLICES', DEFAULT_MAX_SLICES)
CHUNK_CELLS = _env_int('TRAWLKIT_CHUNK_CELLS', DEFAULT_CHUNK_CELLS)
SHOW_PROGRESS = _env_bool('TRAWLKIT_PROGRESS', True)

study_config = {
    "trawl": {"kind": "exp", "lambda": 1.0},
    "marginal": {"kind": "negbin", "theta": 0.2},
    "levels": [0.75, 0.80, 0.85, 0.90, 0.95, 0.99],
    "fixed_t": [0.0, 0.1, 0.5, 1.0, 5.0, 10.0],
    "fixed_i": [0, 1, 5, 10, 20, 30],
    "slice_horizons": [0.1, 0.5, 1.0, 2.0, 5.0],
    "runs": 200,
}


# Runtime file-backed config support
CONFIG_PATH = os.environ.get('CONFIG_PATH', os.path.join(os.path.dirname(__file__), 'config', 'model_config.json'))


def _load_config_file(path):
    """Load overrides from a JSON config file and apply them to study_config and module globals.
    Expected keys: any key of study_config, plus JOBS, PRECISION, MASTER_SEED, TAIL_TOL,
    MAX_SLICES, CHUNK_CELLS, HOST_APP, PORT_NUM_APP.
    """
    try:
        with open(path, 'r') as f:
            cfg = json.load(f)
    except Exception as e:
        raise RuntimeError(f"Failed to read config file {path}: {e}")
    if not isinstance(cfg, dict):
        raise RuntimeError(f"Config file {path} must hold a JSON object")

    for key in study_config:
        if key in cfg:
            study_config[key] = cfg[key]

    # numeric globals; environment variables keep precedence
    for key, env_key, cast in (
        ('JOBS', 'TRAWLKIT_JOBS', int),
        ('PRECISION', 'TRAWLKIT_PRECISION', int),
        ('MASTER_SEED', 'TRAWLKIT_SEED', int),
        ('TAIL_TOL', 'TRAWLKIT_TAIL_TOL', float),
        ('MAX_SLICES', 'TRAWLKIT_MAX_SLICES', int),
        ('CHUNK_CELLS', 'TRAWLKIT_CHUNK_CELLS', int),
        ('PORT_NUM_APP', 'PORT_NUM_APP', int),
        ('HOST_APP', 'HOST_APP', str),
    ):
        if key in cfg and os.environ.get(env_key) is None:
            try:
                globals()[key] = cast(cfg[key])
            except (TypeError, ValueError) as e:
                raise RuntimeError(f"Invalid value for {key} in {path}: {e}")

    return study_config


def reload_model_config(path=None):
    """Reload configuration from JSON file. If path is None, uses CONFIG_PATH env var or default.
    Raises FileNotFoundError if the file is missing and RuntimeError if load fails.
    """
    p = path or os.environ.get('CONFIG_PATH') or CONFIG_PATH
    if not p or not os.path.exists(p):
        raise FileNotFoundError(f"Config path not found: {p}")
    return _load_config_file(p)


def current_settings():
    """Effective numerical settings, for status endpoints and logs."""
    return {
        "JOBS": JOBS,
        "PRECISION": PRECISION,
        "MASTER_SEED": MASTER_SEED,
        "TAIL_TOL": TAIL_TOL,
        "MAX_SLICES": MAX_SLICES,
        "CHUNK_CELLS": CHUNK_CELLS,
        "HOST_APP": HOST_APP,
        "PORT_NUM_APP": PORT_NUM_APP,
        "study_config": dict(study_config),
    }


# Try to load config at import time if present; this is non-fatal.
try:
    if os.path.exists(CONFIG_PATH):
        _load_config_file(CONFIG_PATH)
except Exception as e:
    # admin endpoint or manual reload surfaces the problem
    logger.warning(f"Ignoring unreadable config at import: {e}")
