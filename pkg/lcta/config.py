import copy
from pathlib import Path

import matplotlib
import numpy as np
import yaml

from lcta.utils.errors import DomainError

# get 3 colors from viridis for curves
curve_color = matplotlib.colormaps["viridis"](np.linspace(0, 1, 3))

cfg_colors = {"curve": curve_color}

# Defaults of every configurable value, by section. Precedence: flags > config file > defaults.
DEFAULTS = {
    "calibration": {
        "tol": 1e-6,
        "max_iter": 100,
        "newton_tol": 1e-8,
        "max_newton_iter": 50,
        "max_halvings": 30,
        "a_bounds": [0.2, 4.0],
        "b_bounds": [-4.0, 4.0],
        "theta_bounds": [-4.0, 4.0],
    },
    "policy": {"absence": "as-incorrect"},
    "trend": {"kind": "cumulative", "k_range": None, "item_source": "prefix"},
    "similarity": {"n_neighbors": 10, "k": [11], "tie_break": "student_id", "mode": "loo"},
    "simulate": {
        "n_students": 1127,
        "items_per_test": 5,
        "n_tests": 14,
        "seed": 42,
        "a_log_sd": 0.3,
        "b_drift": 0.05,
        "absence_rate": 0.03,
        "alpha": 2.25,
        "beta": 1.8,
    },
    "evaluate": {"cutoffs": [0.3, 0.4, 0.5], "emit_svg": False, "bin_width": 0.25},
}


def load_config(file_path: str | Path | None) -> dict:
    """
    Reads a YAML run configuration.

    The file holds any subset of the ``DEFAULTS`` sections. An absent path yields an empty
    configuration.

    Raises:
        DomainError: If the file is not a mapping of known sections.
    """
    if file_path is None:
        return {}
    with open(file_path, encoding="utf-8") as handle:
        try:
            config = yaml.safe_load(handle) or {}
        except yaml.YAMLError as err:
            raise DomainError(f"Config file '{file_path}' is not valid YAML: {err}") from err
    if not isinstance(config, dict):
        raise DomainError(f"Config file '{file_path}' must hold a mapping of sections.")
    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise DomainError(f"Unknown config section(s) {sorted(unknown)}.")
    for section, values in config.items():
        if values is not None and not isinstance(values, dict):
            raise DomainError(f"Config section '{section}' must be a mapping.")
    return config


def resolve_config(file_config: dict, section: str, **flags) -> dict:
    """
    Resolve one config section: command-line flags over the file over the defaults.

    Flags passed as ``None`` are treated as not given.

    Examples:
        >>> resolve_config({"similarity": {"n_neighbors": 5}}, "similarity", k=[7])
        {'n_neighbors': 5, 'k': [7], 'tie_break': 'student_id', 'mode': 'loo'}
    """
    if section not in DEFAULTS:
        raise DomainError(f"Unknown config section '{section}'.")
    resolved = copy.deepcopy(DEFAULTS[section])
    from_file = file_config.get(section, {}) or {}
    unknown = (set(from_file) | {k for k, v in flags.items() if v is not None}) - set(resolved)
    if unknown:
        raise DomainError(f"Unknown key(s) {sorted(unknown)} in config section '{section}'.")
    resolved.update(copy.deepcopy(from_file))
    resolved.update({key: value for key, value in flags.items() if value is not None})
    return resolved
