"""Feynman-Kac oracles, particle filters and stability checks."""

import json as _json

from ._core import (
    FiniteModel,
    FKTrajectory,
    FkstabError,
    IoError,
    NumericalError,
    ValidationError,
    __version__,
    asymptotic_variance,
    exact_filter,
    finite_model,
    h_functions,
    kalman_log_z,
    relvar_expansion,
    run_filter,
    two_state_model,
)
from . import _core


def check_finite_drift(model, delta, levels):
    """Drift certificate of a finite model as a dict."""
    return _json.loads(_core.check_finite_drift_json(model, delta, list(levels)))


def resolve_config(config):
    """Resolved experiment config (all defaults filled) as a dict."""
    return _json.loads(_core.resolve_config_json(_json.dumps(config)))


def execute(config, workers=1):
    """Run an experiment config; returns (summary dict, results CSV text)."""
    summary, csv = _core.execute_config_json(_json.dumps(config), workers)
    return _json.loads(summary), csv


__all__ = [
    "FiniteModel",
    "FKTrajectory",
    "FkstabError",
    "IoError",
    "NumericalError",
    "ValidationError",
    "__version__",
    "asymptotic_variance",
    "check_finite_drift",
    "exact_filter",
    "execute",
    "finite_model",
    "h_functions",
    "kalman_log_z",
    "relvar_expansion",
    "resolve_config",
    "run_filter",
    "two_state_model",
]
