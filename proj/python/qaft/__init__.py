"""Bayesian accelerated failure time models with quantile-varying effects."""

import json
import os

from ._qaft import (
    Dataset,
    DomainError,
    Fit,
    NumericalError,
    ValidationError,
    baseline_survivor,
    ess,
    psis_loo,
    rhat,
)
from ._qaft import Model as _Model

__all__ = [
    "Dataset",
    "DomainError",
    "Fit",
    "Model",
    "NumericalError",
    "ValidationError",
    "baseline_survivor",
    "ess",
    "psis_loo",
    "rhat",
]


def Model(config):
    """Build a model from a config dict, a JSON string, or a path to a JSON file."""
    if isinstance(config, dict):
        text = json.dumps(config)
    elif isinstance(config, (str, os.PathLike)) and os.path.exists(config):
        with open(config) as f:
            text = f.read()
    else:
        text = config
    return _Model(text)
