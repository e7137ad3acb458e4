"""Adversarial machine unlearning: Python bindings over the C++ core."""

import json

from ._core import (  # noqa: F401
    ConfigError,
    Dataset,
    Defender,
    EvaluationError,
    NumericError,
    ParseError,
    ShapeError,
    SplitSet,
    accuracy,
    gen_synthetic,
    load_dataset,
    make_splits,
    modified_entropy,
    parse_config,
    prediction_entropy,
    prune,
    save_dataset_binary,
    table_csv,
)
from . import _core


def avg_disparity(report: dict, gold: dict) -> float:
    """Mean absolute gap over UA, MIA-Efficacy, RA and TA."""
    return _core.avg_disparity(json.dumps(report), json.dumps(gold))


def run_experiment(config_text: str, overrides=()) -> dict:
    """Runs every seed of a config and returns the aggregate report."""
    return json.loads(_core.run_experiment(config_text, list(overrides)))
