"""Grasp force estimation from retrieved prior grasps.

Thin wrapper over the C++ core. Report-producing calls return parsed JSON.
"""

import json

from ._expforce import (
    ExpforceError,
    adaptive_force_search,
    classify_outcome,
    cli,
    closed_form_fstar,
    compute_metrics,
    cosine_similarity,
    lint_template,
    load_pool,
    parse_force,
    predict,
    synth_pool,
    top_k,
)
from . import _expforce

__all__ = [
    "ExpforceError",
    "adaptive_force_search",
    "classify_outcome",
    "cli",
    "closed_form_fstar",
    "compute_metrics",
    "cosine_similarity",
    "lint_template",
    "load_pool",
    "parse_force",
    "predict",
    "run_cv",
    "run_sweep",
    "synth_pool",
    "top_k",
]


def run_cv(pool_dir, backend="expforce", k=7, folds=5, seed=None, config=None, concurrency=None, out_dir=None):
    """k-fold cross-validation; returns the report.json content as a dict."""
    return json.loads(
        _expforce.run_cv_json(str(pool_dir), backend, k, folds, seed,
                              None if config is None else str(config), concurrency,
                              None if out_dir is None else str(out_dir)))


def run_sweep(pool_dir, backend="expforce", ks=(1, 3, 5, 7, 10), folds=5, seed=None, config=None, out_dir=None):
    """One cross-validation per k over shared folds; returns the sweep report as a dict."""
    return json.loads(
        _expforce.run_sweep_json(str(pool_dir), backend, list(ks), folds, seed,
                                 None if config is None else str(config),
                                 None if out_dir is None else str(out_dir)))
