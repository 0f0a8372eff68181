"""Cost-aware contextual Bayesian optimization benchmarks.

Thin convenience layer over the compiled core: config arguments may be
dicts or JSON text, and results come back as numpy arrays.
"""

import json as _json

from ._core import (  # noqa: F401
    GpModel,
    __version__,
    ackley5,
    baseline_names,
    fit_gp,
    hartmann6,
    kl_univariate,
    sobol_indices,
    sobol_report,
    sobol_sequence,
    summarize,
)
from . import _core


def _as_json_text(config):
    if isinstance(config, str):
        return config
    return _json.dumps(config)


def normalize_config(config):
    """Resolved experiment config (defaults applied, values validated)."""
    return _json.loads(_core.normalize_config(_as_json_text(config)))


def run_trial(config, baseline="SADCBO", trial=0, cell=0):
    """One seeded trial of a config cell; returns per-iteration arrays."""
    return _core.run_trial(_as_json_text(config), baseline, trial, cell)


def run_experiment(config, out_dir, workers=0):
    """Run all cells/baselines/trials and write the CSV artifacts."""
    return _core.run_experiment(_as_json_text(config), str(out_dir), workers)
