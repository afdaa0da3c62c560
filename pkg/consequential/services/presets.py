"""
Named environments and their default hyperparameters.

Presets fill in the config keys a run file leaves out; explicit keys in
the file always win.
"""

import logging
from typing import Any, Dict

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import norm

from ..errors import ConfigError
from ..schemas import EnvironmentName
from .environments import (
    GaussianBumpsCurve,
    PowerSigmoidCurve,
    ScoreTableSpec,
    SyntheticSettingSpec,
)
from .oracle import DiscreteEnv

logger = logging.getLogger(__name__)


# ============ Synthetic Settings ============

SYNTHETIC_PRESETS: Dict[str, SyntheticSettingSpec] = {
    # Monotone but uncalibrated conditional, optimal boundary at x = -0.3 for c = 0.142
    "setting1": SyntheticSettingSpec(
        group_means=(-0.5, 0.5),
        group_sd=3.5,
        truncation=(-0.8, 0.8),
        conditional=PowerSigmoidCurve(slope=8.0, exponent=0.25, pin_x=-0.3, pin_p=0.142),
    ),
    # Bimodal conditional crossing c = 0.55 on two disjoint intervals
    "setting2": SyntheticSettingSpec(
        group_means=(-1.5, 1.5),
        group_sd=3.5,
        conditional=GaussianBumpsCurve(baseline=0.1, heights=[0.8, 0.8], centers=[-3.0, 3.0], width=1.5),
    ),
}


def synthetic_preset(name: str) -> SyntheticSettingSpec:
    try:
        return SYNTHETIC_PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown synthetic preset '{name}'", [f"available presets: {', '.join(sorted(SYNTHETIC_PRESETS))}"]
        ) from None


# ============ Two-Region Construction ============

TWO_REGION_COST = 0.6
TWO_REGION_INITIAL_WEIGHTS = (1.0, 3.0)


def two_region_env() -> DiscreteEnv:
    """
    Region A (x = -1) is profitable, P(y=1) = 0.8 > c, but the initial
    predictor scores it sigmoid(-2) and rejects it. Region B (x = +1) always
    repays and is accepted. Labels from B alone never move the predictor's
    value on A, so a threshold rule stays on its initial decisions.
    """
    return DiscreteEnv(
        points=[-1.0, -1.0, 1.0, 1.0],
        groups=[0, 1, 0, 1],
        probabilities=[0.25, 0.25, 0.25, 0.25],
        conditionals=[0.8, 0.8, 1.0, 1.0],
    )


# ============ Stand-In Data ============

STANDIN_SCORES = np.arange(300, 821)
STANDIN_GROUP_WEIGHTS = (0.8, 0.2)
STANDIN_SCORE_MEANS = (640.0, 580.0)
STANDIN_SCORE_SD = 80.0


def standin_score_table() -> ScoreTableSpec:
    """Per-group normal score distributions discretized to 300..820, monotone repayment."""
    scores = STANDIN_SCORES.astype(float)
    cdfs = []
    for mean in STANDIN_SCORE_MEANS:
        dist = norm(loc=mean, scale=STANDIN_SCORE_SD)
        lo, hi = dist.cdf(scores[0] - 0.5), dist.cdf(scores[-1] + 0.5)
        cdf = (dist.cdf(scores + 0.5) - lo) / (hi - lo)
        cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
        cdf[-1] = 1.0
        cdfs.append(cdf.tolist())
    repay = (0.02 + 0.96 * expit((scores - 640.0) / 22.0)).tolist()
    return ScoreTableSpec(
        scores=STANDIN_SCORES.tolist(),
        cdf=(cdfs[0], cdfs[1]),
        repay=(repay, list(repay)),
        group_weights=STANDIN_GROUP_WEIGHTS,
    )


def standin_dataset(n: int = 6000, seed: int = 0) -> pd.DataFrame:
    """
    A recidivism-style table with columns priors, age, s, y.

    y = 1 means no reoffense. Its probability is a power of a sigmoid in
    (priors, age), so no logistic model is well specified for it.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    s = (rng.random(n) < 0.4).astype(np.int64)
    priors = rng.poisson(np.where(s == 1, 3.5, 2.0))
    age = np.clip(np.round(18.0 + rng.gamma(2.0, 8.0, size=n)), 18, 80).astype(np.int64)
    shelf = expit(1.6 - 0.45 * priors + 0.06 * (age - 35.0)) ** 3
    p = 0.1 + 0.85 * shelf
    y = (rng.random(n) < p).astype(np.int64)
    return pd.DataFrame({"priors": priors, "age": age, "s": s, "y": y})


# ============ Hyperparameter Defaults ============

PRESET_DEFAULTS: Dict[EnvironmentName, Dict[str, Any]] = {
    EnvironmentName.SETTING1: {
        "cost": 0.142,
        "alpha": 1.0,
        "batch_size": 256,
        "iterations": 128,
        "decisions": 256 * 128,
        "timesteps": 200,
        "init_theta": [-1.0, 2.0],
        "init_predictor_weights": [-5.8, 8.0],
    },
    EnvironmentName.SETTING2: {
        "cost": 0.55,
        "alpha": 0.5,
        "batch_size": 512,
        "iterations": 32,
        "decisions": 512 * 32,
        "timesteps": 200,
        "decay_factor": 0.8,
        "decay_period": 30,
        "init_theta": [-1.0, 0.5],
        "init_predictor_weights": [-1.0, 0.5],
    },
    EnvironmentName.TWO_REGION: {
        "cost": TWO_REGION_COST,
        "alpha": 1.0,
        "batch_size": 64,
        "iterations": 32,
        "decisions": 256,
        "timesteps": 200,
        "init_theta": list(TWO_REGION_INITIAL_WEIGHTS),
        "init_predictor_weights": list(TWO_REGION_INITIAL_WEIGHTS),
    },
    EnvironmentName.STANDIN_DATASET: {
        "cost": 0.6,
        "alpha": 0.1,
        "batch_size": 64,
        "iterations": 40 * 64,
        "decisions": 64 * 64,
        "timesteps": 200,
        "init_sample_size": 500,
        "strategies": ["deterministic", "logistic"],
    },
    EnvironmentName.DATASET: {
        "cost": 0.6,
        "alpha": 0.1,
        "batch_size": 64,
        "iterations": 40 * 64,
        "decisions": 64 * 64,
        "timesteps": 200,
        "init_sample_size": 500,
        "strategies": ["deterministic", "logistic"],
    },
    EnvironmentName.SCORE_TABLE: {
        "cost": 0.7,
        "alpha": 0.5,
        "batch_size": 256,
        "iterations": 64,
        "decisions": 256 * 64,
        "timesteps": 200,
        "init_sample_size": 500,
        "feature_center": 560.0,
        "feature_scale": 260.0,
    },
}


def preset_defaults(environment: EnvironmentName) -> Dict[str, Any]:
    """A copy of the default keys for ``environment``."""
    return {key: (list(value) if isinstance(value, list) else value)
            for key, value in PRESET_DEFAULTS[EnvironmentName(environment)].items()}
