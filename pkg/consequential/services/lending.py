"""
Lending threshold sweep.

For each initial collection threshold xi, lend to everyone scoring strictly
above xi, fit a cross-validated logistic predictor on the repayments that
were observed, and evaluate the resulting threshold policy on a large
fresh sample. Harsh thresholds leave the predictor without any defaults to
learn from; that is the collapse the sweep exposes.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from tqdm import tqdm

from ..config import get_settings
from ..errors import ConfigError
from ..schemas import BenefitKind, LendingSweepConfig
from .environments import ScoreTableEnvironment, ScoreTableSpec, collect_data, make_score_table_env
from .ingestion import load_score_table_csv
from .metrics import draw_eval_sample, fairness_violation, utility_on_sample
from .policies import ConstantPolicy, FeatureMap, FeatureThresholdPolicy, ThresholdPolicy, ThresholdPolicySpec
from .predictors import train_cv
from .presets import standin_score_table
from .runner import RandomStreams, write_csv

logger = logging.getLogger(__name__)

LENDING_HEADER = [
    "threshold", "utility", "dp_violation", "eop_violation", "positives_collected", "empty_labeled",
]


@dataclass(frozen=True)
class LendingRow:
    threshold: int
    utility: float
    dp_violation: float
    eop_violation: float
    positives_collected: int
    empty_labeled: bool

    def values(self) -> list:
        return [asdict(self)[name] for name in LENDING_HEADER]


def lending_environment(config: LendingSweepConfig) -> ScoreTableEnvironment:
    if config.score_table_path is None:
        spec = standin_score_table()
        if config.group_weights is not None:
            spec = ScoreTableSpec.model_validate({**spec.model_dump(), "group_weights": config.group_weights})
        return make_score_table_env(spec)
    return make_score_table_env(load_score_table_csv(config.score_table_path, config.group_weights))


def score_feature_map(env: ScoreTableEnvironment, include_group: bool) -> FeatureMap:
    """Scores rescaled to [-1, 1] over the table's domain."""
    lo, hi = env.spec.domain
    return FeatureMap(
        include_group=include_group,
        center=(lo + hi) / 2.0,
        scale=max((hi - lo) / 2.0, 1.0),
    )


def lending_sweep(config: LendingSweepConfig, output: Optional[Path] = None) -> List[LendingRow]:
    """One row per threshold; written to ``output`` (or ``config.output``) as CSV when given."""
    env = lending_environment(config)
    lo, hi = env.spec.domain
    outside = [xi for xi in config.thresholds if not lo - 1 <= xi <= hi]
    if outside:
        raise ConfigError(
            f"thresholds must lie in [{lo - 1}, {hi}] for this score table",
            [f"threshold {xi} is outside the score domain" for xi in outside],
        )

    settings = get_settings()
    streams = RandomStreams(config.seed)
    fmap = score_feature_map(env, config.include_group)
    sample = draw_eval_sample(env, config.eval_size, streams.evaluation())
    logger.info(
        f"Lending sweep over {len(config.thresholds)} thresholds, "
        f"{config.samples_per_threshold} applicants each, evaluation on {len(sample)}"
    )

    rows = []
    for xi in tqdm(config.thresholds, desc="thresholds", disable=not settings.progress):
        rng = streams.generator("threshold", xi)
        collector = FeatureThresholdPolicy(float(xi), strict=True)
        data = collect_data(env, collector, config.samples_per_threshold, 0, rng)
        labeled = data.labeled
        if len(labeled) == 0:
            logger.warning(f"Threshold {xi}: no applicant scored above it; reporting the always-reject policy")
            policy = ConstantPolicy(0.0)
        else:
            spec = config.predictor
            if len(labeled) < spec.folds:
                logger.warning(f"Threshold {xi}: {len(labeled)} labeled examples, fitting without cross-validation")
                spec = spec.model_copy(update={"grid": None})
            predictor = train_cv(labeled, fmap, spec, rng)
            policy = ThresholdPolicy(ThresholdPolicySpec(predictor, config.cost), fmap)
        row = LendingRow(
            threshold=int(xi),
            utility=utility_on_sample(policy, sample, config.cost),
            dp_violation=fairness_violation(policy, sample, BenefitKind.DEMOGRAPHIC_PARITY),
            eop_violation=fairness_violation(policy, sample, BenefitKind.EQUAL_OPPORTUNITY),
            positives_collected=len(labeled),
            empty_labeled=len(labeled) == 0,
        )
        logger.info(f"Threshold {xi}: {row.positives_collected} labeled, utility {row.utility:.5f}")
        rows.append(row)

    destination = output if output is not None else config.output
    if destination is not None:
        write_csv(Path(destination), LENDING_HEADER, (row.values() for row in rows))
        logger.info(f"Wrote {len(rows)} rows to {destination}")
    return rows
