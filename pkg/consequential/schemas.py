from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, field_validator, model_validator
from typing import Optional, Tuple, List as ListType
from pathlib import Path
from enum import Enum

import numpy as np


class BenefitKind(str, Enum):
    DEMOGRAPHIC_PARITY = "demographic_parity"
    EQUAL_OPPORTUNITY = "equal_opportunity"

    def outcome(self, d, y):
        """f(d, y): d for demographic parity, d*y for equal opportunity."""
        if self is BenefitKind.DEMOGRAPHIC_PARITY:
            return d
        return d * y


class PolicyKind(str, Enum):
    LOGISTIC = "logistic"
    SEMI_LOGISTIC = "semi_logistic"


class Strategy(str, Enum):
    OPTIMAL = "optimal"
    DETERMINISTIC = "deterministic"
    LOGISTIC = "logistic"
    SEMI_LOGISTIC = "semi_logistic"

    @property
    def policy_kind(self) -> Optional[PolicyKind]:
        if self is Strategy.LOGISTIC:
            return PolicyKind.LOGISTIC
        if self is Strategy.SEMI_LOGISTIC:
            return PolicyKind.SEMI_LOGISTIC
        return None


class SequenceMode(str, Enum):
    ITERATIVE = "iterative"
    AGGREGATED = "aggregated"


class Normalization(str, Enum):
    PROPOSED = "proposed"
    POSITIVES = "positives"


class EnvironmentName(str, Enum):
    SETTING1 = "setting1"
    SETTING2 = "setting2"
    TWO_REGION = "two_region"
    STANDIN_DATASET = "standin_dataset"
    DATASET = "dataset"
    SCORE_TABLE = "score_table"

    @property
    def has_conditional(self) -> bool:
        return self not in (EnvironmentName.STANDIN_DATASET, EnvironmentName.DATASET)


# Log-spaced regularization grid used when cross-validating without an explicit grid
DEFAULT_CV_GRID = [float(v) for v in np.logspace(-4, 2, 7)]


# ============ Predictor Schemas ============

class TrainSpec(BaseModel):
    """Gradient-ascent settings for fitting a logistic predictor."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    steps: int = Field(default=500, ge=0)
    learning_rate: float = Field(default=0.5, gt=0)
    batch_size: Optional[int] = Field(default=None, ge=1)  # None: full batch
    full_batch_limit: int = Field(default=50_000, ge=1)  # larger pools switch to minibatches
    regularization: float = Field(default=0.0, ge=0)
    grid: Optional[ListType[float]] = None
    folds: int = Field(default=5, ge=2)
    checkpoint_every: int = Field(default=25, ge=1)

    @field_validator("grid")
    @classmethod
    def _grid_nonnegative(cls, grid):
        if grid is not None and any(v < 0 for v in grid):
            raise ValueError("regularization grid values must be >= 0")
        return grid


# ============ Experiment Schemas ============

class LearningSettings(BaseModel):
    """Hyperparameters shared by every cell of an experiment."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    cost: float = Field(default=0.5, gt=0, lt=1)
    lam: float = Field(default=0.0, ge=0, alias="lambda")
    timesteps: int = Field(default=200, ge=1)
    decisions: int = Field(default=2048, ge=1)  # N proposals per step
    iterations: int = Field(default=128, ge=1)  # M gradient steps per update
    batch_size: int = Field(default=256, ge=1)  # B
    alpha: float = Field(default=1.0, gt=0)
    decay_factor: Optional[float] = Field(default=None, gt=0, le=1)
    decay_period: Optional[int] = Field(default=None, ge=1)
    benefit: BenefitKind = BenefitKind.DEMOGRAPHIC_PARITY
    sequence_mode: SequenceMode = SequenceMode.ITERATIVE
    normalization: Normalization = Normalization.PROPOSED
    weight_clip: Optional[float] = Field(default=None, gt=1)
    exact_inner_expectation: bool = False

    # Feature map
    degree: int = Field(default=1, ge=0)
    include_group: bool = False
    feature_center: float = 0.0
    feature_scale: float = Field(default=1.0, gt=0)

    # Initialization
    init_theta: Optional[ListType[float]] = None
    init_predictor_weights: Optional[ListType[float]] = None
    init_sample_size: int = Field(default=500, ge=1)

    # Evaluation
    eval_size: int = Field(default=10_000, ge=1)

    predictor: TrainSpec = TrainSpec()

    @model_validator(mode="after")
    def _decay_pair(self):
        if (self.decay_factor is None) != (self.decay_period is None):
            raise ValueError("decay_factor and decay_period must be given together")
        return self

    def learning_rate_at(self, t: int) -> float:
        """Step size for the update that follows round t (0-based)."""
        if self.decay_factor is None:
            return self.alpha
        return self.alpha * self.decay_factor ** (t // self.decay_period)


class ExperimentConfig(LearningSettings):
    """Hyperparameters of one learning run."""
    seed: int = Field(default=0, ge=0)


class RunConfig(LearningSettings):
    """A full experiment: environment, strategies, seeds and the lambda sweep."""

    environment: EnvironmentName = EnvironmentName.SETTING1
    dataset_path: Optional[Path] = None
    score_table_path: Optional[Path] = None
    split_fraction: float = Field(default=0.8, gt=0, lt=1)
    group_weights: Optional[Tuple[float, float]] = None  # score tables read from CSV; None: (0.5, 0.5)

    strategies: ListType[Strategy] = Field(
        default=[Strategy.OPTIMAL, Strategy.DETERMINISTIC, Strategy.LOGISTIC],
        min_length=1,
    )
    seeds: ListType[NonNegativeInt] = Field(default=[0], min_length=1)
    lambda_grid: Optional[ListType[float]] = None
    output: Optional[Path] = None

    @field_validator("lambda_grid")
    @classmethod
    def _lambdas_nonnegative(cls, grid):
        if grid is not None:
            if not grid:
                raise ValueError("lambda_grid must not be empty")
            if any(v < 0 for v in grid):
                raise ValueError("lambda values must be >= 0")
        return grid

    @model_validator(mode="after")
    def _environment_inputs(self):
        if self.environment is EnvironmentName.DATASET:
            _require_file(self.dataset_path, "dataset_path")
        if self.environment is EnvironmentName.SCORE_TABLE:
            _require_file(self.score_table_path, "score_table_path")
        if Strategy.OPTIMAL in self.strategies and not self.environment.has_conditional:
            raise ValueError(
                f"strategy 'optimal' needs a known conditional; "
                f"environment '{self.environment.value}' has none"
            )
        return self

    def lambdas(self) -> ListType[float]:
        return list(self.lambda_grid) if self.lambda_grid is not None else [self.lam]

    def experiment(self, seed: int, lam: float) -> ExperimentConfig:
        """The ExperimentConfig of one (seed, lambda) cell."""
        shared = self.model_dump(include=set(LearningSettings.model_fields))
        shared.update(seed=seed, lam=lam)
        return ExperimentConfig.model_validate(shared)


class LendingSweepConfig(BaseModel):
    """Initial-collection threshold sweep on a score table."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    score_table_path: Optional[Path] = None  # None: bundled stand-in table
    group_weights: Optional[Tuple[float, float]] = None
    thresholds: ListType[int] = Field(default=list(range(500, 801, 25)), min_length=1)
    samples_per_threshold: int = Field(default=10_000, ge=1)
    eval_size: int = Field(default=1_000_000, ge=1)
    cost: float = Field(default=0.7, gt=0, lt=1)
    include_group: bool = False
    predictor: TrainSpec = TrainSpec(grid=DEFAULT_CV_GRID, folds=5)
    seed: int = Field(default=0, ge=0)
    output: Optional[Path] = None

    @model_validator(mode="after")
    def _table_exists(self):
        if self.score_table_path is not None:
            _require_file(self.score_table_path, "score_table_path")
        return self


def _require_file(path: Optional[Path], key: str) -> None:
    if path is None:
        raise ValueError(f"'{key}' is required for this environment")
    if not Path(path).is_file():
        raise ValueError(f"'{key}' does not exist: {path}")
