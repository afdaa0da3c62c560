"""
Ground-truth environments and the selective-label data collection process.

An environment is a distribution P(x, s, y). Three families are provided:

- synthetic: Gaussian features per group (optionally truncated) and a named
  parametric conditional P(y=1|x)
- score table: integer scores drawn by inverse transform sampling from
  per-group CDF tables, repayment probabilities read from a table
- empirical: bootstrap draws from the training split of a labeled dataset,
  the dataset's labels taken as ground truth

Individuals travel through the package as column batches (``Population``);
``Individual``, ``LabeledExample`` and ``DecisionRecord`` are row views.
"""

import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Annotated, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit, logit

from ..errors import ConditionalUnavailableError, ConfigError, IngestionError, NumericalError

if TYPE_CHECKING:
    from .policies import Policy

logger = logging.getLogger(__name__)

# Rejection rounds before giving up on a truncation interval with negligible mass
MAX_REJECTION_ROUNDS = 10_000


# ============ Row Types ============

@dataclass(frozen=True)
class Individual:
    """A context: features x and the binary sensitive attribute s."""
    x: np.ndarray
    s: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if self.s not in (0, 1):
            raise ValueError(f"sensitive attribute must be 0 or 1, got {self.s!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", int(self.s))


@dataclass(frozen=True)
class LabeledExample:
    individual: Individual
    y: int
    propensity: Optional[float] = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y!r}")
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True)
class DecisionRecord:
    """One proposal: the decision taken and, only if positive, its label."""
    individual: Individual
    d: int
    y: Optional[int]
    t: int
    propensity: float

    def __post_init__(self):
        if self.d not in (0, 1):
            raise ValueError(f"decision must be 0 or 1, got {self.d!r}")
        if (self.y is not None) != (self.d == 1):
            raise ValueError("a label is present if and only if d = 1")


# ============ Column Batches ============

@dataclass(frozen=True)
class Population:
    """n individuals as columns: x is (n, k), s is (n,)."""
    x: np.ndarray
    s: np.ndarray
    index: Optional[np.ndarray] = None  # source rows (support point or training-pool row)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        s = np.asarray(self.s, dtype=np.int64).reshape(-1)
        if x.shape[0] != s.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but s has {s.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        if s.size and not np.all((s == 0) | (s == 1)):
            raise ValueError("sensitive attribute must be 0 or 1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)
        if self.index is not None:
            object.__setattr__(self, "index", np.asarray(self.index, dtype=np.int64))

    def __len__(self) -> int:
        return self.s.shape[0]

    def take(self, rows) -> "Population":
        index = None if self.index is None else self.index[rows]
        return Population(self.x[rows], self.s[rows], index)

    def individuals(self) -> Iterator[Individual]:
        for x, s in zip(self.x, self.s):
            yield Individual(x, int(s))

    def digest(self) -> str:
        """SHA-256 of the feature and group bytes."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.s).tobytes())
        return h.hexdigest()

    @classmethod
    def from_individuals(cls, individuals: Sequence[Individual]) -> "Population":
        if not individuals:
            raise ValueError("no individuals given")
        return cls(np.stack([i.x for i in individuals]), [i.s for i in individuals])


@dataclass(frozen=True)
class LabeledBatch:
    """
    Labeled positives with the propensity they were collected at.

    ``position`` is each example's place in its round's proposal batch, when
    the batch came from a decision log.
    """
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    propensity: np.ndarray
    position: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", np.asarray(self.s, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "propensity", np.asarray(self.propensity, dtype=float).reshape(-1))
        n = x.shape[0]
        if not (self.s.shape[0] == self.y.shape[0] == self.propensity.shape[0] == n):
            raise ValueError("labeled batch columns differ in length")
        if self.position is not None:
            position = np.asarray(self.position, dtype=np.int64).reshape(-1)
            if position.shape[0] != n:
                raise ValueError("labeled batch columns differ in length")
            object.__setattr__(self, "position", position)

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, rows) -> "LabeledBatch":
        position = None if self.position is None else self.position[rows]
        return LabeledBatch(self.x[rows], self.s[rows], self.y[rows], self.propensity[rows], position)

    def examples(self) -> List[LabeledExample]:
        return [
            LabeledExample(Individual(x, int(s)), int(y), float(p))
            for x, s, y, p in zip(self.x, self.s, self.y, self.propensity)
        ]

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample]) -> "LabeledBatch":
        if not examples:
            return cls.empty(1)
        return cls(
            np.stack([e.individual.x for e in examples]),
            [e.individual.s for e in examples],
            [e.y for e in examples],
            [1.0 if e.propensity is None else e.propensity for e in examples],
        )

    @classmethod
    def empty(cls, feature_dim: int) -> "LabeledBatch":
        return cls(np.empty((0, feature_dim)), [], [], [])

    @classmethod
    def concat(cls, batches: Sequence["LabeledBatch"]) -> "LabeledBatch":
        batches = list(batches)
        if not batches:
            raise ValueError("nothing to concatenate")
        return cls(
            np.concatenate([b.x for b in batches]),
            np.concatenate([b.s for b in batches]),
            np.concatenate([b.y for b in batches]),
            np.concatenate([b.propensity for b in batches]),
            np.concatenate([b.position for b in batches])
            if all(b.position is not None for b in batches)
            else None,
        )


@dataclass(frozen=True)
class CollectedData:
    """
    Everything observed in one round of decisions.

    ``y`` is -1 wherever d = 0: labels are realized only for positive
    decisions. ``propensity`` is pi(d=1|x,s) of the collecting policy at
    decision time.
    """
    t: int
    population: Population
    d: np.ndarray
    y: np.ndarray
    propensity: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        propensity = np.asarray(self.propensity, dtype=float)
        n = len(self.population)
        if not (d.shape == y.shape == propensity.shape == (n,)):
            raise ValueError("decision log columns differ in length")
        if np.any((y >= 0) != (d == 1)):
            raise ValueError("selective labels violated: a label must be present iff d = 1")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "propensity", propensity)

    @property
    def n_proposed(self) -> int:
        return len(self.population)

    @cached_property
    def labeled(self) -> LabeledBatch:
        rows = np.flatnonzero(self.d == 1)
        return LabeledBatch(
            self.population.x[rows], self.population.s[rows], self.y[rows], self.propensity[rows], rows
        )

    @cached_property
    def per_group_proposed(self) -> np.ndarray:
        return np.bincount(self.population.s, minlength=2)

    @property
    def labeled_per_group(self) -> np.ndarray:
        return np.bincount(self.labeled.s, minlength=2)

    @property
    def log(self) -> List[DecisionRecord]:
        return [
            DecisionRecord(individual, int(d), int(y) if d == 1 else None, self.t, float(p))
            for individual, d, y, p in zip(self.population.individuals(), self.d, self.y, self.propensity)
        ]

    def profit(self, c: float) -> float:
        """Sum of (y - c) over positive decisions."""
        labeled = self.labeled
        return float(np.sum(labeled.y - c))


def columns(obj) -> Tuple[np.ndarray, np.ndarray]:
    """(x, s) arrays of an Individual, a LabeledExample or any column batch."""
    if isinstance(obj, LabeledExample):
        obj = obj.individual
    if isinstance(obj, Individual):
        return obj.x[None, :], np.array([obj.s])
    return obj.x, obj.s


def is_row(obj) -> bool:
    return isinstance(obj, (Individual, LabeledExample))


# ============ Environments ============

class Environment(ABC):
    """A ground-truth distribution P(x, s, y)."""

    feature_dim: int = 1
    has_conditional: bool = True

    @abstractmethod
    def sample_individuals(self, n: int, rng: np.random.Generator) -> Population:
        """n independent draws from P(x, s)."""

    def true_conditional(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise ConditionalUnavailableError(
            f"{type(self).__name__} does not know P(y=1|x,s); the optimal strategy is unavailable"
        )

    def sample_label(self, population: Population, rng: np.random.Generator) -> np.ndarray:
        q = self.true_conditional(population.x, population.s)
        return (rng.random(len(population)) < q).astype(np.int64)


# ============ Synthetic Environments ============

class PowerSigmoidCurve(BaseModel):
    """
    Monotone sigmoid raised to an exponent.

    P(y=1|x) = sigmoid(slope * (x - pin_x) + offset) ** exponent, with the
    offset chosen so that P(y=1|pin_x) = pin_p. Exponents other than 1 make
    the curve a non-logistic function of x.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["power_sigmoid"] = "power_sigmoid"
    slope: float = Field(gt=0)
    exponent: float = Field(gt=0)
    pin_x: float
    pin_p: float = Field(gt=0, lt=1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        offset = logit(self.pin_p ** (1.0 / self.exponent))
        return expit(self.slope * (np.asarray(x, dtype=float) - self.pin_x) + offset) ** self.exponent

    def check_range(self, lo: float, hi: float) -> None:
        pass


class GaussianBumpsCurve(BaseModel):
    """baseline + sum of Gaussian bumps; bimodal with two bumps."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian_bumps"] = "gaussian_bumps"
    baseline: float
    heights: List[float] = Field(min_length=1)
    centers: List[float] = Field(min_length=1)
    width: float = Field(gt=0)

    @model_validator(mode="after")
    def _matching_lengths(self):
        if len(self.heights) != len(self.centers):
            raise ValueError("heights and centers must have the same length")
        return self

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.baseline)
        for h, m in zip(self.heights, self.centers):
            out = out + h * np.exp(-((x - m) ** 2) / (2.0 * self.width ** 2))
        return out

    def check_range(self, lo: float, hi: float) -> None:
        a = max(lo, min(self.centers) - 10 * self.width)
        b = min(hi, max(self.centers) + 10 * self.width)
        values = self(np.linspace(a, b, 20_001)) if a < b else np.array([])
        if np.isinf(lo) or np.isinf(hi):
            values = np.append(values, self.baseline)
        else:
            values = np.append(values, self(np.array([lo, hi])))
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("conditional leaves [0, 1] on the reachable feature range")


class LinearCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["linear"] = "linear"
    intercept: float = 0.0
    slope: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def check_range(self, lo: float, hi: float) -> None:
        if self.slope != 0 and (np.isinf(lo) or np.isinf(hi)):
            raise ValueError("a sloped linear conditional needs a bounded truncation interval")
        ends = self(np.array([lo if np.isfinite(lo) else 0.0, hi if np.isfinite(hi) else 0.0]))
        if ends.min() < 0.0 or ends.max() > 1.0:
            raise ValueError("conditional leaves [0, 1] on the truncation interval")


class ConstantCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    value: float = Field(ge=0, le=1)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), self.value)

    def check_range(self, lo: float, hi: float) -> None:
        pass


ConditionalCurve = Annotated[
    Union[PowerSigmoidCurve, GaussianBumpsCurve, LinearCurve, ConstantCurve],
    Field(discriminator="kind"),
]


class SyntheticSettingSpec(BaseModel):
    """x | s ~ N(group_means[s], group_sd), optionally truncated; s ~ Ber(group_prior)."""
    model_config = ConfigDict(frozen=True)

    group_means: Tuple[float, float]
    group_sd: float = Field(gt=0)
    truncation: Optional[Tuple[float, float]] = None
    conditional: ConditionalCurve
    group_prior: float = Field(default=0.5, gt=0, lt=1)

    @model_validator(mode="after")
    def _reachable_range(self):
        lo, hi = self.bounds
        if lo >= hi:
            raise ValueError(f"empty truncation interval {self.truncation}")
        self.conditional.check_range(lo, hi)
        return self

    @property
    def bounds(self) -> Tuple[float, float]:
        if self.truncation is None:
            return -np.inf, np.inf
        return float(self.truncation[0]), float(self.truncation[1])


class SyntheticEnvironment(Environment):
    """Gaussian (optionally truncated) features with a parametric conditional."""

    feature_dim = 1

    def __init__(self, spec: SyntheticSettingSpec):
        self.spec = spec
        self._means = np.asarray(spec.group_means, dtype=float)

    def sample_individuals(self, n: int, rng: np.random.Generator) -> Population:
        s = (rng.random(n) < self.spec.group_prior).astype(np.int64)
        x = self._draw_features(self._means[s], rng)
        return Population(x[:, None], s)

    def _draw_features(self, means: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        sd = self.spec.group_sd
        x = rng.normal(means, sd)
        if self.spec.truncation is None:
            return x
        lo, hi = self.spec.bounds
        # Rejection: redraw out-of-interval entries until all are accepted
        pending = np.flatnonzero((x < lo) | (x > hi))
        rounds = 0
        while pending.size:
            rounds += 1
            if rounds > MAX_REJECTION_ROUNDS:
                raise NumericalError(f"truncation interval {self.spec.truncation} has negligible mass")
            redraw = rng.normal(means[pending], sd)
            accepted = (redraw >= lo) & (redraw <= hi)
            x[pending[accepted]] = redraw[accepted]
            pending = pending[~accepted]
        return x

    def true_conditional(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.spec.conditional(np.asarray(x, dtype=float)[:, 0])


# ============ Score-Table Environments ============

class ScoreTableSpec(BaseModel):
    """Per-group score CDFs and repayment probabilities over an integer score domain."""
    model_config = ConfigDict(frozen=True)

    scores: List[int] = Field(min_length=1)
    cdf: Tuple[List[float], List[float]]
    repay: Tuple[List[float], List[float]]
    group_weights: Tuple[float, float] = (0.5, 0.5)

    @model_validator(mode="after")
    def _check_tables(self):
        scores = np.asarray(self.scores)
        if np.any(np.diff(scores) <= 0):
            raise ValueError("scores must be strictly increasing")
        for g in (0, 1):
            cdf = np.asarray(self.cdf[g], dtype=float)
            repay = np.asarray(self.repay[g], dtype=float)
            if cdf.shape != scores.shape or repay.shape != scores.shape:
                raise ValueError(f"group {g} tables must have one entry per score")
            if np.any(cdf < 0.0) or np.any(cdf > 1.0 + 1e-9):
                raise ValueError(f"group {g} CDF leaves [0, 1]")
            drops = np.flatnonzero(np.diff(cdf) < 0)
            if drops.size:
                raise ValueError(
                    f"group {g} CDF is not monotone nondecreasing at score {int(scores[drops[0] + 1])}"
                )
            if abs(cdf[-1] - 1.0) > 1e-9:
                raise ValueError(f"group {g} CDF must end at 1, got {cdf[-1]}")
            if np.any(repay < 0.0) or np.any(repay > 1.0):
                raise ValueError(f"group {g} repayment probabilities leave [0, 1]")
        weights = np.asarray(self.group_weights, dtype=float)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("group_weights must be nonnegative and sum to 1")
        return self

    @property
    def domain(self) -> Tuple[int, int]:
        return int(self.scores[0]), int(self.scores[-1])


class ScoreTableEnvironment(Environment):
    """Inverse-transform sampling from per-group score CDF tables."""

    feature_dim = 1

    def __init__(self, spec: ScoreTableSpec):
        self.spec = spec
        self.scores = np.asarray(spec.scores, dtype=float)
        self._cdf = np.asarray(spec.cdf, dtype=float)
        self._repay = np.asarray(spec.repay, dtype=float)

    def sample_individuals(self, n: int, rng: np.random.Generator) -> Population:
        s = (rng.random(n) < self.spec.group_weights[1]).astype(np.int64)
        u = rng.random(n)
        idx = np.empty(n, dtype=np.int64)
        for g in (0, 1):
            mask = s == g
            # Smallest score whose CDF exceeds u
            idx[mask] = np.searchsorted(self._cdf[g], u[mask], side="right")
        idx = np.minimum(idx, self.scores.size - 1)
        return Population(self.scores[idx][:, None], s)

    def true_conditional(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[:, 0]
        s = np.asarray(s)
        out = np.empty(x.shape)
        for g in (0, 1):
            mask = s == g
            out[mask] = np.interp(x[mask], self.scores, self._repay[g])
        return out


# ============ Empirical Environments ============

class EmpiricalEnvironment(Environment):
    """Bootstrap proposals from a training pool; a disjoint held-out test set."""

    has_conditional = False

    def __init__(
        self,
        features: np.ndarray,
        groups: np.ndarray,
        labels: np.ndarray,
        train_rows: np.ndarray,
        test_rows: np.ndarray,
        feature_names: Sequence[str],
    ):
        self.feature_names = list(feature_names)
        self.feature_dim = features.shape[1]
        self.train_rows = np.asarray(train_rows, dtype=np.int64)
        self.test_rows = np.asarray(test_rows, dtype=np.int64)
        self._x_train = features[self.train_rows]
        self._s_train = groups[self.train_rows]
        self._y_train = labels[self.train_rows]
        self._x_test = features[self.test_rows]
        self._s_test = groups[self.test_rows]
        self._y_test = labels[self.test_rows]

    @property
    def pool_size(self) -> int:
        return self.train_rows.size

    def sample_individuals(self, n: int, rng: np.random.Generator) -> Population:
        if self.pool_size == 0:
            raise ConfigError("the training pool is empty; lower split_fraction or add rows")
        rows = rng.integers(0, self.pool_size, size=n)
        return Population(self._x_train[rows], self._s_train[rows], index=rows)

    def sample_label(self, population: Population, rng: np.random.Generator) -> np.ndarray:
        if population.index is None:
            raise ValueError("labels are only available for individuals drawn from the training pool")
        return self._y_train[population.index].astype(np.int64)

    def test_set(self) -> Tuple[Population, np.ndarray]:
        return Population(self._x_test, self._s_test), self._y_test.astype(np.int64)


# ============ Operations ============

def sample_individuals(env: Environment, n: int, rng: np.random.Generator) -> Population:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return env.sample_individuals(n, rng)


def true_conditional(env: Environment, individual):
    """P(y=1|x,s): a float for a single individual, an array for a batch."""
    x, s = columns(individual)
    q = env.true_conditional(x, s)
    return float(q[0]) if is_row(individual) else q


def sample_label(env: Environment, individual, rng: np.random.Generator):
    if is_row(individual):
        x, s = columns(individual)
        return int(env.sample_label(Population(x, s), rng)[0])
    return env.sample_label(individual, rng)


def collect_data(
    env: Environment,
    policy: "Policy",
    n: int,
    t: int,
    rng: np.random.Generator,
    proposals: Optional[Population] = None,
) -> CollectedData:
    """
    Propose n individuals, decide with ``policy`` and reveal labels for d = 1.

    Outcomes are drawn for every proposal and kept only where d = 1, so the
    generator advances by the same amount whatever the decisions.

    ``proposals`` lets several policies decide over the same batch; when
    omitted the batch is drawn from ``rng``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    population = proposals if proposals is not None else env.sample_individuals(n, rng)
    if len(population) != n:
        raise ValueError(f"expected {n} proposals, got {len(population)}")
    d, propensity = policy.sample_decision(population.x, population.s, rng)
    outcomes = env.sample_label(population, rng)
    y = np.where(d == 1, outcomes, -1).astype(np.int64)
    return CollectedData(t, population, d, y, propensity)


def make_synthetic_env(spec: Union[SyntheticSettingSpec, dict, str]) -> SyntheticEnvironment:
    """Build a synthetic environment from a spec, a dict, or a preset name."""
    if isinstance(spec, str):
        from .presets import synthetic_preset
        spec = synthetic_preset(spec)
    elif not isinstance(spec, SyntheticSettingSpec):
        spec = SyntheticSettingSpec.model_validate(spec)
    return SyntheticEnvironment(spec)


def make_score_table_env(spec: Union[ScoreTableSpec, dict]) -> ScoreTableEnvironment:
    """
    The table fixes the environment completely; sampling draws from the
    generator passed to ``sample_individuals`` and ``sample_label``.
    """
    if not isinstance(spec, ScoreTableSpec):
        spec = ScoreTableSpec.model_validate(spec)
    return ScoreTableEnvironment(spec)


def make_empirical_env(
    dataset: pd.DataFrame,
    split_fraction: float,
    rng: np.random.Generator,
    feature_columns: Optional[Sequence[str]] = None,
    standardize: bool = True,
) -> EmpiricalEnvironment:
    """
    Split a labeled table into a bootstrap training pool and a test set.

    The table needs columns ``s`` and ``y`` (0/1) and at least one numeric
    feature column; every other column is a feature unless
    ``feature_columns`` names them. With ``standardize`` every feature is
    shifted and scaled by its training-pool mean and standard deviation.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ConfigError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    if len(dataset) == 0:
        raise IngestionError("dataset has no rows")
    for required in ("s", "y"):
        if required not in dataset.columns:
            raise IngestionError(f"dataset is missing column '{required}'")
    names = list(feature_columns) if feature_columns is not None else [
        c for c in dataset.columns if c not in ("s", "y")
    ]
    if not names:
        raise IngestionError("dataset has no feature columns")
    for name in names:
        if name not in dataset.columns:
            raise IngestionError(f"dataset is missing column '{name}'")

    features = np.column_stack([_numeric_column(dataset, name) for name in names])
    groups = _binary_column(dataset, "s")
    labels = _binary_column(dataset, "y")

    n = len(dataset)
    order = rng.permutation(n)
    n_train = int(round(split_fraction * n))
    if standardize and n_train > 0:
        pool = features[order[:n_train]]
        scale = pool.std(axis=0)
        features = (features - pool.mean(axis=0)) / np.where(scale > 0, scale, 1.0)
    env = EmpiricalEnvironment(features, groups, labels, order[:n_train], order[n_train:], names)
    logger.info(f"Empirical environment: {n_train} training rows, {n - n_train} test rows, features {names}")
    return env


def _numeric_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        raise IngestionError(
            f"row {row + 1} (line {row + 2}), column '{name}': invalid value {frame[name].iloc[row]!r}"
        )
    return values


def _binary_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = _numeric_column(frame, name)
    bad = np.flatnonzero((values != 0) & (values != 1))
    if bad.size:
        row = int(bad[0])
        raise IngestionError(
            f"row {row + 1} (line {row + 2}), column '{name}': expected 0 or 1, got {frame[name].iloc[row]!r}"
        )
    return values.astype(np.int64)
