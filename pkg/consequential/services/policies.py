"""
Decision policies.

Four classes share one interface, ``prob_positive(x, s)`` returning
pi(d=1|x,s) for a batch:

- ``LogisticPolicy``: sigmoid(phi^T theta), exploring everywhere
- ``SemiLogisticPolicy``: 1 where phi^T theta >= 0, sigmoid elsewhere
- ``ThresholdPolicy``: 1[Q(y=1|x,s) >= c] for a fitted predictor Q
- ``OptimalPolicy``: 1[P(y=1|x,s) >= c_s] for the true conditional
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import expit

from ..errors import ConditionalUnavailableError
from ..schemas import BenefitKind, LearningSettings, PolicyKind
from .environments import Environment, columns, is_row

if TYPE_CHECKING:
    from .predictors import Predictor

logger = logging.getLogger(__name__)

# Bisection settings for fairness-constrained optimal thresholds
THRESHOLD_TOLERANCE = 1e-3
THRESHOLD_MAX_STEPS = 60


class FeatureMap(BaseModel):
    """
    phi(x, s) = (1, z, z^2, ..., z^degree[, s]) with z = (x - center) / scale.

    The default is the constant-offset map (1, x); degree 0 is the
    intercept-only map (1[, s]).
    """
    model_config = ConfigDict(frozen=True)

    degree: int = Field(default=1, ge=0)
    include_group: bool = False
    center: float = 0.0
    scale: float = Field(default=1.0, gt=0)

    @property
    def mode(self) -> str:
        if self.degree == 0:
            return "intercept"
        return "offset" if self.degree == 1 else "polynomial"

    def output_dim(self, input_dim: int) -> int:
        return 1 + self.degree * input_dim + int(self.include_group)

    def transform(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        z = (x - self.center) / self.scale
        parts = [np.ones((x.shape[0], 1))]
        parts.extend(z ** p for p in range(1, self.degree + 1))
        if self.include_group:
            parts.append(np.asarray(s, dtype=float).reshape(-1, 1))
        return np.hstack(parts)

    @classmethod
    def from_settings(cls, settings: LearningSettings) -> "FeatureMap":
        return cls(
            degree=settings.degree,
            include_group=settings.include_group,
            center=settings.feature_center,
            scale=settings.feature_scale,
        )


@dataclass(frozen=True)
class PolicyParams:
    """Parameter vector theta and the policy class it belongs to."""
    theta: np.ndarray
    kind: PolicyKind = PolicyKind.LOGISTIC

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise ValueError("policy parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "kind", PolicyKind(self.kind))

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(theta, self.kind)

    def to_record(self) -> dict:
        return {"kind": self.kind.value, "theta": [float(v) for v in self.theta]}

    @classmethod
    def from_record(cls, record: dict) -> "PolicyParams":
        return cls(record["theta"], PolicyKind(record.get("kind", PolicyKind.LOGISTIC.value)))


# ============ Policy Classes ============

class Policy(ABC):
    """pi(d=1|x,s) over column batches."""

    @abstractmethod
    def prob_positive(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Probability of a positive decision for each row."""

    def sample_decision(self, x: np.ndarray, s: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Bernoulli decisions and the propensities they were drawn with."""
        p = self.prob_positive(x, s)
        d = (rng.random(p.shape[0]) < p).astype(np.int64)
        return d, p

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


class LogisticPolicy(Policy):
    def __init__(self, params: PolicyParams, fmap: FeatureMap):
        self.params = params
        self.fmap = fmap

    def logits(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return self.fmap.transform(x, s) @ self.params.theta

    def prob_positive(self, x, s):
        return expit(self.logits(x, s))

    def score(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Rows of grad_theta log pi(d=1|x,s) = phi / (1 + exp(phi^T theta))."""
        phi = self.fmap.transform(x, s)
        return phi * expit(-(phi @ self.params.theta))[:, None]

    def describe(self):
        return self.params.to_record()


class SemiLogisticPolicy(LogisticPolicy):
    """Approve deterministically where phi^T theta >= 0, randomize elsewhere."""

    def prob_positive(self, x, s):
        a = self.logits(x, s)
        return np.where(a >= 0, 1.0, expit(a))

    def score(self, x, s):
        phi = self.fmap.transform(x, s)
        a = phi @ self.params.theta
        return phi * (expit(-a) * (a < 0))[:, None]


def make_policy(params: PolicyParams, fmap: FeatureMap) -> LogisticPolicy:
    if params.kind is PolicyKind.SEMI_LOGISTIC:
        return SemiLogisticPolicy(params, fmap)
    return LogisticPolicy(params, fmap)


@dataclass(frozen=True)
class ThresholdPolicySpec:
    predictor: "Predictor"
    cost: float

    def __post_init__(self):
        if not 0.0 < self.cost < 1.0:
            raise ValueError(f"cost must lie in (0, 1), got {self.cost}")


class ThresholdPolicy(Policy):
    """1[Q(y=1|x,s) >= c]; ties grant the positive decision."""

    def __init__(self, spec: ThresholdPolicySpec, fmap: FeatureMap):
        self.spec = spec
        self.fmap = fmap

    def prob_positive(self, x, s):
        q = self.spec.predictor.predict(self.fmap.transform(x, s))
        return (q >= self.spec.cost).astype(float)

    def describe(self):
        return {"kind": "threshold", "cost": self.spec.cost, "weights": [float(w) for w in self.spec.predictor.weights]}


class FeatureThresholdPolicy(Policy):
    """1[x_feature > threshold] (strict) or 1[x_feature >= threshold]."""

    def __init__(self, threshold: float, feature: int = 0, strict: bool = True):
        self.threshold = threshold
        self.feature = feature
        self.strict = strict

    def prob_positive(self, x, s):
        values = np.asarray(x, dtype=float)[:, self.feature]
        passed = values > self.threshold if self.strict else values >= self.threshold
        return passed.astype(float)

    def describe(self):
        return {"kind": "feature_threshold", "threshold": self.threshold, "strict": self.strict}


class ConstantPolicy(Policy):
    """The same decision probability for everyone."""

    def __init__(self, value: float):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"probability must lie in [0, 1], got {value}")
        self.value = value

    def prob_positive(self, x, s):
        return np.full(np.asarray(s).shape[0], float(self.value))

    def describe(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class OptimalPolicySpec:
    cost: float
    group_thresholds: Tuple[float, float]
    benefit: Optional[BenefitKind] = None
    converged: bool = True
    residual_gap: float = 0.0

    def __post_init__(self):
        for c_s in self.group_thresholds:
            if not 0.0 < c_s < 1.0:
                raise ValueError(f"group thresholds must lie in (0, 1), got {self.group_thresholds}")

    @property
    def offsets(self) -> Tuple[float, float]:
        return tuple(c_s - self.cost for c_s in self.group_thresholds)


class OptimalPolicy(Policy):
    """1[P(y=1|x,s) >= c_s] using the environment's true conditional."""

    def __init__(self, env: Environment, spec: OptimalPolicySpec):
        if not env.has_conditional:
            raise ConditionalUnavailableError(
                f"{type(env).__name__} does not know P(y=1|x,s); no optimal policy exists"
            )
        self.env = env
        self.spec = spec
        self._thresholds = np.asarray(spec.group_thresholds, dtype=float)

    def prob_positive(self, x, s):
        q = self.env.true_conditional(x, s)
        return (q >= self._thresholds[np.asarray(s, dtype=np.int64)]).astype(float)

    def describe(self):
        return {
            "kind": "optimal",
            "cost": self.spec.cost,
            "group_thresholds": list(self.spec.group_thresholds),
        }


# ============ Operations ============

def prob_positive(policy: Policy, individual):
    """pi(d=1|x,s): a float for a single individual, an array for a batch."""
    x, s = columns(individual)
    p = policy.prob_positive(x, s)
    return float(p[0]) if is_row(individual) else p


def sample_decision(policy: Policy, individual, rng: np.random.Generator):
    x, s = columns(individual)
    d, p = policy.sample_decision(x, s, rng)
    if is_row(individual):
        return int(d[0]), float(p[0])
    return d, p


def score_positive(params: PolicyParams, fmap: FeatureMap, individual) -> np.ndarray:
    """grad_theta log pi(d=1|x,s): a vector for one individual, rows for a batch."""
    x, s = columns(individual)
    scores = make_policy(params, fmap).score(x, s)
    return scores[0] if is_row(individual) else scores


def make_optimal_policy(
    env: Environment,
    c: float,
    benefit: Optional[BenefitKind] = None,
    eval_sample=None,
    tolerance: float = THRESHOLD_TOLERANCE,
    max_steps: int = THRESHOLD_MAX_STEPS,
) -> OptimalPolicySpec:
    """
    Group thresholds (c_0, c_1) for the optimal rule.

    Without a benefit both thresholds equal c. With one, a shared offset
    delta is bisected so that (c_0, c_1) = (c + delta, c - delta) equalizes
    the group benefits on ``eval_sample`` to within ``tolerance``.
    """
    if not env.has_conditional:
        raise ConditionalUnavailableError(
            f"{type(env).__name__} does not know P(y=1|x,s); no optimal policy exists"
        )
    if benefit is None:
        return OptimalPolicySpec(c, (c, c))
    if eval_sample is None:
        raise ValueError("a fairness-constrained optimal policy needs an evaluation sample")

    benefit = BenefitKind(benefit)
    x, s = eval_sample.x, eval_sample.s
    y = eval_sample.y
    weight = eval_sample.weights
    q = env.true_conditional(x, s)
    groups = [s == 0, s == 1]
    for g, mask in enumerate(groups):
        if not mask.any():
            raise ValueError(f"group {g} is absent from the evaluation sample")

    def gap(delta: float) -> float:
        d = np.where(s == 0, q >= c + delta, q >= c - delta).astype(float)
        f = benefit.outcome(d, y)
        b = [np.average(f[mask], weights=weight[mask]) for mask in groups]
        return float(b[0] - b[1])

    # Benefits fall in c_s, so the gap is nonincreasing in delta
    half_width = min(c, 1.0 - c) * (1.0 - 1e-9)
    lo, hi = -half_width, half_width
    g_lo, g_hi = gap(lo), gap(hi)
    best_delta, best_gap = min(((lo, g_lo), (hi, g_hi)), key=lambda item: abs(item[1]))
    if g_lo < -tolerance or g_hi > tolerance:
        logger.warning(
            f"Benefit gap does not change sign over offsets [{lo:.4f}, {hi:.4f}] "
            f"(gaps {g_lo:.4f}, {g_hi:.4f}); using unconstrained thresholds"
        )
        return OptimalPolicySpec(c, (c, c), benefit, converged=False, residual_gap=gap(0.0))

    converged = abs(best_gap) <= tolerance
    for step in range(max_steps):
        if converged:
            break
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid)
        if abs(g_mid) < abs(best_gap):
            best_delta, best_gap = mid, g_mid
        if abs(g_mid) <= tolerance:
            converged = True
        elif g_mid > 0:
            lo = mid
        else:
            hi = mid

    if not converged:
        logger.warning(f"Threshold bisection stopped after {max_steps} steps with gap {best_gap:.5f}")
    return OptimalPolicySpec(
        c, (c + best_delta, c - best_delta), benefit, converged=converged, residual_gap=best_gap
    )
