"""
Held-out evaluation: utility, group benefits, fairness violations and the
effective utility accumulated on training decisions.

Every metric uses prob_positive analytically; no decisions are sampled.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ..schemas import BenefitKind
from .environments import CollectedData, DecisionRecord, EmpiricalEnvironment, Environment, LabeledExample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalSample:
    """A labeled test set. ``weight`` turns it into an exact support enumeration."""
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        s = np.asarray(self.s, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if y.size == 0:
            raise ValueError("evaluation sample is empty")
        if not (x.shape[0] == s.shape[0] == y.shape[0]):
            raise ValueError("evaluation sample columns differ in length")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("every evaluation example needs a 0/1 label")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "y", y)
        if self.weight is not None:
            weight = np.asarray(self.weight, dtype=float).reshape(-1)
            if weight.shape != y.shape or np.any(weight < 0) or weight.sum() <= 0:
                raise ValueError("weights must be nonnegative, one per example, with positive total")
            object.__setattr__(self, "weight", weight)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.y.shape) if self.weight is None else self.weight

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample]) -> "EvalSample":
        if not examples:
            raise ValueError("evaluation sample is empty")
        return cls(
            np.stack([e.individual.x for e in examples]),
            [e.individual.s for e in examples],
            [e.y for e in examples],
        )


def draw_eval_sample(env: Environment, n: int, rng: np.random.Generator) -> EvalSample:
    """A test set: the held-out split for empirical environments, n fresh draws otherwise."""
    if isinstance(env, EmpiricalEnvironment):
        population, y = env.test_set()
        return EvalSample(population.x, population.s, y)
    population = env.sample_individuals(n, rng)
    return EvalSample(population.x, population.s, env.sample_label(population, rng))


def utility_on_sample(policy, sample: EvalSample, c: float) -> float:
    """Mean of pi(d=1|x,s) * (y - c)."""
    p = policy.prob_positive(sample.x, sample.s)
    return float(np.average(p * (sample.y - c), weights=sample.weights))


def benefit_on_sample(policy, sample: EvalSample, benefit: BenefitKind, s: int) -> float:
    """Group-s mean of f(pi(d=1|x,s), y)."""
    mask = sample.s == s
    if not mask.any():
        raise ValueError(f"group {s} is absent from the evaluation sample")
    p = policy.prob_positive(sample.x[mask], sample.s[mask])
    values = BenefitKind(benefit).outcome(p, sample.y[mask])
    return float(np.average(values, weights=sample.weights[mask]))


def fairness_violation(policy, sample: EvalSample, benefit: BenefitKind) -> float:
    """b^0 - b^1."""
    return benefit_on_sample(policy, sample, benefit, 0) - benefit_on_sample(policy, sample, benefit, 1)


def effective_utility(log: Iterable[Union[CollectedData, DecisionRecord]], c: float) -> float:
    """Profit accumulated on positive decisions, per proposal."""
    tracker = EffectiveUtilityTracker(c)
    for item in log:
        if isinstance(item, CollectedData):
            tracker.add(item)
        else:
            tracker.add_record(item)
    return tracker.value


class EffectiveUtilityTracker:
    """Running sums behind effective_utility, fed one round at a time."""

    def __init__(self, c: float):
        self.c = c
        self.profit = 0.0
        self.proposals = 0

    def add(self, data: CollectedData) -> float:
        self.profit += data.profit(self.c)
        self.proposals += data.n_proposed
        return self.value

    def add_record(self, record: DecisionRecord) -> float:
        if record.d == 1:
            self.profit += record.y - self.c
        self.proposals += 1
        return self.value

    @property
    def value(self) -> float:
        return self.profit / self.proposals if self.proposals else 0.0


@dataclass(frozen=True)
class MetricsRecord:
    t: int
    utility: float
    effective_utility: float
    dp_violation: float
    eop_violation: float
    positives_collected: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_policy(
    policy,
    sample: EvalSample,
    c: float,
    t: int,
    effective: float,
    positives_collected: int,
) -> MetricsRecord:
    return MetricsRecord(
        t=t,
        utility=utility_on_sample(policy, sample, c),
        effective_utility=effective,
        dp_violation=fairness_violation(policy, sample, BenefitKind.DEMOGRAPHIC_PARITY),
        eop_violation=fairness_violation(policy, sample, BenefitKind.EQUAL_OPPORTUNITY),
        positives_collected=positives_collected,
    )
