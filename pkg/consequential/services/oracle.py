"""
Exact evaluation on finite discrete environments.

Everything here is a closed-form sum over the support, which makes it the
reference the Monte Carlo estimators are checked against.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import ValidationError

from ..errors import ConfigError, ExplorationError
from ..schemas import BenefitKind, PolicyKind
from .environments import Environment, Population
from .metrics import EvalSample
from .policies import FeatureMap, Policy, PolicyParams, make_policy

logger = logging.getLogger(__name__)

# Largest support for exhaustive enumeration of deterministic policies
MAX_ENUMERATION_SUPPORT = 12


class DiscreteEnv(Environment):
    """A finite support of (x, s) points with probabilities and P(y=1|x,s)."""

    def __init__(self, points, groups, probabilities, conditionals):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        groups = np.asarray(groups, dtype=np.int64).reshape(-1)
        probabilities = np.asarray(probabilities, dtype=float).reshape(-1)
        conditionals = np.asarray(conditionals, dtype=float).reshape(-1)

        size = points.shape[0]
        if size == 0:
            raise ValueError("support is empty")
        if not (groups.size == probabilities.size == conditionals.size == size):
            raise ValueError("support columns differ in length")
        if not np.all((groups == 0) | (groups == 1)):
            raise ValueError("groups must be 0 or 1")
        if np.any(probabilities < 0) or abs(probabilities.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must be nonnegative and sum to 1, got {probabilities.sum()!r}")
        if np.any(conditionals < 0) or np.any(conditionals > 1):
            raise ValueError("conditionals must lie in [0, 1]")
        keys = {(tuple(x), int(s)) for x, s in zip(points, groups)}
        if len(keys) != size:
            raise ValueError("support points must be distinct")

        self.points = points
        self.groups = groups
        self.probabilities = probabilities
        self.conditionals = conditionals
        self.feature_dim = points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def group_mass(self) -> np.ndarray:
        return np.array([self.probabilities[self.groups == g].sum() for g in (0, 1)])

    def locate(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Support index of every (x, s) row."""
        s = np.asarray(s, dtype=np.int64).reshape(-1)
        x = np.asarray(x, dtype=float).reshape(s.size, -1)
        match = np.all(x[:, None, :] == self.points[None, :, :], axis=2) & (s[:, None] == self.groups[None, :])
        if not match.any(axis=1).all():
            raise ValueError("point is not in the support")
        return match.argmax(axis=1)

    def sample_individuals(self, n: int, rng: np.random.Generator) -> Population:
        idx = rng.choice(self.size, size=n, p=self.probabilities)
        return Population(self.points[idx], self.groups[idx], index=idx)

    def true_conditional(self, x, s):
        return self.conditionals[self.locate(x, s)]

    def sample_label(self, population: Population, rng: np.random.Generator) -> np.ndarray:
        idx = population.index if population.index is not None else self.locate(population.x, population.s)
        return (rng.random(len(population)) < self.conditionals[idx]).astype(np.int64)

    def support_sample(self) -> EvalSample:
        """The joint distribution over (x, s, y) as a weighted sample."""
        both = np.concatenate([np.arange(self.size), np.arange(self.size)])
        y = np.concatenate([np.ones(self.size), np.zeros(self.size)])
        weight = np.concatenate([
            self.probabilities * self.conditionals,
            self.probabilities * (1.0 - self.conditionals),
        ])
        return EvalSample(self.points[both], self.groups[both], y, weight)

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "groups": self.groups.tolist(),
            "probabilities": self.probabilities.tolist(),
            "conditionals": self.conditionals.tolist(),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "DiscreteEnv":
        return cls(record["points"], record["groups"], record["probabilities"], record["conditionals"])


class TabularPolicy(Policy):
    """An arbitrary pi(d=1|x,s) given per support point."""

    def __init__(self, env: DiscreteEnv, probabilities):
        probabilities = np.asarray(probabilities, dtype=float).reshape(-1)
        if probabilities.size != env.size:
            raise ValueError("one probability per support point is required")
        if np.any(probabilities < 0) or np.any(probabilities > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        self.env = env
        self.probabilities = probabilities

    def prob_positive(self, x, s):
        return self.probabilities[self.env.locate(x, s)]

    def describe(self):
        return {"kind": "tabular", "probabilities": self.probabilities.tolist()}


@dataclass(frozen=True)
class ExactValue:
    utility: float
    benefits: Tuple[float, float]
    objective: float

    @property
    def gap(self) -> float:
        return self.benefits[0] - self.benefits[1]


@dataclass(frozen=True)
class InducedDistribution:
    """P_pi0(x, s, y) over the positive-propensity support, with its normalizers."""
    support_index: np.ndarray
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    probabilities: np.ndarray
    normalizer: float
    group_normalizers: Tuple[float, float]

    def probability_of(self, index: int, y: int) -> float:
        hit = (self.support_index == index) & (self.y == y)
        return float(self.probabilities[hit].sum())


@dataclass(frozen=True)
class OptimalSolution:
    policy: TabularPolicy
    value: ExactValue
    accept: np.ndarray  # W_1: support indices with a positive decision
    reject: np.ndarray  # W_0


def exact_value(
    policy: Policy,
    env: DiscreteEnv,
    c: float,
    lam: float = 0.0,
    benefit: BenefitKind = BenefitKind.DEMOGRAPHIC_PARITY,
) -> ExactValue:
    """u, (b^0, b^1) and v = u - lam/2 (b^0 - b^1)^2 by summing over the support."""
    pi = policy.prob_positive(env.points, env.groups)
    return _value_from_probabilities(pi, env, c, lam, BenefitKind(benefit))


def _value_from_probabilities(pi, env: DiscreteEnv, c, lam, benefit: BenefitKind) -> ExactValue:
    p, q = env.probabilities, env.conditionals
    utility = float(np.sum(p * pi * (q - c)))
    expected = benefit.outcome(pi, q)
    benefits = []
    for g in (0, 1):
        mask = env.groups == g
        mass = p[mask].sum()
        benefits.append(float(np.sum(p[mask] * expected[mask]) / mass) if mass > 0 else 0.0)
    objective = utility - 0.5 * lam * (benefits[0] - benefits[1]) ** 2
    return ExactValue(utility, (benefits[0], benefits[1]), objective)


def exact_induced(env: DiscreteEnv, policy: Policy) -> InducedDistribution:
    """The distribution of labeled triples collected under ``policy``."""
    pi = policy.prob_positive(env.points, env.groups)
    if not np.any(pi > 0):
        raise ExplorationError("the collecting policy never decides positively on the support")
    kept = np.flatnonzero(pi > 0)
    p, q = env.probabilities[kept], env.conditionals[kept]
    mass = p * pi[kept]
    normalizer = float(mass.sum())
    group_mass = env.group_mass
    group_normalizers = tuple(
        float(mass[env.groups[kept] == g].sum() / group_mass[g]) if group_mass[g] > 0 else 0.0
        for g in (0, 1)
    )
    index = np.concatenate([kept, kept])
    y = np.concatenate([np.ones(kept.size, dtype=np.int64), np.zeros(kept.size, dtype=np.int64)])
    probabilities = np.concatenate([mass * q, mass * (1.0 - q)]) / normalizer
    return InducedDistribution(
        index, env.points[index], env.groups[index], y, probabilities, normalizer, group_normalizers
    )


def exact_optimal(env: DiscreteEnv, c: float) -> OptimalSolution:
    """pi* = 1[P(y=1|x,s) >= c] with its value and decision regions."""
    decisions = (env.conditionals >= c).astype(float)
    policy = TabularPolicy(env, decisions)
    value = exact_value(policy, env, c)
    return OptimalSolution(
        policy=policy,
        value=value,
        accept=np.flatnonzero(decisions == 1.0),
        reject=np.flatnonzero(decisions == 0.0),
    )


def enumerate_deterministic(
    env: DiscreteEnv,
    c: float,
    lam: float = 0.0,
    benefit: BenefitKind = BenefitKind.DEMOGRAPHIC_PARITY,
) -> np.ndarray:
    """Objective value of every deterministic policy, one row per decision pattern."""
    if env.size > MAX_ENUMERATION_SUPPORT:
        raise ValueError(
            f"exhaustive enumeration is limited to {MAX_ENUMERATION_SUPPORT} support points, got {env.size}"
        )
    values = [
        _value_from_probabilities(np.array(pattern, dtype=float), env, c, lam, BenefitKind(benefit)).objective
        for pattern in itertools.product((0.0, 1.0), repeat=env.size)
    ]
    return np.array(values)


def approaching_policy(env: DiscreteEnv, c: float, n: int) -> TabularPolicy:
    """Exploring policy equal to 1 on W_1(pi*) and 1/n elsewhere."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    decisions = np.where(env.conditionals >= c, 1.0, 1.0 / n)
    return TabularPolicy(env, decisions)


def policy_from_record(env: DiscreteEnv, record: dict, c: float) -> Policy:
    """
    Build a policy from a JSON record: ``tabular`` (probabilities),
    ``logistic`` / ``semi_logistic`` (theta plus optional feature-map keys),
    ``optimal`` or ``approaching`` (n).
    """
    kind = record.get("kind")
    try:
        if kind == "tabular":
            return TabularPolicy(env, record["probabilities"])
        if kind in (PolicyKind.LOGISTIC.value, PolicyKind.SEMI_LOGISTIC.value):
            fmap = FeatureMap(**{k: record[k] for k in ("degree", "include_group", "center", "scale") if k in record})
            return make_policy(PolicyParams(record["theta"], PolicyKind(kind)), fmap)
        if kind == "optimal":
            return exact_optimal(env, c).policy
        if kind == "approaching":
            return approaching_policy(env, c, int(record["n"]))
    except KeyError as e:
        raise ConfigError(f"policy record of kind '{kind}' is missing key {e}") from None
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"invalid policy record: {e}") from e
    raise ConfigError(
        f"unknown policy kind {kind!r}", ["expected one of: tabular, logistic, semi_logistic, optimal, approaching"]
    )
