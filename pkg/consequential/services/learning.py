"""
Policy learning from selectively labeled data.

The estimators reweight each labeled positive by the inverse of the
propensity it was collected at, so expectations under the collecting
policy's induced distribution become expectations under the ground truth.
The update ascends

    v(theta) = u(theta) - lam / 2 * (b^0(theta) - b^1(theta))^2

with minibatch stochastic gradients built from the score function of the
policy. ``consequential_learning`` drives the rounds of collection and
update for each strategy.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConditionalUnavailableError, ConfigError, ExplorationError, NumericalError
from ..schemas import BenefitKind, ExperimentConfig, Normalization, SequenceMode, Strategy
from .environments import CollectedData, Environment, LabeledBatch, Population, collect_data
from .metrics import EffectiveUtilityTracker, EvalSample, MetricsRecord, evaluate_policy
from .policies import (
    FeatureMap,
    LogisticPolicy,
    OptimalPolicy,
    Policy,
    PolicyParams,
    ThresholdPolicy,
    ThresholdPolicySpec,
    make_optimal_policy,
    make_policy,
)
from .predictors import Predictor, train_mle

logger = logging.getLogger(__name__)

__all__ = [
    "BenefitKind",
    "GradientEstimate",
    "LearningRun",
    "consequential_learning",
    "grad_objective",
    "initial_parameters",
    "ips_gradient",
    "ips_value",
    "proximal_step",
    "update_policy",
]


@dataclass(frozen=True)
class GradientEstimate:
    grad_utility: np.ndarray
    grad_benefit: Tuple[np.ndarray, np.ndarray]
    benefit_estimates: Tuple[float, float]
    positives_used: int


@dataclass
class LearningRun:
    """Everything one strategy produced over T rounds."""
    strategy: Strategy
    policies: List[Policy] = field(default_factory=list)  # pi_0 .. pi_T
    collected: List[CollectedData] = field(default_factory=list)
    metrics: List[MetricsRecord] = field(default_factory=list)
    update_pool_sizes: List[int] = field(default_factory=list)

    @property
    def final_policy(self) -> Policy:
        return self.policies[-1]


# ============ Estimators ============

def importance_weights(propensity: np.ndarray, clip: Optional[float] = None) -> np.ndarray:
    """1 / propensity, optionally capped at ``clip``."""
    propensity = np.asarray(propensity, dtype=float)
    if np.any(propensity <= 0):
        raise ExplorationError("a labeled example has zero propensity; the collecting policy was not exploring")
    weights = 1.0 / propensity
    if clip is not None:
        weights = np.minimum(weights, clip)
    return weights


def _normalizers(data: CollectedData, normalization: Normalization) -> Tuple[float, np.ndarray]:
    if Normalization(normalization) is Normalization.PROPOSED:
        return float(data.n_proposed), data.per_group_proposed.astype(float)
    return float(len(data.labeled)), data.labeled_per_group.astype(float)


def ips_value(
    data: CollectedData,
    target: Policy,
    c: float,
    benefit: BenefitKind = BenefitKind.DEMOGRAPHIC_PARITY,
    normalization: Normalization = Normalization.PROPOSED,
    clip: Optional[float] = None,
) -> Tuple[float, Tuple[float, float]]:
    """Inverse-propensity estimates of the target's utility and group benefits."""
    labeled = data.labeled
    total, per_group = _normalizers(data, normalization)
    if total == 0:
        logger.warning("No examples to normalize by; utility and benefit estimates are 0")
        return 0.0, (0.0, 0.0)
    weights = importance_weights(labeled.propensity, clip)
    pi = target.prob_positive(labeled.x, labeled.s)
    utility = float(np.sum(pi * (labeled.y - c) * weights) / total)
    expected = BenefitKind(benefit).outcome(pi, labeled.y) * weights
    benefits = []
    for g in (0, 1):
        if per_group[g] == 0:
            logger.warning(f"No group-{g} examples to normalize by; its benefit estimate is 0")
            benefits.append(0.0)
        else:
            benefits.append(float(np.sum(expected[labeled.s == g]) / per_group[g]))
    return utility, (benefits[0], benefits[1])


@dataclass(frozen=True)
class _Terms:
    """Per-example gradient contributions of a labeled batch."""
    utility: np.ndarray  # (n, m)
    benefit: np.ndarray  # (n, m)
    benefit_value: np.ndarray  # (n,)
    sampled: np.ndarray  # (n,) decisions drawn from the current policy


def _gradient_terms(
    batch: LabeledBatch,
    policy: LogisticPolicy,
    c: float,
    benefit: BenefitKind,
    clip: Optional[float],
    rng: np.random.Generator,
    exact_inner_expectation: bool,
) -> _Terms:
    weights = importance_weights(batch.propensity, clip)
    pi = policy.prob_positive(batch.x, batch.s)
    score = policy.score(batch.x, batch.s)
    sampled = (rng.random(len(batch)) < pi).astype(float)
    # Utility: exact expectation over d; benefits: sampled d unless asked otherwise
    utility = (pi * (batch.y - c) * weights)[:, None] * score
    f = benefit.outcome(pi if exact_inner_expectation else sampled, batch.y)
    benefit_terms = (f * weights)[:, None] * score
    benefit_value = benefit.outcome(pi, batch.y) * weights
    return _Terms(utility, benefit_terms, benefit_value, sampled)


def _combine(terms: _Terms, groups: np.ndarray, scale_utility: np.ndarray, scale_benefit: np.ndarray) -> GradientEstimate:
    grad_utility = (terms.utility * scale_utility[:, None]).sum(axis=0)
    grads, values = [], []
    for g in (0, 1):
        mask = groups == g
        grads.append((terms.benefit[mask] * scale_benefit[mask, None]).sum(axis=0))
        values.append(float(np.sum(terms.benefit_value[mask] * scale_benefit[mask])))
    return GradientEstimate(
        grad_utility=grad_utility,
        grad_benefit=(grads[0], grads[1]),
        benefit_estimates=(values[0], values[1]),
        positives_used=int(terms.sampled.sum()),
    )


def ips_gradient(
    data: CollectedData,
    params: PolicyParams,
    fmap: FeatureMap,
    c: float,
    benefit: BenefitKind = BenefitKind.DEMOGRAPHIC_PARITY,
    normalization: Normalization = Normalization.PROPOSED,
    clip: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    exact_inner_expectation: bool = False,
) -> GradientEstimate:
    """
    Score-function gradients of utility and group benefits over all labeled
    positives of ``data``.

    Each positive contributes (y - c) * pi * score / propensity to the utility
    gradient and f(d, y) * score / propensity to its group's benefit gradient,
    with d drawn from the current policy.
    """
    rng = rng if rng is not None else np.random.default_rng()
    labeled = data.labeled
    m = fmap.output_dim(labeled.x.shape[1])
    total, per_group = _normalizers(data, normalization)
    if total == 0 or len(labeled) == 0:
        logger.warning("No labeled positives; gradient estimate is zero")
        zero = np.zeros(m)
        return GradientEstimate(zero, (zero, zero.copy()), (0.0, 0.0), 0)

    policy = make_policy(params, fmap)
    terms = _gradient_terms(labeled, policy, c, BenefitKind(benefit), clip, rng, exact_inner_expectation)
    with np.errstate(divide="ignore"):
        group_scale = np.where(per_group > 0, 1.0 / np.maximum(per_group, 1.0), 0.0)
    scale_utility = np.full(len(labeled), 1.0 / total)
    scale_benefit = group_scale[labeled.s]
    return _combine(terms, labeled.s, scale_utility, scale_benefit)


def grad_objective(est: GradientEstimate, lam: float) -> np.ndarray:
    """Ascent direction of u - lam/2 (b^0 - b^1)^2."""
    gap = est.benefit_estimates[0] - est.benefit_estimates[1]
    return est.grad_utility - lam * gap * (est.grad_benefit[0] - est.grad_benefit[1])


# ============ Update ============

CANDIDATES_PER_SLOT = 8
PENALTY_POOL_LIMIT = 1 << 16


def proximal_step(
    grad_utility: np.ndarray, gap: float, grad_gap: np.ndarray, lam: float, rate: float
) -> np.ndarray:
    """
    Step maximizing the linearized objective with a proximal term:

        g_u . step - lam / 2 * (gap + grad_gap . step)^2 - |step|^2 / (2 rate)

    For small ``rate * lam`` this is ``rate * grad_objective``; for large
    ``lam`` it projects the step onto the linearized zero-gap set instead of
    overshooting it.
    """
    grad_utility = np.asarray(grad_utility, dtype=float)
    grad_gap = np.asarray(grad_gap, dtype=float)
    if lam == 0:
        return rate * grad_utility
    residual = (gap + rate * float(grad_gap @ grad_utility)) / (1.0 + rate * lam * float(grad_gap @ grad_gap))
    return rate * (grad_utility - lam * residual * grad_gap)


@dataclass(frozen=True)
class _PenaltyPool:
    """
    Labeled positives for the fairness term, split by proposal parity.

    The gap is estimated on one half and its gradient on the other, so their
    product carries no covariance term.
    """
    batch: LabeledBatch
    half: np.ndarray  # (n,) 0 or 1
    scale: np.ndarray  # (n,) normalizer of each example within its half

    @classmethod
    def build(cls, rounds: Sequence[CollectedData], normalization: Normalization) -> "_PenaltyPool":
        pools, halves, scales = [], [], []
        for data in rounds:
            labeled = data.labeled
            half = labeled.position % 2
            if normalization is Normalization.PROPOSED:
                parity = np.arange(data.n_proposed) % 2
                counts = np.array([
                    np.bincount(data.population.s[parity == h], minlength=2) for h in (0, 1)
                ], dtype=float)
            else:
                counts = np.array([
                    np.bincount(labeled.s[half == h], minlength=2) for h in (0, 1)
                ], dtype=float)
            count = counts[half, labeled.s]
            with np.errstate(divide="ignore"):
                scales.append(np.where(count > 0, 1.0 / (len(rounds) * np.maximum(count, 1.0)), 0.0))
            pools.append(labeled)
            halves.append(half)
        batch = LabeledBatch.concat(pools)
        half = np.concatenate(halves)
        scale = np.concatenate(scales)
        if len(batch) > PENALTY_POOL_LIMIT:
            keep = np.linspace(0, len(batch) - 1, PENALTY_POOL_LIMIT).astype(np.int64)
            stride = len(batch) / PENALTY_POOL_LIMIT
            batch, half, scale = batch.take(keep), half[keep], scale[keep] * stride
        return cls(batch, half, scale)

    def gaps(
        self, policy: Policy, benefit: BenefitKind, clip: Optional[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Per-half gap b^0 - b^1 and its gradient, with d integrated out."""
        weights = importance_weights(self.batch.propensity, clip)
        pi = policy.prob_positive(self.batch.x, self.batch.s)
        score = policy.score(self.batch.x, self.batch.s)
        sign = np.where(self.batch.s == 0, 1.0, -1.0)
        value = benefit.outcome(pi, self.batch.y) * weights * self.scale * sign
        gaps = np.array([value[self.half == h].sum() for h in (0, 1)])
        grads = np.stack([(value[self.half == h, None] * score[self.half == h]).sum(axis=0) for h in (0, 1)])
        return gaps, grads


def _draw_rows(
    rng: np.random.Generator,
    rounds: Sequence[CollectedData],
    lookup: np.ndarray,
    proposal_offsets: np.ndarray,
    offsets: np.ndarray,
    sizes: np.ndarray,
    batch_size: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    B slots, each a uniform round and then a uniform labeled positive of it.

    A slot tries ``CANDIDATES_PER_SLOT`` uniform proposals of its round and
    keeps the first that was labeled, falling back to a direct draw. The
    number of draws does not depend on the data. Returns the slot rounds, the
    rows into the concatenated pools and which slots had a positive to draw.
    """
    proposed = np.array([r.n_proposed for r in rounds], dtype=np.int64)
    slots = rng.integers(0, len(rounds), size=batch_size)
    candidates = rng.random((batch_size, CANDIDATES_PER_SLOT))
    fallback = rng.random(batch_size)

    positions = proposal_offsets[slots, None] + np.floor(candidates * proposed[slots, None]).astype(np.int64)
    hits = lookup[positions]
    found = hits >= 0
    first = hits[np.arange(batch_size), np.argmax(found, axis=1)]
    direct = offsets[slots] + np.floor(fallback * sizes[slots]).astype(np.int64)
    valid = sizes[slots] > 0
    rows = np.where(found.any(axis=1), first, np.where(valid, direct, 0))
    return slots, rows, valid


def update_policy(
    params: PolicyParams,
    data: Union[CollectedData, Sequence[CollectedData]],
    config: ExperimentConfig,
    rng: np.random.Generator,
    fmap: Optional[FeatureMap] = None,
    timestep: int = 0,
) -> PolicyParams:
    """
    M minibatch gradient-ascent steps on the penalized objective.

    ``data`` is one round's collection or, for the aggregated sequence, all
    rounds so far; the gradient is then the equal-weight mixture of the
    per-round estimators. Each iteration draws B slots: a round uniformly,
    then one of its labeled positives uniformly. The utility gradient comes
    from the minibatch. With ``lam > 0`` the fairness term is evaluated on the
    whole labeled pool, with d integrated out, and enters through
    ``proximal_step``.
    """
    fmap = fmap if fmap is not None else FeatureMap.from_settings(config)
    rounds = [data] if isinstance(data, CollectedData) else list(data)
    if config.iterations == 0 or not rounds:
        return params

    pools = [r.labeled for r in rounds]
    sizes = np.array([len(p) for p in pools], dtype=np.int64)
    if sizes.sum() == 0:
        logger.warning("No labeled positives to learn from; policy left unchanged")
        return params

    union = LabeledBatch.concat(pools)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    proposed = np.array([r.n_proposed for r in rounds], dtype=float)
    proposal_offsets = np.concatenate([[0], np.cumsum(proposed.astype(np.int64))[:-1]])
    lookup = np.full(int(proposed.sum()), -1, dtype=np.int64)
    for r, pool in enumerate(pools):
        lookup[proposal_offsets[r] + pool.position] = offsets[r] + np.arange(sizes[r])

    benefit = BenefitKind(config.benefit)
    normalization = Normalization(config.normalization)
    penalty = _PenaltyPool.build(rounds, normalization) if config.lam > 0 else None
    rate = config.learning_rate_at(timestep)
    batch_size = config.batch_size
    theta = np.array(params.theta, dtype=float)
    skipped = 0

    for iteration in range(config.iterations):
        slots, rows, valid = _draw_rows(rng, rounds, lookup, proposal_offsets, offsets, sizes, batch_size)
        batch = union.take(rows)
        policy = make_policy(params.with_theta(theta), fmap)
        terms = _gradient_terms(
            batch, policy, config.cost, benefit, config.weight_clip, rng, config.exact_inner_expectation
        )
        positives = terms.sampled[valid].sum()
        if positives == 0:
            skipped += 1
            continue

        if normalization is Normalization.PROPOSED:
            scale = sizes[slots] / float(batch_size) / proposed[slots]
        else:
            scale = np.full(batch_size, 1.0 / positives)
        grad_utility = (terms.utility * np.where(valid, scale, 0.0)[:, None]).sum(axis=0)

        if penalty is None:
            theta = theta + rate * grad_utility
        else:
            gaps, grads = penalty.gaps(policy, benefit, config.weight_clip)
            theta = theta + 0.5 * (
                proximal_step(grad_utility, gaps[0], grads[1], config.lam, rate)
                + proximal_step(grad_utility, gaps[1], grads[0], config.lam, rate)
            )
        if not np.all(np.isfinite(theta)):
            raise NumericalError(f"policy parameters became non-finite at iteration {iteration}")

    if skipped:
        logger.debug(f"Skipped {skipped} of {config.iterations} iterations without sampled positives")
    return params.with_theta(theta)


# ============ Sequential Driver ============

def initial_parameters(
    env: Environment,
    config: ExperimentConfig,
    fmap: FeatureMap,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    theta_0 and the deterministic baseline's initial predictor weights.

    Configured values win; otherwise a predictor is fit on
    ``init_sample_size`` fully labeled i.i.d. draws and its weights serve as
    both.
    """
    if config.init_theta is not None:
        theta = np.asarray(config.init_theta, dtype=float)
    else:
        population = env.sample_individuals(config.init_sample_size, rng)
        labels = env.sample_label(population, rng)
        sample = LabeledBatch(population.x, population.s, labels, np.ones(len(population)))
        theta = train_mle(sample, fmap, config.predictor, rng).weights
        logger.info(f"Initialized from {len(population)} i.i.d. examples: weights {np.round(theta, 4).tolist()}")
    predictor_weights = (
        np.asarray(config.init_predictor_weights, dtype=float)
        if config.init_predictor_weights is not None
        else np.array(theta)
    )
    expected = fmap.output_dim(env.feature_dim)
    for name, vector in (("init_theta", theta), ("init_predictor_weights", predictor_weights)):
        if vector.shape != (expected,):
            raise ConfigError(
                f"{name} has length {vector.size}, but the feature map (degree {fmap.degree}, "
                f"include_group={fmap.include_group}) needs {expected}"
            )
    return theta, predictor_weights


def consequential_learning(
    env: Environment,
    strategy: Strategy,
    config: ExperimentConfig,
    rng: np.random.Generator,
    *,
    eval_sample: EvalSample,
    fmap: Optional[FeatureMap] = None,
    proposals: Optional[Callable[[int], Population]] = None,
    initial: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> LearningRun:
    """
    T rounds of collecting N decisions and updating the policy.

    ``proposals(t)`` supplies the round-t batch so several strategies can
    decide over identical individuals; without it the batch comes from
    ``rng``. ``initial`` is (theta_0, initial predictor weights), computed
    from ``rng`` when omitted. The metrics row for round t describes the
    policy after t updates.
    """
    strategy = Strategy(strategy)
    fmap = fmap if fmap is not None else FeatureMap.from_settings(config)
    c = config.cost
    aggregated = SequenceMode(config.sequence_mode) is SequenceMode.AGGREGATED
    run = LearningRun(strategy)

    if strategy is Strategy.OPTIMAL:
        if not env.has_conditional:
            raise ConditionalUnavailableError(
                f"strategy 'optimal' needs P(y=1|x,s), which {type(env).__name__} does not provide"
            )
        benefit = BenefitKind(config.benefit) if config.lam > 0 else None
        spec = make_optimal_policy(env, c, benefit, eval_sample)
        policy: Policy = OptimalPolicy(env, spec)
    else:
        theta0, predictor_weights = initial if initial is not None else initial_parameters(env, config, fmap, rng)
        if strategy is Strategy.DETERMINISTIC:
            predictor = Predictor(predictor_weights)
            policy = ThresholdPolicy(ThresholdPolicySpec(predictor, c), fmap)
        else:
            params = PolicyParams(theta0, strategy.policy_kind)
            policy = make_policy(params, fmap)
    run.policies.append(policy)

    tracker = EffectiveUtilityTracker(c)
    for t in range(config.timesteps):
        batch = proposals(t) if proposals is not None else None
        data = collect_data(env, policy, config.decisions, t, rng, proposals=batch)
        run.collected.append(data)
        tracker.add(data)

        if strategy is Strategy.DETERMINISTIC:
            history = run.collected if aggregated else [data]
            training = LabeledBatch.concat([r.labeled for r in history])
            run.update_pool_sizes.append(len(training))
            if len(training):
                predictor = train_mle(training, fmap, config.predictor, rng, initial_weights=predictor.weights)
            else:
                logger.warning(f"Round {t}: no labeled data, predictor unchanged")
            policy = ThresholdPolicy(ThresholdPolicySpec(predictor, c), fmap)
        elif strategy is not Strategy.OPTIMAL:
            history = run.collected if aggregated else data
            run.update_pool_sizes.append(
                sum(len(r.labeled) for r in run.collected) if aggregated else len(data.labeled)
            )
            params = update_policy(params, history, config, rng, fmap, timestep=t)
            policy = make_policy(params, fmap)

        run.policies.append(policy)
        run.metrics.append(
            evaluate_policy(policy, eval_sample, c, t + 1, tracker.value, len(data.labeled))
        )

    logger.debug(f"{strategy.value}: finished {config.timesteps} rounds")
    return run
