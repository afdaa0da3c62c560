import numpy as np
import pytest

from consequential.errors import ConfigError, ExplorationError
from consequential.schemas import BenefitKind
from consequential.services.environments import collect_data
from consequential.services.oracle import (
    MAX_ENUMERATION_SUPPORT,
    DiscreteEnv,
    TabularPolicy,
    approaching_policy,
    enumerate_deterministic,
    exact_induced,
    exact_optimal,
    exact_value,
    policy_from_record,
)
from consequential.services.policies import ConstantPolicy, FeatureMap, LogisticPolicy, PolicyParams, make_policy
from tests.conftest import random_discrete_env


# ============ exact_value ============

def test_single_point_value():
    env = DiscreteEnv([0.0], [0], [1.0], [0.7])
    value = exact_value(ConstantPolicy(1.0), env, 0.5)
    assert value.utility == pytest.approx(0.2)
    assert value.objective == value.utility


def test_penalty_uses_the_squared_gap(three_point_env):
    policy = TabularPolicy(three_point_env, [1.0, 0.0, 0.0])
    value = exact_value(policy, three_point_env, 0.5, lam=4.0)
    # group 0 holds x=-1 (0.3) and x=1 (0.4); group 1 holds x=0
    assert value.benefits == pytest.approx((0.3 / 0.7, 0.0))
    assert value.objective == pytest.approx(value.utility - 2.0 * (0.3 / 0.7) ** 2)


def test_equal_opportunity_benefit(three_point_env):
    value = exact_value(ConstantPolicy(1.0), three_point_env, 0.5, benefit=BenefitKind.EQUAL_OPPORTUNITY)
    assert value.benefits[0] == pytest.approx((0.3 * 0.2 + 0.4 * 0.9) / 0.7)
    assert value.benefits[1] == pytest.approx(0.5)


# ============ exact_induced ============

def test_half_policy_induces_the_ground_truth(three_point_env):
    induced = exact_induced(three_point_env, ConstantPolicy(0.5))
    assert induced.normalizer == pytest.approx(0.5)
    for i in range(three_point_env.size):
        p, q = three_point_env.probabilities[i], three_point_env.conditionals[i]
        assert induced.probability_of(i, 1) == pytest.approx(p * q)
        assert induced.probability_of(i, 0) == pytest.approx(p * (1 - q))


def test_always_positive_normalizer(three_point_env):
    induced = exact_induced(three_point_env, ConstantPolicy(1.0))
    assert induced.normalizer == pytest.approx(1.0)
    assert induced.group_normalizers == pytest.approx((1.0, 1.0))


def test_two_point_induced_distribution():
    env = DiscreteEnv([0.0, 1.0], [0, 1], [0.4, 0.6], [0.5, 1.0])
    induced = exact_induced(env, TabularPolicy(env, [0.5, 1.0]))
    assert induced.normalizer == pytest.approx(0.8)
    assert induced.probability_of(0, 1) == pytest.approx(0.125)
    assert induced.probability_of(0, 0) == pytest.approx(0.125)
    assert induced.probability_of(1, 1) == pytest.approx(0.75)
    assert induced.probability_of(1, 0) == pytest.approx(0.0)
    assert induced.group_normalizers == pytest.approx((0.5, 1.0))


def test_normalizer_is_mixture_of_group_normalizers():
    rng = np.random.default_rng(21)
    for _ in range(20):
        env = random_discrete_env(rng, 6)
        policy = TabularPolicy(env, rng.uniform(0.05, 1.0, size=env.size))
        induced = exact_induced(env, policy)
        mixture = float(env.group_mass @ np.array(induced.group_normalizers))
        assert induced.normalizer == pytest.approx(mixture, abs=1e-12)
        assert induced.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_never_positive_collector_cannot_induce(three_point_env):
    with pytest.raises(ExplorationError):
        exact_induced(three_point_env, ConstantPolicy(0.0))


def test_induced_distribution_matches_collection(three_point_env):
    env = three_point_env
    policy = approaching_policy(env, 0.5, 4)
    induced = exact_induced(env, policy)
    data = collect_data(env, policy, 200_000, 0, np.random.default_rng(8))
    labeled = data.labeled
    index = env.locate(labeled.x, labeled.s)
    n = len(labeled)
    for i in range(env.size):
        for y in (0, 1):
            expected = induced.probability_of(i, y)
            observed = np.mean((index == i) & (labeled.y == y))
            assert abs(observed - expected) <= 4 * np.sqrt(expected * (1 - expected) / n) + 1e-12


# ============ exact_optimal ============

def test_optimal_rejects_everyone_below_cost():
    env = DiscreteEnv([0.0, 1.0], [0, 1], [0.5, 0.5], [0.1, 0.2])
    solution = exact_optimal(env, 0.5)
    assert solution.accept.size == 0
    assert solution.value.utility == 0.0


def test_optimal_accepts_everyone_above_cost():
    env = DiscreteEnv([0.0, 1.0], [0, 1], [0.5, 0.5], [0.6, 0.9])
    solution = exact_optimal(env, 0.5)
    np.testing.assert_array_equal(solution.accept, [0, 1])
    assert solution.value.utility == pytest.approx(0.5 * 0.1 + 0.5 * 0.4)


def test_optimal_dominates_every_policy():
    rng = np.random.default_rng(5)
    for _ in range(25):
        env = random_discrete_env(rng, int(rng.integers(2, 9)))
        c = float(rng.uniform(0.1, 0.9))
        best = exact_optimal(env, c).value.utility
        assert best >= enumerate_deterministic(env, c).max() - 1e-12
        logistic = make_policy(PolicyParams(rng.normal(size=2) * 3), FeatureMap())
        assert best >= exact_value(logistic, env, c).utility - 1e-12
        tabular = TabularPolicy(env, rng.random(env.size))
        assert best >= exact_value(tabular, env, c).utility - 1e-12


def test_enumeration_has_a_support_cap():
    env = random_discrete_env(np.random.default_rng(0), MAX_ENUMERATION_SUPPORT + 1)
    with pytest.raises(ValueError, match="limited"):
        enumerate_deterministic(env, 0.5)


def test_enumeration_covers_every_pattern(three_point_env):
    values = enumerate_deterministic(three_point_env, 0.5)
    assert values.shape == (8,)
    assert values[0] == 0.0


# ============ approaching_policy ============

def test_approaching_policy_closes_the_gap(three_point_env):
    env = three_point_env
    c = 0.5
    best = exact_optimal(env, c).value.utility
    gaps = [best - exact_value(approaching_policy(env, c, n), env, c).utility for n in (1, 2, 8, 64, 1024)]
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= gaps[0] / 512


def test_approaching_policy_explores_everywhere(three_point_env):
    policy = approaching_policy(three_point_env, 0.5, 10)
    np.testing.assert_allclose(policy.probabilities, [0.1, 1.0, 1.0])
    with pytest.raises(ValueError):
        approaching_policy(three_point_env, 0.5, 0)


# ============ DiscreteEnv ============

def test_discrete_env_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        DiscreteEnv([0.0, 1.0], [0, 1], [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValueError, match="distinct"):
        DiscreteEnv([0.0, 0.0], [1, 1], [0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteEnv([0.0], [2], [1.0], [0.5])
    with pytest.raises(ValueError):
        DiscreteEnv([0.0], [0], [1.0], [1.5])


def test_same_point_in_both_groups_is_allowed():
    env = DiscreteEnv([0.0, 0.0], [0, 1], [0.5, 0.5], [0.2, 0.8])
    np.testing.assert_array_equal(env.locate(np.array([[0.0], [0.0]]), np.array([1, 0])), [1, 0])


def test_discrete_env_record_round_trip(four_point_env):
    restored = DiscreteEnv.from_dict(four_point_env.to_dict())
    np.testing.assert_array_equal(restored.points, four_point_env.points)
    np.testing.assert_array_equal(restored.conditionals, four_point_env.conditionals)


def test_tabular_policy_validation(three_point_env):
    with pytest.raises(ValueError):
        TabularPolicy(three_point_env, [0.5, 0.5])
    with pytest.raises(ValueError):
        TabularPolicy(three_point_env, [0.5, 0.5, 1.5])


# ============ policy_from_record ============

def test_policy_records(three_point_env):
    env = three_point_env
    tabular = policy_from_record(env, {"kind": "tabular", "probabilities": [0.1, 0.2, 0.3]}, 0.5)
    np.testing.assert_allclose(tabular.prob_positive(env.points, env.groups), [0.1, 0.2, 0.3])

    logistic = policy_from_record(env, {"kind": "logistic", "theta": [0.0, 1.0]}, 0.5)
    assert isinstance(logistic, LogisticPolicy)

    optimal = policy_from_record(env, {"kind": "optimal"}, 0.5)
    np.testing.assert_array_equal(optimal.prob_positive(env.points, env.groups), [0.0, 1.0, 1.0])

    approaching = policy_from_record(env, {"kind": "approaching", "n": 5}, 0.5)
    np.testing.assert_allclose(approaching.prob_positive(env.points, env.groups), [0.2, 1.0, 1.0])


def test_bad_policy_records(three_point_env):
    with pytest.raises(ConfigError, match="unknown policy kind"):
        policy_from_record(three_point_env, {"kind": "forest"}, 0.5)
    with pytest.raises(ConfigError, match="missing key"):
        policy_from_record(three_point_env, {"kind": "logistic"}, 0.5)
    with pytest.raises(ConfigError):
        policy_from_record(three_point_env, {"kind": "tabular", "probabilities": [2.0, 0.0, 0.0]}, 0.5)
