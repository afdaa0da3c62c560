import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError
from scipy.stats import chisquare

from consequential.errors import ConditionalUnavailableError, ConfigError, IngestionError
from consequential.services.environments import (
    CollectedData,
    DecisionRecord,
    Individual,
    LabeledExample,
    Population,
    ScoreTableSpec,
    collect_data,
    make_empirical_env,
    make_score_table_env,
    make_synthetic_env,
    sample_individuals,
    sample_label,
    true_conditional,
)
from consequential.services.oracle import DiscreteEnv
from consequential.services.policies import ConstantPolicy
from consequential.services.presets import standin_dataset, standin_score_table


# ============ Row Types ============

def test_individual_rejects_bad_group():
    with pytest.raises(ValueError):
        Individual(np.array([0.1]), 2)


def test_individual_rejects_non_finite_features():
    with pytest.raises(ValueError):
        Individual(np.array([np.nan]), 0)


def test_labeled_example_requires_binary_label():
    with pytest.raises(ValueError):
        LabeledExample(Individual([0.0], 0), 3)


def test_decision_record_label_iff_positive():
    person = Individual([0.0], 1)
    DecisionRecord(person, d=1, y=0, t=0, propensity=0.5)
    DecisionRecord(person, d=0, y=None, t=0, propensity=0.5)
    with pytest.raises(ValueError):
        DecisionRecord(person, d=0, y=1, t=0, propensity=0.5)
    with pytest.raises(ValueError):
        DecisionRecord(person, d=1, y=None, t=0, propensity=0.5)


def test_collected_data_enforces_selective_labels():
    population = Population(np.zeros((2, 1)), [0, 1])
    with pytest.raises(ValueError):
        CollectedData(0, population, d=[1, 0], y=[1, 1], propensity=[0.5, 0.5])


def test_population_digest_depends_on_content():
    a = Population(np.array([[0.1], [0.2]]), [0, 1])
    b = Population(np.array([[0.1], [0.2]]), [0, 1])
    c = Population(np.array([[0.1], [0.3]]), [0, 1])
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


# ============ sample_individuals ============

def test_score_table_group_weights(rng):
    env = make_score_table_env(standin_score_table())
    n = 100_000
    population = sample_individuals(env, n, rng)
    fraction = np.mean(population.s == 0)
    assert abs(fraction - 0.8) <= 3 * np.sqrt(0.8 * 0.2 / n)


def test_two_point_cdf_splits_evenly(rng):
    spec = ScoreTableSpec(scores=[400, 401], cdf=([0.5, 1.0], [0.5, 1.0]), repay=([0.2, 0.8], [0.2, 0.8]))
    env = make_score_table_env(spec)
    n = 100_000
    population = sample_individuals(env, n, rng)
    assert set(np.unique(population.x)) == {400.0, 401.0}
    fraction = np.mean(population.x[:, 0] == 400.0)
    assert abs(fraction - 0.5) <= 4 * np.sqrt(0.25 / n)


def test_point_mass_environment(rng):
    env = DiscreteEnv(points=[0.25], groups=[1], probabilities=[1.0], conditionals=[0.4])
    population = sample_individuals(env, 50, rng)
    assert np.all(population.x == 0.25)
    assert np.all(population.s == 1)


def test_setting1_respects_truncation(rng):
    env = make_synthetic_env("setting1")
    population = sample_individuals(env, 100_000, rng)
    assert population.x.min() >= -0.8
    assert population.x.max() <= 0.8


def test_sampling_is_deterministic_given_seed():
    env = make_synthetic_env("setting2")
    a = sample_individuals(env, 1000, np.random.default_rng(7))
    b = sample_individuals(env, 1000, np.random.default_rng(7))
    assert a.digest() == b.digest()


def test_sample_individuals_needs_positive_n(rng):
    with pytest.raises(ValueError):
        sample_individuals(make_synthetic_env("setting1"), 0, rng)


def test_empty_training_pool_is_a_config_error(rng):
    frame = pd.DataFrame({"x": [0.5], "s": [0], "y": [1]})
    env = make_empirical_env(frame, split_fraction=0.4, rng=rng)
    with pytest.raises(ConfigError):
        sample_individuals(env, 5, rng)


# ============ true_conditional ============

def test_score_table_lookup():
    spec = standin_score_table()
    env = make_score_table_env(spec)
    row = spec.scores.index(700)
    assert true_conditional(env, Individual([700.0], 0)) == pytest.approx(spec.repay[0][row], abs=1e-12)


def test_setting1_pinned_conditional():
    env = make_synthetic_env("setting1")
    assert true_conditional(env, Individual([-0.3], 0)) == pytest.approx(0.142, abs=1e-12)
    assert true_conditional(env, Individual([-0.3], 1)) == pytest.approx(0.142, abs=1e-12)


def test_setting1_conditional_is_monotone():
    env = make_synthetic_env("setting1")
    grid = np.linspace(-0.8, 0.8, 401)
    q = env.true_conditional(grid[:, None], np.zeros(grid.size, dtype=int))
    assert np.all(np.diff(q) > 0)


def test_setting2_crosses_cost_on_two_intervals():
    env = make_synthetic_env("setting2")
    grid = np.linspace(-15, 15, 30_001)
    above = env.true_conditional(grid[:, None], np.zeros(grid.size, dtype=int)) >= 0.55
    starts = np.flatnonzero(np.diff(above.astype(int)) == 1)
    assert starts.size == 2


def test_constant_conditional():
    env = make_synthetic_env({
        "group_means": [0.0, 0.0],
        "group_sd": 1.0,
        "conditional": {"kind": "constant", "value": 1.0},
    })
    population = env.sample_individuals(100, np.random.default_rng(0))
    assert np.all(true_conditional(env, population) == 1.0)


def test_empirical_environment_has_no_conditional(rng):
    env = make_empirical_env(standin_dataset(200), 0.5, rng)
    with pytest.raises(ConditionalUnavailableError):
        true_conditional(env, Individual([0.0, 0.0], 0))


# ============ sample_label ============

def test_certain_labels(rng):
    yes = DiscreteEnv([0.0], [0], [1.0], [1.0])
    no = DiscreteEnv([0.0], [0], [1.0], [0.0])
    assert np.all(yes.sample_label(yes.sample_individuals(200, rng), rng) == 1)
    assert np.all(no.sample_label(no.sample_individuals(200, rng), rng) == 0)
    assert sample_label(yes, Individual([0.0], 0), rng) == 1


def test_label_frequency(rng):
    env = DiscreteEnv([0.0], [0], [1.0], [0.55])
    n = 100_000
    labels = env.sample_label(env.sample_individuals(n, rng), rng)
    assert abs(labels.mean() - 0.55) <= 3 * np.sqrt(0.55 * 0.45 / n)


def test_empirical_labels_come_from_the_table(rng):
    frame = pd.DataFrame({"x": np.arange(20.0), "s": np.arange(20) % 2, "y": (np.arange(20) >= 10).astype(int)})
    env = make_empirical_env(frame, 0.5, rng, standardize=False)
    population = env.sample_individuals(500, rng)
    labels = env.sample_label(population, rng)
    np.testing.assert_array_equal(labels, (population.x[:, 0] >= 10).astype(int))


# ============ collect_data ============

def test_never_positive_collects_no_labels(rng, three_point_env):
    data = collect_data(three_point_env, ConstantPolicy(0.0), 100, 0, rng)
    assert len(data.labeled) == 0
    assert len(data.log) == 100
    assert all(record.d == 0 and record.y is None for record in data.log)
    assert data.per_group_proposed.sum() == 100


def test_always_positive_labels_everyone(rng, three_point_env):
    data = collect_data(three_point_env, ConstantPolicy(1.0), 100, 3, rng)
    assert len(data.labeled) == 100
    assert all(record.t == 3 for record in data.log)
    np.testing.assert_array_equal(data.labeled.propensity, np.ones(100))


def test_randomized_collection_matches_ground_truth(rng, three_point_env):
    env = three_point_env
    data = collect_data(env, ConstantPolicy(0.5), 100_000, 0, rng)
    labeled = data.labeled
    cells = env.locate(labeled.x, labeled.s) * 2 + labeled.y
    observed = np.bincount(cells, minlength=2 * env.size)
    expected_mass = np.column_stack([
        env.probabilities * (1 - env.conditionals),
        env.probabilities * env.conditionals,
    ]).reshape(-1)
    expected = expected_mass * len(labeled)
    assert chisquare(observed, expected).pvalue > 0.01


def test_collect_data_uses_given_proposals(rng, three_point_env):
    proposals = three_point_env.sample_individuals(50, np.random.default_rng(1))
    data = collect_data(three_point_env, ConstantPolicy(0.3), 50, 0, rng, proposals=proposals)
    assert data.population.digest() == proposals.digest()


def test_labeled_positions_index_the_proposals(rng, three_point_env):
    data = collect_data(three_point_env, ConstantPolicy(0.5), 300, 0, rng)
    labeled = data.labeled
    np.testing.assert_array_equal(labeled.position, np.flatnonzero(data.d == 1))
    np.testing.assert_array_equal(labeled.x, data.population.x[labeled.position])
    np.testing.assert_array_equal(labeled.take([0, 2]).position, labeled.position[[0, 2]])


def test_collection_draws_do_not_depend_on_the_decisions(three_point_env):
    after = []
    for p in (0.0, 0.3, 1.0):
        rng = np.random.default_rng(4)
        collect_data(three_point_env, ConstantPolicy(p), 200, 0, rng)
        after.append(rng.random())
    assert after[0] == after[1] == after[2]


# ============ Validation ============

def test_conditional_leaving_unit_interval_is_rejected():
    with pytest.raises(ValidationError):
        make_synthetic_env({
            "group_means": [0.0, 0.0],
            "group_sd": 1.0,
            "truncation": [-2.0, 2.0],
            "conditional": {"kind": "linear", "intercept": 0.5, "slope": 0.5},
        })


def test_non_monotone_cdf_is_rejected():
    with pytest.raises(ValidationError, match="monotone"):
        ScoreTableSpec(
            scores=[1, 2, 3],
            cdf=([0.2, 0.1, 1.0], [0.3, 0.6, 1.0]),
            repay=([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]),
        )


def test_cdf_must_end_at_one():
    with pytest.raises(ValidationError):
        ScoreTableSpec(
            scores=[1, 2],
            cdf=([0.2, 0.9], [0.3, 1.0]),
            repay=([0.1, 0.9], [0.1, 0.9]),
        )


def test_bad_dataset_value_names_row_and_column(rng):
    frame = pd.DataFrame({"x": [0.1, "oops", 0.3], "s": [0, 1, 0], "y": [1, 0, 1]})
    with pytest.raises(IngestionError, match=r"row 2 \(line 3\), column 'x'"):
        make_empirical_env(frame, 0.5, rng)


def test_dataset_requires_binary_group(rng):
    frame = pd.DataFrame({"x": [0.1, 0.2], "s": [0, 2], "y": [1, 0]})
    with pytest.raises(IngestionError, match="column 's'"):
        make_empirical_env(frame, 0.5, rng)


def test_empirical_split_is_disjoint(rng):
    env = make_empirical_env(standin_dataset(1000), 0.8, rng)
    assert env.pool_size == 800
    assert set(env.train_rows).isdisjoint(env.test_rows)
    population, labels = env.test_set()
    assert len(population) == 200 and labels.shape == (200,)
