"""
End-to-end behavior at reduced sizes. Run with ``pytest -m slow``.
"""

import json

import numpy as np
import pandas as pd
import pytest

from consequential.schemas import EnvironmentName, ExperimentConfig, LendingSweepConfig, PolicyKind, RunConfig, Strategy
from consequential.services.environments import collect_data
from consequential.services.learning import consequential_learning, ips_gradient, ips_value
from consequential.services.lending import lending_sweep
from consequential.services.oracle import TabularPolicy, approaching_policy, exact_optimal, exact_value
from consequential.services.policies import FeatureMap, PolicyParams, make_policy
from consequential.services.presets import preset_defaults, two_region_env
from consequential.services.runner import run_experiment
from tests.conftest import random_discrete_env

pytestmark = pytest.mark.slow


def _run_config(environment, **overrides):
    values = preset_defaults(environment)
    values.update(environment=environment.value, **overrides)
    return RunConfig.model_validate(values)


def _final_rows(frame):
    return frame[frame["t"] == frame["t"].max()]


def test_ips_estimates_match_the_oracle():
    rng = np.random.default_rng(2024)
    c = 0.4
    hits = 0
    for _ in range(5):
        env = random_discrete_env(rng, int(rng.integers(3, 13)))
        collector = TabularPolicy(env, rng.uniform(0.3, 1.0, size=env.size))
        target = make_policy(PolicyParams(rng.normal(size=2)), FeatureMap())
        data = collect_data(env, collector, 1_000_000, 0, rng)
        utility, benefits = ips_value(data, target, c)
        exact = exact_value(target, env, c)

        pi = target.prob_positive(data.population.x, data.population.s)
        labeled = data.d == 1
        y = np.where(labeled, data.y, 0)
        utility_terms = np.where(labeled, pi * (y - c) / data.propensity, 0.0)
        benefit_terms = np.where(labeled, pi / data.propensity, 0.0)

        hits += abs(utility - exact.utility) <= 3 * utility_terms.std() / np.sqrt(utility_terms.size)
        for g in (0, 1):
            terms = benefit_terms[data.population.s == g]
            hits += abs(benefits[g] - exact.benefits[g]) <= 3 * terms.std() / np.sqrt(terms.size)
    assert hits >= 14


@pytest.mark.parametrize("kind", [PolicyKind.LOGISTIC, PolicyKind.SEMI_LOGISTIC])
def test_policy_gradient_matches_the_oracle(four_point_env, kind):
    env = four_point_env
    c = 0.5
    fmap = FeatureMap()
    collector = approaching_policy(env, c, 3)
    rng = np.random.default_rng(77)
    phi = fmap.transform(env.points, env.groups)
    h = 1e-6

    def values(theta):
        v = exact_value(make_policy(PolicyParams(theta, kind), fmap), env, c)
        return np.array([v.utility, v.benefits[0], v.benefits[1]])

    z_scores = []
    checked = 0
    while checked < 10:
        theta = rng.normal(size=2)
        if np.min(np.abs(phi @ theta)) < 0.05:
            continue  # semi-logistic kink
        checked += 1
        samples = []
        for _ in range(200):
            data = collect_data(env, collector, 500, 0, rng)
            est = ips_gradient(data, PolicyParams(theta, kind), fmap, c, rng=rng)
            samples.append(np.concatenate([est.grad_utility, est.grad_benefit[0], est.grad_benefit[1]]))
        samples = np.array(samples)
        se = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        fd = np.array([(values(theta + h * e) - values(theta - h * e)) / (2 * h) for e in np.eye(2)])
        expected = fd.T.reshape(-1)
        # exactly zero above the semi-logistic boundary
        live = (se > 0) | (np.abs(expected) > 1e-9)
        z_scores.extend(np.abs(samples.mean(axis=0) - expected)[live] / np.maximum(se[live], 1e-12))
    z_scores = np.array(z_scores)
    assert np.mean(z_scores <= 3) >= 0.95
    assert np.all(z_scores <= 4.5)


def test_threshold_rule_never_recovers_the_optimum():
    env = two_region_env()
    config = ExperimentConfig.model_validate(preset_defaults(EnvironmentName.TWO_REGION))
    assert config.timesteps == 200
    c = config.cost
    optimal = exact_optimal(env, c)
    sample = env.support_sample()

    recovered = 0
    logistic_wins = 0
    for seed in range(30):
        deterministic = consequential_learning(
            env, Strategy.DETERMINISTIC, config, np.random.default_rng([seed, 0]), eval_sample=sample
        )
        logistic = consequential_learning(
            env, Strategy.LOGISTIC, config, np.random.default_rng([seed, 1]), eval_sample=sample
        )
        final = deterministic.final_policy.prob_positive(env.points, env.groups)
        recovered += np.array_equal(final, optimal.policy.probabilities)
        logistic_wins += (
            exact_value(logistic.final_policy, env, c).utility > exact_value(deterministic.final_policy, env, c).utility
        )
    assert recovered == 0
    assert logistic_wins >= 28


def test_logistic_policy_locates_the_setting1_boundary(tmp_path):
    config = _run_config(
        EnvironmentName.SETTING1,
        strategies=["optimal", "deterministic", "logistic"],
        seeds=list(range(10)),
        decisions=256 * 8,
        eval_size=20_000,
        init_predictor_weights=[-5.8, 8.0],  # Q(y=1|x) >= c only above x = 0.5
    )
    result = run_experiment(config, output=tmp_path, workers=4)
    final = _final_rows(pd.read_csv(result.metrics_path))
    median = final.groupby("strategy")["utility"].median()
    assert median["logistic"] >= 0.95 * median["optimal"]
    assert median["deterministic"] < median["logistic"]

    manifest = json.loads(result.manifest_path.read_text())
    roots = [
        -cell["final_policy"]["theta"][0] / cell["final_policy"]["theta"][1]
        for cell in manifest["cells"]
        if cell["strategy"] == "logistic"
    ]
    assert abs(np.median(roots) + 0.3) <= 0.05


def test_fairness_penalty_sweep_on_setting1(tmp_path):
    lambdas = [0.0, 10 ** -0.5, 10.0, 1000.0]
    config = _run_config(
        EnvironmentName.SETTING1,
        strategies=["logistic"],
        seeds=list(range(5)),
        lambda_grid=lambdas,
        benefit="demographic_parity",
        eval_size=20_000,
    )
    result = run_experiment(config, output=tmp_path, workers=4)
    frame = pd.read_csv(result.metrics_path)
    final = _final_rows(frame)
    assert final["t"].iloc[0] == 200
    gaps = final.assign(gap=final["dp_violation"].abs()).groupby("lambda")["gap"].median()
    utilities = final.groupby("lambda")["utility"].median()

    medians = [gaps[lam] for lam in lambdas]
    assert all(later <= earlier for earlier, later in zip(medians, medians[1:]))
    assert gaps[1000.0] <= 0.01
    assert utilities[1000.0] < utilities[0.0]

    manifest = json.loads(result.manifest_path.read_text())
    for seed in config.seeds:
        digests = {cell["proposal_digest"] for cell in manifest["cells"] if cell["seed"] == seed}
        assert len(digests) == 1


def test_approaching_policies_close_the_gap():
    env = random_discrete_env(np.random.default_rng(6), 10)
    c = 0.5
    best = exact_optimal(env, c).value.utility
    gaps = [best - exact_value(approaching_policy(env, c, n), env, c).utility for n in 2 ** np.arange(11)]
    assert np.all(np.diff(gaps) <= 1e-15)
    assert gaps[-1] <= gaps[0] / 512


def test_standin_dataset_runs_every_strategy(tmp_path):
    config = _run_config(
        EnvironmentName.STANDIN_DATASET,
        strategies=["deterministic", "logistic", "semi_logistic"],
        seeds=[0, 1],
        timesteps=3,
        iterations=64,
        decisions=512,
    )
    frame = pd.read_csv(run_experiment(config, output=tmp_path).metrics_path)
    assert len(frame) == 3 * 2 * 3
    assert frame["effective_utility"].between(-config.cost, 1 - config.cost).all()
    assert np.isfinite(frame["utility"]).all()


def test_logistic_overtakes_the_threshold_rule_on_effective_utility(tmp_path):
    config = _run_config(
        EnvironmentName.STANDIN_DATASET,
        strategies=["deterministic", "logistic"],
        seeds=list(range(10)),
    )
    assert (config.alpha, config.batch_size, config.iterations, config.decisions) == (0.1, 64, 40 * 64, 64 * 64)
    frame = pd.read_csv(run_experiment(config, output=tmp_path, workers=4).metrics_path)
    late = frame[frame["t"] >= 100]
    median = late.groupby(["t", "strategy"])["effective_utility"].median().unstack()
    assert len(median) == config.timesteps - 99
    assert (median["logistic"] > median["deterministic"]).all()


def test_harsh_collection_collapses_lending_utility(tmp_path):
    config = LendingSweepConfig(thresholds=[500, 600, 700, 800], samples_per_threshold=10_000, eval_size=200_000)
    rows = lending_sweep(config, tmp_path / "lending.csv")
    lenient, harshest = rows[0], rows[-1]
    assert lenient.utility > 0
    assert harshest.utility <= 0.1 * lenient.utility


def test_repeated_runs_are_byte_identical(tmp_path):
    config = _run_config(
        EnvironmentName.STANDIN_DATASET,
        strategies=["deterministic", "logistic"],
        seeds=[3, 4],
        timesteps=2,
        iterations=16,
        decisions=256,
    )
    first = run_experiment(config, output=tmp_path / "first", workers=1)
    second = run_experiment(config, output=tmp_path / "second", workers=3)
    assert first.metrics_path.read_bytes() == second.metrics_path.read_bytes()
    assert first.manifest_path.read_bytes() == second.manifest_path.read_bytes()
