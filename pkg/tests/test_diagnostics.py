import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qvqt.diagnostics import (
    derive_seed,
    free_energy_variance,
    multi_seed_study,
    sample_variance,
    two_pass_variance,
    variance_rows,
)
from qvqt.engine import make_problem, optimize, shot_estimate
from qvqt.hubbard import HubbardConfig


def test_forced_identical_samples_have_zero_variance():
    config = HubbardConfig(2)
    problem = make_problem(config, 1.0, 1, 1)
    theta = (np.full(problem.n_params[0], 0.3), np.full(problem.n_params[1], -0.2))
    assert free_energy_variance(config, 1, n_samples=2, thetas=[theta, theta]) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=50))
def test_variance_matches_two_pass(values):
    assert abs(sample_variance(values) - two_pass_variance(values)) <= 1e-12 * max(1.0, two_pass_variance(values)) + 1e-12


def test_variance_is_unbiased_form():
    assert sample_variance([1.0, 3.0]) == 2.0
    assert sample_variance([5.0]) == 0.0


def test_derived_seeds_deterministic_and_distinct():
    seeds = [derive_seed(7, i) for i in range(100)]
    assert seeds == [derive_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert derive_seed(8, 0) != derive_seed(7, 0)


def test_variance_reproducible_and_positive():
    config = HubbardConfig(2)
    a = free_energy_variance(config, 2, n_samples=50, seed=3)
    assert a == free_energy_variance(config, 2, n_samples=50, seed=3)
    assert a > 0
    assert free_energy_variance(config, 2, n_samples=50, seed=3, mode="gradient") > 0


def test_variance_no_collapse_with_depth():
    config = HubbardConfig(3)
    values = [free_energy_variance(config, layers, n_samples=200, seed=1) for layers in (1, 2, 3, 4)]
    assert min(values) > 1e-5


def test_variance_rows_schema():
    rows = variance_rows(HubbardConfig(2), [1, 2, 3], n_samples=20, seed=0)
    assert len(rows) == 3
    assert list(rows[0]) == ["n_sites", "layers", "n_samples", "variance", "seed"]


def test_bad_mode():
    with pytest.raises(ValueError):
        free_energy_variance(HubbardConfig(2), 1, 3, mode="hessian")


class TestMultiSeed:
    def test_equal_seeds_have_zero_spread(self):
        study = multi_seed_study(HubbardConfig(2), [1.0], layers1=1, layers2=1, budget=20, seeds=[4, 4])[0]
        assert all(row["std"] == 0.0 for row in study.rows())
        assert study.rows()[0]["n_seeds"] == 2

    def test_needs_two_seeds(self):
        with pytest.raises(ValueError):
            multi_seed_study(HubbardConfig(2), [1.0], seeds=[1])

    def test_spread_exceeds_shot_noise(self):
        # optimisation spread over random starts vs the statistical error of a
        # 3000-shot estimate at one of the optimised points
        config = HubbardConfig(2)
        study = multi_seed_study(config, [1.0], n_seeds=10, master_seed=0, layers1=2, layers2=2, budget=500)[0]
        problem = make_problem(config, 1.0, 2, 2)
        r = optimize(problem, init="uniform", seed=study.seeds[0], budget=500)
        noisy = [shot_estimate(r.theta1, r.theta2, make_problem(config, 1.0, 2, 2, "shots", 3000, s))["F"] for s in range(30)]
        assert study.std("F") > 2 * np.std(noisy, ddof=1)
        assert 20 <= study.mean("iterations") <= 500

    def test_unconverged_runs_flagged(self):
        study = multi_seed_study(HubbardConfig(2), [1.0], n_seeds=2, layers1=1, layers2=1, budget=2)[0]
        assert study.unconverged == study.seeds
        assert len(study.values["F"]) == 2
