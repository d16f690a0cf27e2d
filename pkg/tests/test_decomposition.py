"""Product-form decomposition algebra and the max-min oracles."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamcfr.decomposition import (check_strategy_consistency, compose_joint_regret, decomposable_maxmin_oracle,
                                   fit_product_form, grid_size, individual_strategies, is_product_distribution,
                                   joint_maxmin_oracle, joint_strategy, simplex_grid, team_value)
from teamcfr.errors import ContractViolation, SizeCapExceeded
from teamcfr.verify import random_profile

nonneg = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=5).map(np.array)
profiles = st.lists(nonneg, min_size=1, max_size=4)


def test_compose_examples():
    assert compose_joint_regret([[2, 1], [3, 1]]).tolist() == [[6, 2], [3, 1]]
    assert not compose_joint_regret([[2, 1], [0, 0], [1, 4]]).any()


def test_two_by_two_composition():
    # the four products reproduce the given joint regrets exactly
    r_tot = np.array([[6, 2], [3, 1]])
    r1, r2 = [2, 1], [3, 1]
    for a, b in itertools.product(range(2), repeat=2):
        assert r_tot[a, b] == r1[a] * r2[b]


def test_joint_strategy_examples():
    assert np.allclose(joint_strategy([[6, 2], [3, 1]]), [[0.5, 1 / 6], [0.25, 1 / 12]], atol=1e-15)
    assert np.allclose(joint_strategy(np.zeros((2, 2))), 0.25)
    assert joint_strategy([[3.0]]).tolist() == [[1.0]]


def test_consistency_worked_example():
    assert check_strategy_consistency([[2, 1], [3, 1]]) <= 1e-15
    s1, s2 = individual_strategies([[2, 1], [3, 1]])
    assert s1[0] * s2[0] == pytest.approx(0.5, abs=1e-15)


def test_consistency_all_zero_and_mixed_zero():
    assert check_strategy_consistency([np.zeros(2), np.zeros(3)]) == 0.0
    assert check_strategy_consistency([np.zeros(2), np.array([1.0, 3.0])]) <= 1e-15


def test_negative_regrets_rejected():
    with pytest.raises(ContractViolation):
        compose_joint_regret([[1, -1], [1, 1]])
    with pytest.raises(ContractViolation):
        compose_joint_regret([])


@settings(max_examples=300, deadline=None)
@given(profiles)
def test_consistency_property(profile):
    assert check_strategy_consistency(profile) <= 1e-12


def test_consistency_survives_underflow():
    tiny = [np.array([0.0, 5e-244]), np.array([5e-244])]
    assert check_strategy_consistency(tiny) <= 1e-12


# the raw joint tensor is a float product; keep entries where it cannot underflow
moderate = st.lists(st.one_of(st.just(0.0), st.floats(1e-50, 1e3)), min_size=1, max_size=5).map(np.array)


@settings(max_examples=200, deadline=None)
@given(st.lists(moderate, min_size=1, max_size=4), st.integers(0, 3), st.floats(1e-3, 1e3))
def test_scale_invariance_per_agent(profile, idx, c):
    idx %= len(profile)
    scaled = [p * c if i == idx else p for i, p in enumerate(profile)]
    a = joint_strategy(compose_joint_regret(profile))
    b = joint_strategy(compose_joint_regret(scaled))
    assert np.max(np.abs(a - b)) <= 1e-12
    assert abs(check_strategy_consistency(scaled) - check_strategy_consistency(profile)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(0, 50), min_size=1, max_size=5), min_size=1, max_size=4))
def test_sum_identity_exact_on_integers(profile):
    # sum over joint actions equals the product of per-agent sums (exact integer arithmetic)
    tensor = compose_joint_regret(profile)
    expected = 1
    for v in profile:
        expected *= sum(v)
    assert Fraction(int(tensor.sum())) == expected


def test_random_profile_generator_covers_cases():
    rng = np.random.default_rng(0)
    profs = [random_profile(rng) for _ in range(500)]
    assert {len(p) for p in profs} == {2, 3, 4}
    assert max(len(v) for p in profs for v in p) == 5
    assert any(not v.any() for p in profs for v in p)


def test_undecomposable_strategy_is_not_product():
    sigma = np.array([[0.5, 0.0], [0.0, 0.5]])
    assert not is_product_distribution(sigma)
    # and no grid product strategy comes close
    grid = simplex_grid(2, 0.01)
    best = min(np.abs(np.outer(p, q) - sigma).max() for p in grid for q in grid)
    assert best >= 0.25 - 1e-12
    assert is_product_distribution(np.outer([0.2, 0.8], [0.6, 0.4]))


def test_fit_product_form_recovers_rank_one():
    rng = np.random.default_rng(0)
    for _ in range(20):
        factors = [rng.uniform(0, 2, size=k) for k in (2, 3, 2)]
        target = compose_joint_regret(factors)
        fitted = fit_product_form(target, sweeps=20)
        assert np.allclose(compose_joint_regret(fitted), target, atol=1e-9)
    assert all(not f.any() for f in fit_product_form(np.zeros((2, 3))))


def test_simplex_grid():
    g = simplex_grid(3, 0.5)
    assert len(g) == 6 and np.allclose(g.sum(axis=1), 1)
    assert grid_size((3,), 0.5) == 6
    assert grid_size((2, 2), 0.01) == 101 * 101
    with pytest.raises(ContractViolation):
        simplex_grid(2, 0.3)


def test_maxmin_matching_pennies():
    payoff = np.array([[1.0, -1.0], [-1.0, 1.0]])
    strategies, value = decomposable_maxmin_oracle(payoff)
    assert value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(strategies[0], [0.5, 0.5])
    joint, jvalue = joint_maxmin_oracle(payoff)
    assert jvalue == pytest.approx(0.0, abs=1e-9)


def test_maxmin_identity_has_pure_solution():
    # team coordinates on (0, 0) which pays 1 whatever the adversary does
    payoff = np.zeros((2, 2, 2))
    payoff[0, 0, :] = 1.0
    strategies, value = decomposable_maxmin_oracle(payoff)
    assert value == pytest.approx(1.0)
    assert strategies[0][0] == 1.0 and strategies[1][0] == 1.0


def brute_force_product_maxmin(payoff, res):
    """Independent oracle: double loop over two-agent grids, adversary best response by min."""
    grid = np.linspace(0, 1, int(round(1 / res)) + 1)
    best = -np.inf
    for p in grid:
        for q in grid:
            joint = np.outer([p, 1 - p], [q, 1 - q])
            best = max(best, min(float((joint * payoff[:, :, b]).sum()) for b in range(payoff.shape[2])))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_grid_oracle_matches_brute_force_and_bounds(seed):
    rng = np.random.default_rng(seed)
    payoff = rng.uniform(-1, 1, size=(2, 2, 2))
    _, coarse = decomposable_maxmin_oracle(payoff, resolution=0.05, refine=False)
    assert coarse == pytest.approx(brute_force_product_maxmin(payoff, 0.05), abs=1e-12)
    strategies, value = decomposable_maxmin_oracle(payoff, resolution=0.01)
    assert value >= coarse - 1e-12
    assert value == pytest.approx(team_value(payoff, strategies), abs=1e-12)
    _, joint_value = joint_maxmin_oracle(payoff)
    assert value <= joint_value + 1e-9


def test_joint_oracle_against_enumeration_of_adversary():
    rng = np.random.default_rng(1)
    payoff = rng.uniform(-1, 1, size=(2, 3, 3))
    joint, value = joint_maxmin_oracle(payoff)
    assert joint.shape == (2, 3) and abs(joint.sum() - 1) <= 1e-9 and (joint >= 0).all()
    per_b = [(joint * payoff[..., b]).sum() for b in range(3)]
    assert min(per_b) == pytest.approx(value, abs=1e-9)


def test_oracle_budget():
    with pytest.raises(SizeCapExceeded):
        decomposable_maxmin_oracle(np.zeros((3, 3, 3, 2)), resolution=0.01, budget=10_000)
