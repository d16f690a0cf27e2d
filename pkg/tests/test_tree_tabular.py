"""Enumerated trees, exact best responses and the tabular solvers."""

import itertools
import math

import numpy as np
import pytest

from teamcfr.errors import ContractViolation, SizeCapExceeded
from teamcfr.game import Player
from teamcfr.games import GoofspielSpec, NestSpec, TinyMatrixSpec, goofspiel_game, nest_game, tiny_matrix_game
from teamcfr.tabular import ProbeMCCFR, SolveReport, TabularCFR, exploitability, team_worst_case
from teamcfr.tree import GameTree, estimate_size, product_joint

PENNIES = np.array([[1.0, -1.0], [-1.0, 1.0]])


def small_games():
    rng = np.random.default_rng(5)
    return [
        tiny_matrix_game(TinyMatrixSpec(PENNIES)),
        tiny_matrix_game(TinyMatrixSpec(rng.uniform(-1, 1, size=(2, 3, 2)))),
        goofspiel_game(GoofspielSpec(3, 1, 3, "descending")),
        goofspiel_game(GoofspielSpec(3, 2, 2, "shuffled")),
        goofspiel_game(GoofspielSpec(2, 2, 2, "shuffled")),
    ]


def recursive_value(tree, state, profile):
    """Independent oracle: expectation by recursion over game states, strategies looked up by key."""
    if state.is_terminal():
        return state.utility()
    if state.player == Player.CHANCE:
        return sum(p * recursive_value(tree, state.apply(a), profile) for a, p in state.chance_outcomes())
    info = tree.infosets[tree.index[state.infoset_key()]]
    probs = profile[info.slot: info.slot + info.n_actions]
    return sum(p * recursive_value(tree, state.apply(a), profile) for a, p in zip(info.actions, probs) if p > 0)


def random_profile(tree, rng):
    out = np.empty(tree.n_slots)
    for info in tree.infosets:
        out[info.slot: info.slot + info.n_actions] = rng.dirichlet(np.ones(info.n_actions))
    return out


def pure_strategies(tree, player):
    infos = [tree.infosets[i] for i in tree.infosets_of(player)]
    for choice in itertools.product(*(range(i.n_actions) for i in infos)):
        yield [(info, c) for info, c in zip(infos, choice)]


@pytest.mark.parametrize("game", small_games(), ids=lambda g: g.name)
def test_values_match_recursive_oracle(game):
    tree = GameTree(game)
    rng = np.random.default_rng(0)
    for _ in range(3):
        profile = random_profile(tree, rng)
        assert tree.game_value(profile) == pytest.approx(recursive_value(tree, game.initial_state(), profile),
                                                         abs=1e-12)


@pytest.mark.parametrize("game", small_games(), ids=lambda g: g.name)
@pytest.mark.parametrize("responder", [Player.ADVERSARY, Player.TEAM])
def test_best_response_matches_pure_strategy_enumeration(game, responder):
    tree = GameTree(game)
    n_pure = math.prod([tree.infosets[i].n_actions for i in tree.infosets_of(responder)])
    if n_pure > 20_000:
        pytest.skip("too many pure strategies to enumerate")
    rng = np.random.default_rng(1)
    profile = random_profile(tree, rng)
    sign = 1.0 if responder == Player.TEAM else -1.0
    best = -np.inf
    for pure in pure_strategies(tree, responder):
        trial = profile.copy()
        for info, c in pure:
            trial[info.slot: info.slot + info.n_actions] = 0.0
            trial[info.slot + c] = 1.0
        best = max(best, sign * tree.game_value(trial))
    br, value = tree.best_response(profile, responder)
    assert value == pytest.approx(best, abs=1e-12)
    assert sign * tree.game_value(br) == pytest.approx(best, abs=1e-12)


def test_exploitability_nonnegative_and_zero_at_equilibrium():
    tree = GameTree(tiny_matrix_game(TinyMatrixSpec(PENNIES)))
    assert tree.exploitability(tree.uniform_profile()) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(10):
        assert tree.exploitability(random_profile(tree, rng)) >= -1e-12


def test_tree_cap_and_estimate():
    game = goofspiel_game(GoofspielSpec(3, 1, 3, "descending"))
    tree = GameTree(game)
    with pytest.raises(SizeCapExceeded):
        GameTree(game, cap=10)
    assert estimate_size(game, samples=50) == pytest.approx(tree.n_nodes, rel=1e-9)


def test_product_joint_order():
    out = product_joint([np.array([0.2, 0.8]), np.array([0.5, 0.25, 0.25])])
    expected = [a * b for a, b in itertools.product([0.2, 0.8], [0.5, 0.25, 0.25])]
    assert np.allclose(out, expected, atol=0)


def test_cfr_matching_pennies_converges():
    solver = TabularCFR(tiny_matrix_game(TinyMatrixSpec(PENNIES)))
    solver.run(1000)
    assert solver.exploitability() <= 0.01


def test_cfr_three_card_goofspiel_value_zero():
    game = goofspiel_game(GoofspielSpec(3, 1, 3, "descending"))
    solver = TabularCFR(game)
    report = solver.run(2000, eval_every=500)
    assert solver.exploitability() <= 0.01
    # symmetric game: value of the average profile is zero
    tree = solver.tree
    assert abs(tree.game_value(solver.average_profile())) <= 0.01
    _, vals = report.series("exploitability")
    assert len(vals) >= 4


def test_cfr_mix_mode_on_product_solvable_game():
    # identity-coordination game has a pure product optimum
    payoff = np.zeros((2, 2, 2))
    payoff[0, 0, :] = 1.0
    solver = TabularCFR(tiny_matrix_game(TinyMatrixSpec(payoff)), team_mode="mix")
    solver.run(300)
    tree = solver.tree
    assert team_worst_case(tree, solver.average_profile()) >= 0.95
    assert exploitability(tree, solver.average_profile()) <= 0.05


def test_invalid_team_mode():
    with pytest.raises(ContractViolation):
        TabularCFR(tiny_matrix_game(TinyMatrixSpec(PENNIES)), team_mode="qmix")


def test_solve_report_order():
    report = SolveReport()
    report.add(2, 0.0, "x", 1.0)
    with pytest.raises(ContractViolation):
        report.add(1, 0.0, "x", 1.0)


def test_probe_mccfr_converges_on_pennies():
    game = tiny_matrix_game(TinyMatrixSpec(PENNIES))
    solver = ProbeMCCFR(game, traversals=10, seed=0)
    for _ in range(500):
        solver.iterate()
    tree = GameTree(game)
    assert exploitability(tree, solver.average_policy()) <= 0.05


def test_probe_mccfr_mix_mode_on_small_nest():
    game = nest_game(NestSpec(2, 2, 1, exits=(3,), step_limit=2))
    solver = ProbeMCCFR(game, team_mode="mix", traversals=20, seed=0)
    tree = GameTree(game)
    start = exploitability(tree, solver.average_policy())
    for _ in range(100):
        solver.iterate()
    assert exploitability(tree, solver.average_policy()) < start
    assert set(solver.tables()) == {"adversary_regret", "team_regret", "adversary_average", "team_average"}
