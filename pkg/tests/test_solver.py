"""Solver loop: aggregation, tabular parity, sampling law in play, budgets and determinism."""

import itertools

import numpy as np
import pytest
from scipy import stats

from teamcfr.errors import ConfigError, ContractViolation
from teamcfr.game import JointAction
from teamcfr.games import GoofspielSpec, TinyMatrixSpec, goofspiel_game, tiny_matrix_game
from teamcfr.neural import TrainConfig
from teamcfr.regret import RegretTable
from teamcfr.sampling import RegretRecord, StrategyRecord, TableSource
from teamcfr.solver import (NeuralCFR, SolverConfig, UniformSource, aggregate_regrets, aggregate_strategies,
                            sample_play, solve, source_policy, team_traverse_step)
from teamcfr.tabular import ProbeMCCFR, exploitability
from teamcfr.tree import GameTree, product_joint

SMALL_TRAIN = TrainConfig(steps=150, batch_size=64, lr=1e-2, optimizer="adam")


def tiny(seed=0, shape=(2, 2, 2)):
    return tiny_matrix_game(TinyMatrixSpec(np.random.default_rng(seed).uniform(-1, 1, size=shape)))


def test_config_validation():
    for bad in ({"mode": "qmix"}, {"iterations": 0}, {"probes": 0}, {"target_scale": "max"},
                {"regret_window": "last"}):
        with pytest.raises(ConfigError):
            SolverConfig(**bad)


def test_aggregate_regrets_sums_per_key_and_action():
    recs = [RegretRecord("a", 1, (0, 1), np.array([1.0, -2.0])),
            RegretRecord("b", 1, (3,), np.array([0.5])),
            RegretRecord("a", 1, (1, 0), np.array([4.0, 1.0]))]
    out = aggregate_regrets(recs)
    assert [r.key for r in out] == ["a", "b"]
    assert out[0].actions == (0, 1) and out[0].values.tolist() == [2.0, 2.0]
    assert aggregate_regrets(recs, 0.5)[0].values.tolist() == [1.0, 1.0]


def test_aggregate_strategies_per_agent():
    recs = [StrategyRecord("k", 1, ((0, 1), (0, 1)), (np.array([0.5, 0.5]), np.array([1.0, 0.0]))),
            StrategyRecord("k", 1, ((0, 1), (0, 1)), (np.array([0.0, 1.0]), np.array([1.0, 0.0])))]
    (out,) = aggregate_strategies(recs)
    assert out.values[0].tolist() == [0.5, 1.5] and out.values[1].tolist() == [2.0, 0.0]


def test_tabular_mode_matches_probe_mccfr():
    game = tiny(1, (2, 3, 2))
    cfg = SolverConfig(iterations=20, traversals=5, mode="tabular", seed=3)
    result = solve(game, cfg)
    ref = ProbeMCCFR(game, traversals=5, seed=3)
    for _ in range(20):
        ref.iterate()
    ours = result.solver.inner.tables()
    for name, table in ref.tables().items():
        assert set(table) == set(ours[name])
        for key in table:
            assert np.array_equal(table[key], ours[name][key])


def test_mix_and_joint_sources_share_the_sampling_law():
    # a joint table equal to the product of agent regrets gives the same play distribution
    game = tiny(2, (2, 3, 2))
    root = game.initial_state()
    key, legal = root.infoset_key(), root.legal_actions()
    r0, r1 = np.array([1.0, 2.0]), np.array([0.5, 0.0, 1.5])
    mix = TableSource(RegretTable(), RegretTable({(key, 0): r0, (key, 1): r1}), "mix")
    joint = TableSource(RegretTable(), RegretTable({key: product_joint([r0, r1])}), "joint")
    joints = [JointAction(j) for j in itertools.product(*legal)]
    n = 20_000
    table = np.zeros((2, len(joints)))
    for row, source in enumerate((mix, joint)):
        rng = np.random.default_rng(row)
        for _ in range(n):
            table[row, joints.index(sample_play(source, root, rng))] += 1
    used = table.sum(axis=0) > 0
    assert stats.chi2_contingency(table[:, used]).pvalue > 0.001
    assert np.allclose(source_policy(mix)(GameTree(game).infosets[0]), product_joint([r0 / 3, r1 / 2]))


def test_uniform_source():
    src = UniformSource()
    assert np.allclose(src.team_joint(None, [(0, 1), (0, 1, 2)]), 1 / 6)
    assert np.allclose(src.adversary(None, [4, 5]), 0.5)


def test_traverse_step_requires_team_node():
    game = tiny()
    root = game.initial_state()
    value, tr = team_traverse_step(root, UniformSource(), np.random.default_rng(0), 1)
    assert len(tr.regret_records) == 1
    with pytest.raises(ContractViolation):
        team_traverse_step(root.apply(root.joint_actions()[0]), UniformSource(), np.random.default_rng(0), 1)


@pytest.mark.parametrize("mode", ["mix", "joint"])
def test_neural_solver_improves_on_uniform(mode):
    payoff = np.zeros((2, 2, 2))
    payoff[0, 0, :] = 1.0     # team must coordinate on (0, 0)
    payoff[1, 1, 0] = 0.5
    game = tiny_matrix_game(TinyMatrixSpec(payoff))
    tree = GameTree(game)
    cfg = SolverConfig(iterations=15, traversals=20, mode=mode, seed=0, hidden=(16, 16), train=SMALL_TRAIN)
    result = solve(game, cfg)
    before = exploitability(tree, source_policy(UniformSource()))
    after = exploitability(tree, source_policy(result.average_source()))
    assert after < before
    assert isinstance(result.solver, NeuralCFR)
    its, losses = result.report.series("loss_regret")
    assert len(its) == 15 and np.isfinite(losses).all()


def test_wall_budget_stops_gracefully():
    ticks = iter(range(100))
    cfg = SolverConfig(iterations=50, traversals=2, mode="tabular", wall_budget=2.5)
    result = solve(tiny(), cfg, evaluate=lambda t, s: {"probe": float(t)}, clock=lambda: float(next(ticks)))
    assert result.stopped_early and result.report.stopped_early
    assert result.iterations == 3
    assert result.report.series("probe")[0].tolist() == [1, 2, 3]


def test_checkpoints_written(tmp_path):
    cfg = SolverConfig(iterations=4, traversals=3, mode="mix", hidden=(8,), train=SMALL_TRAIN,
                       checkpoint_every=2, checkpoint_dir=str(tmp_path))
    solve(goofspiel_game(GoofspielSpec(3, 2, 2)), cfg)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["iter_000002.ckpt", "iter_000004.ckpt"]
    assert (tmp_path / files[0]).read_bytes()[:5] == b"TNET1"


@pytest.mark.parametrize("mode", ["mix", "joint", "tabular"])
def test_solve_is_deterministic(mode):
    game = goofspiel_game(GoofspielSpec(3, 2, 2))
    cfg = SolverConfig(iterations=3, traversals=4, mode=mode, seed=5, hidden=(8,), train=SMALL_TRAIN)
    a = solve(game, cfg, clock=lambda: 0.0).report.rows
    b = solve(game, cfg, clock=lambda: 0.0).report.rows
    assert a == b
    c = solve(game, SolverConfig(iterations=3, traversals=4, mode=mode, seed=6, hidden=(8,), train=SMALL_TRAIN),
              clock=lambda: 0.0).report.rows
    if mode != "tabular":
        assert a != c
