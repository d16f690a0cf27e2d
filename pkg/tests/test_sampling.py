"""Probe-sampling traversals: candidate sets, probe counts, sampling law and determinism."""

import itertools

import numpy as np
import pytest
from scipy import stats

from teamcfr.game import JointAction, Player
from teamcfr.games import GoofspielSpec, NestSpec, TinyMatrixSpec, goofspiel_game, nest_game, tiny_matrix_game
from teamcfr.regret import RegretTable, regret_matching
from teamcfr.sampling import ProbeTraverser, TableSource, run_traversals, sample_index, traversal_rng
from teamcfr.tree import product_joint
from teamcfr.verify import probe_bias_suite


def empty_source(mode="joint"):
    return TableSource(RegretTable(), RegretTable(), mode)


def test_six_agents_ten_actions_cap_at_64_evaluations():
    # one round of 10-card bidding with six team players: 10^6 joint actions, no chance node
    game = goofspiel_game(GoofspielSpec(10, 6, 1, "descending"))
    root = game.initial_state()
    assert root.player == Player.TEAM
    tr = ProbeTraverser(empty_source("mix"), traversal_rng(0, 1, 0), 1, probe_threshold=64)
    tr.traverse(root, Player.TEAM)
    (rec,) = tr.regret_records
    assert len(rec.actions) == 64
    assert len(set(rec.actions)) == 64
    assert tr.probe_calls == 63  # one traversal plus 63 probes
    for joint in rec.actions:
        assert len(joint) == 6 and all(a in range(10) for a in joint)


def test_small_joint_space_is_enumerated():
    payoff = np.random.default_rng(0).uniform(-1, 1, size=(2, 3, 2))
    game = tiny_matrix_game(TinyMatrixSpec(payoff))
    tr = ProbeTraverser(empty_source(), traversal_rng(0, 1, 0), 1, probe_threshold=64)
    tr.traverse(game.initial_state(), Player.TEAM)
    (rec,) = tr.regret_records
    assert list(rec.actions) == [JointAction(j) for j in itertools.product(*game.initial_state().legal_actions())]
    assert tr.probe_calls == 5


def test_candidate_set_without_cap_and_with_cap():
    tr = ProbeTraverser(empty_source(), np.random.default_rng(3), 1, probe_threshold=4)
    assert tr.candidate_set([2, 2], (1, 0)) == list(itertools.product(range(2), range(2)))
    chosen = tr.candidate_set([3, 3], (2, 1))
    assert chosen[0] == (2, 1) and len(set(chosen)) == 4


def test_single_action_node():
    game = tiny_matrix_game(TinyMatrixSpec(np.array([[[0.3, -0.7]]])))
    tr = ProbeTraverser(empty_source(), traversal_rng(0, 1, 0), 1)
    value = tr.traverse(game.initial_state(), Player.TEAM)
    (rec,) = tr.regret_records
    assert rec.values.tolist() == [0.0]
    assert tr.probe_calls == 0
    assert value in (0.3, -0.7)


def test_probe_count_scales_with_probes():
    payoff = np.random.default_rng(0).uniform(-1, 1, size=(2, 2, 3))
    game = tiny_matrix_game(TinyMatrixSpec(payoff))
    tr = ProbeTraverser(empty_source(), traversal_rng(0, 1, 0), 1, probes=5)
    tr.traverse(game.initial_state(), Player.TEAM)
    assert tr.probe_calls == 3 * 5
    with pytest.raises(ValueError):
        ProbeTraverser(empty_source(), traversal_rng(0, 1, 0), 1, probes=0)


def test_unbiased_regret_estimates():
    check = probe_bias_suite(traversals=20_000, seed=1)
    assert check.passed, check.line()


def test_mix_team_samples_agents_independently():
    rng = np.random.default_rng(4)
    payoff = rng.uniform(-1, 1, size=(2, 3, 2))
    game = tiny_matrix_game(TinyMatrixSpec(payoff))
    root = game.initial_state()
    key = root.infoset_key()
    team = RegretTable({(key, 0): np.array([1.0, 3.0]), (key, 1): np.array([2.0, 0.0, 6.0])})
    source = TableSource(RegretTable(), team, "mix")
    expected = product_joint([regret_matching(team[(key, 0)]), regret_matching(team[(key, 1)])])
    joints = list(itertools.product(*root.legal_actions()))
    counts = np.zeros(len(joints))
    n = 20_000
    tr = ProbeTraverser(source, np.random.default_rng(5), 1, track_visits=True)
    for _ in range(n):
        tr.traverse(root, Player.ADVERSARY)
    for j, joint in enumerate(joints):
        counts[j] = tr.visits.get(repr((JointAction(joint),)), 0)
    assert counts.sum() == n
    keep = expected > 0
    assert counts[~keep].sum() == 0
    assert stats.chisquare(counts[keep], expected[keep] * n).pvalue > 0.001


def test_sample_index_law():
    rng = np.random.default_rng(0)
    p = np.array([0.1, 0.0, 0.6, 0.3])
    counts = np.bincount([sample_index(rng, p) for _ in range(20_000)], minlength=4)
    assert counts[1] == 0
    assert stats.chisquare(counts[[0, 2, 3]], p[[0, 2, 3]] * 20_000).pvalue > 0.001


def test_joint_table_marginals():
    game = tiny_matrix_game(TinyMatrixSpec(np.zeros((2, 2, 2))))
    root = game.initial_state()
    key, legal = root.infoset_key(), root.legal_actions()
    source = TableSource(RegretTable(), RegretTable({key: np.array([1.0, 0.0, 0.0, 3.0])}), "joint")
    assert np.allclose(source.team_joint(key, legal), [0.25, 0, 0, 0.75])
    marg = source.team_agents(key, legal)
    assert np.allclose(marg[0], [0.25, 0.75]) and np.allclose(marg[1], [0.25, 0.75])


def records_signature(out):
    sig = []
    for bucket in out:
        for rec in bucket:
            vals = rec.values if isinstance(rec.values, np.ndarray) else np.concatenate(rec.values)
            sig.append((repr(rec.key), rec.iteration, repr(rec.actions), vals.tobytes()))
    return sig


@pytest.mark.parametrize("game", [
    nest_game(NestSpec(3, 3, 2)),
    goofspiel_game(GoofspielSpec(4, 2, 2)),
], ids=lambda g: g.name)
def test_worker_count_invariance(game):
    source = empty_source("mix")
    one = run_traversals(game, source, 3, 12, seed=7, workers=1)
    four = run_traversals(game, source, 3, 12, seed=7, workers=4)
    assert records_signature(one) == records_signature(four)
    again = run_traversals(game, source, 3, 12, seed=7, workers=1)
    assert records_signature(one) == records_signature(again)
    other = run_traversals(game, source, 3, 12, seed=8, workers=1)
    assert records_signature(one) != records_signature(other)
