"""Probe-sampling game-tree traversal.

:class:`ProbeTraverser` walks one sampled path for the updating player.  At
that player's decisions one action is chosen uniformly and followed, every
other action is valued by a single on-policy rollout (:meth:`probe`), and the
instantaneous regrets are emitted as a :class:`RegretRecord`.  At the other
player's decisions the current strategy is emitted as a
:class:`StrategyRecord` and one action is sampled from it.

At team decisions the candidate set of joint actions is capped at
``probe_threshold``: the followed joint action plus uniformly drawn distinct
others.  Regrets are computed against the team strategy renormalised over the
candidate set.
"""

from __future__ import annotations

import itertools
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from teamcfr.game import Game, GameState, InfoSetKey, JointAction, Player
from teamcfr.regret import RegretTable, regret_matching
from teamcfr.tree import product_joint


@dataclass
class RegretRecord:
    key: InfoSetKey
    iteration: int
    actions: tuple          # adversary action ids, or JointActions for the team
    values: np.ndarray
    legal: tuple | None = None  # per-agent legal actions at team infosets


@dataclass
class StrategyRecord:
    key: InfoSetKey
    iteration: int
    actions: tuple          # flat actions, or per-agent action tuples (mix team)
    values: object          # probability vector, or tuple of per-agent vectors


class StrategySource(Protocol):
    """Current strategies read by the traverser."""

    team_mode: str  # "mix" or "joint"

    def adversary(self, key: InfoSetKey, legal: Sequence[int]) -> np.ndarray: ...

    def team_agents(self, key: InfoSetKey, legal: Sequence[Sequence[int]]) -> list[np.ndarray]: ...

    def team_joint(self, key: InfoSetKey, legal: Sequence[Sequence[int]]) -> np.ndarray: ...


class TableSource:
    """Regret-matching strategies read from regret tables.

    Team tables are keyed by ``InfoSetKey`` over joint actions in joint mode
    and by ``(InfoSetKey, agent)`` in mix mode.
    """

    def __init__(self, adversary: RegretTable, team: RegretTable, team_mode: str = "joint"):
        self.adversary_table = adversary
        self.team_table = team
        self.team_mode = team_mode

    def adversary(self, key, legal):
        return regret_matching(_vector(self.adversary_table, key, len(legal)))

    def team_agents(self, key, legal):
        if self.team_mode == "joint":
            joint = self.team_joint(key, legal).reshape([len(a) for a in legal])
            axes = range(joint.ndim)
            return [joint.sum(axis=tuple(j for j in axes if j != i)) for i in axes]
        return [regret_matching(_vector(self.team_table, (key, i), len(a))) for i, a in enumerate(legal)]

    def team_joint(self, key, legal):
        if self.team_mode == "mix":
            return product_joint(self.team_agents(key, legal))
        return regret_matching(_vector(self.team_table, key, math.prod(len(a) for a in legal)))


def _vector(table: dict, key, n: int) -> np.ndarray:
    vec = table.get(key)
    return np.zeros(n) if vec is None else vec


def sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u * probs.sum(), side="right"))
    return min(idx, len(probs) - 1)


class ProbeTraverser:
    def __init__(self, source: StrategySource, rng: np.random.Generator, iteration: int,
                 probe_threshold: int = 64, probes: int = 1, track_visits: bool = False):
        if probe_threshold < 1 or probes < 1:
            raise ValueError("probe_threshold and probes must be >= 1")
        self.source = source
        self.rng = rng
        self.t = iteration
        self.m = probe_threshold
        self.n_probes = probes
        self.regret_records: list[RegretRecord] = []
        self.strategy_records: list[StrategyRecord] = []
        self.probe_calls = 0
        self.visits: Counter | None = Counter() if track_visits else None

    # -- Algorithm: TRAVERSE ----------------------------------------------

    def traverse(self, state: GameState, p: Player) -> float:
        """Sampled value of ``state`` for updating player ``p``."""
        if self.visits is not None:
            self.visits[_history_id(state)] += 1
        if state.is_terminal():
            return state.utility(p)
        player = state.player
        if player == Player.CHANCE:
            return self.traverse(state.apply(state.sample_chance(self.rng)), p)
        key = state.infoset_key()
        if player == p:
            if p == Player.TEAM:
                return self._team_update(state, key)
            return self._adversary_update(state, key)
        action = self._record_and_sample(state, key)
        return self.traverse(state.apply(action), p)

    def _adversary_update(self, state: GameState, key: InfoSetKey) -> float:
        legal = state.legal_actions()
        sigma = self.source.adversary(key, legal)
        star = int(self.rng.integers(len(legal)))
        values = np.empty(len(legal))
        for i, a in enumerate(legal):
            child = state.apply(a)
            values[i] = self.traverse(child, Player.ADVERSARY) if i == star else self.probe(child, Player.ADVERSARY)
        u_sigma = float(sigma @ values)
        self.regret_records.append(RegretRecord(key, self.t, tuple(legal), values - u_sigma))
        return u_sigma

    def _team_update(self, state: GameState, key: InfoSetKey) -> float:
        legal = state.legal_actions()
        sizes = [len(a) for a in legal]
        star = tuple(int(self.rng.integers(k)) for k in sizes)
        candidates = self.candidate_set(sizes, star)
        probs = self._team_probs(key, legal, sizes, candidates)
        total = probs.sum()
        probs = probs / total if total > 0 else np.full(len(candidates), 1.0 / len(candidates))
        values = np.empty(len(candidates))
        joints = []
        for j, idx in enumerate(candidates):
            joint = JointAction(legal[i][k] for i, k in enumerate(idx))
            joints.append(joint)
            child = state.apply(joint)
            values[j] = self.traverse(child, Player.TEAM) if idx == star else self.probe(child, Player.TEAM)
        u_sigma = float(probs @ values)
        self.regret_records.append(RegretRecord(key, self.t, tuple(joints), values - u_sigma, legal))
        return u_sigma

    def candidate_set(self, sizes: Sequence[int], star: tuple[int, ...]) -> list[tuple[int, ...]]:
        """All joint index tuples if there are at most ``m``, else ``star`` plus m-1 distinct draws."""
        n_joint = math.prod(sizes)
        if n_joint <= self.m:
            return list(itertools.product(*(range(k) for k in sizes)))
        chosen = [star]
        seen = {star}
        while len(chosen) < self.m:
            idx = tuple(int(self.rng.integers(k)) for k in sizes)
            if idx not in seen:
                seen.add(idx)
                chosen.append(idx)
        return chosen

    def _team_probs(self, key, legal, sizes, candidates) -> np.ndarray:
        if self.source.team_mode == "mix":
            agent = self.source.team_agents(key, legal)
            return np.array([math.prod(agent[i][k] for i, k in enumerate(idx)) for idx in candidates])
        joint = self.source.team_joint(key, legal)
        flat = np.ravel_multi_index(np.array(candidates).T, sizes)
        return joint[flat]

    def _record_and_sample(self, state: GameState, key: InfoSetKey):
        legal = state.legal_actions()
        if state.player == Player.ADVERSARY:
            sigma = self.source.adversary(key, legal)
            self.strategy_records.append(StrategyRecord(key, self.t, tuple(legal), sigma))
            return legal[sample_index(self.rng, sigma)]
        if self.source.team_mode == "mix":
            agents = self.source.team_agents(key, legal)
            self.strategy_records.append(StrategyRecord(key, self.t, tuple(legal), tuple(agents)))
            return JointAction(a[sample_index(self.rng, s)] for a, s in zip(legal, agents))
        joint = self.source.team_joint(key, legal)
        self.strategy_records.append(StrategyRecord(key, self.t, tuple(legal), joint))
        return _joint_from_flat(legal, sample_index(self.rng, joint))

    # -- Algorithm: PROBE ---------------------------------------------------

    def probe(self, state: GameState, p: Player) -> float:
        """Mean terminal utility of ``probes`` on-policy rollouts from ``state``."""
        total = 0.0
        for _ in range(self.n_probes):
            self.probe_calls += 1
            total += self._rollout(state, p)
        return total / self.n_probes

    def _rollout(self, state: GameState, p: Player) -> float:
        rng = self.rng
        while not state.is_terminal():
            player = state.player
            if player == Player.CHANCE:
                action = state.sample_chance(rng)
            else:
                key = state.infoset_key()
                legal = state.legal_actions()
                if player == Player.ADVERSARY:
                    action = legal[sample_index(rng, self.source.adversary(key, legal))]
                elif self.source.team_mode == "mix":
                    agents = self.source.team_agents(key, legal)
                    action = JointAction(a[sample_index(rng, s)] for a, s in zip(legal, agents))
                else:
                    action = _joint_from_flat(legal, sample_index(rng, self.source.team_joint(key, legal)))
            state = state.apply(action)
        return state.utility(p)


def _joint_from_flat(legal, flat: int) -> JointAction:
    idx = np.unravel_index(flat, [len(a) for a in legal])
    return JointAction(legal[i][k] for i, k in enumerate(idx))


def _history_id(state: GameState) -> str:
    return repr(state.history)


def traversal_rng(seed: int, iteration: int, k: int) -> np.random.Generator:
    """Independent stream per (iteration, traversal); invariant to worker count."""
    return np.random.default_rng(np.random.SeedSequence([seed, iteration, k]))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TEAMCFR_THREADS", "1")))
    except ValueError:
        return 1


def run_traversals(game: Game, source: StrategySource, iteration: int, traversals: int, seed: int,
                   probe_threshold: int = 64, probes: int = 1, workers: int | None = None):
    """Run ``traversals`` (adversary pass, then team pass) and merge the records.

    Returns ``(adv_regrets, team_regrets, adv_strategies, team_strategies)``.
    Output is identical for any worker count because each traversal owns its
    RNG stream and results are merged in traversal order.
    """
    workers = workers or worker_count()

    def one(k: int):
        tr = ProbeTraverser(source, traversal_rng(seed, iteration, k), iteration, probe_threshold, probes)
        tr.traverse(game.initial_state(), Player.ADVERSARY)
        adv_reg, team_strat = tr.regret_records, tr.strategy_records
        tr.regret_records, tr.strategy_records = [], []
        tr.traverse(game.initial_state(), Player.TEAM)
        return adv_reg, tr.regret_records, tr.strategy_records, team_strat

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(traversals)))
    else:
        results = [one(k) for k in range(traversals)]
    merged: tuple[list, list, list, list] = ([], [], [], [])
    for res in results:
        for bucket, recs in zip(merged, res):
            bucket.extend(recs)
    return merged
