"""Tabular baselines and exact oracles.

* :class:`TabularCFR` -- full-traversal CFR+ with alternating updates on an
  enumerated tree.  The team is one player over joint actions (``"joint"``) or
  keeps per-agent regret tables (``"mix"``) that are refit to the product form
  after every update.
* :class:`ProbeMCCFR` -- tabular probe-sampling Monte Carlo CFR on the lazy
  game states, the table counterpart of the neural solver.
* :func:`best_response` / :func:`exploitability` -- exact, via the tree.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from teamcfr.decomposition import fit_product_form
from teamcfr.errors import ContractViolation
from teamcfr.game import Game, InfoSetKey, Player
from teamcfr.regret import (AverageStrategyAccumulator, RegretTable, StrategyTable, accumulate_plus,
                            average_strategy, regret_matching)
from teamcfr.sampling import ProbeTraverser, TableSource, run_traversals
from teamcfr.tree import DEFAULT_CAP, GameTree, InfoSet, product_joint

TEAM_MODES = ("joint", "mix")


@dataclass
class SolveReport:
    """Metric rows ``(iteration, seconds, metric, value)`` plus final strategies."""

    rows: list[tuple[int, float, str, float]] = field(default_factory=list)
    strategies: dict[str, StrategyTable] = field(default_factory=dict)
    stopped_early: bool = False

    def add(self, iteration: int, seconds: float, metric: str, value: float) -> None:
        if self.rows and iteration < self.rows[-1][0]:
            raise ContractViolation("report iterations must not decrease")
        self.rows.append((iteration, seconds, metric, float(value)))

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [(it, v) for it, _, m, v in self.rows if m == metric]
        if not pts:
            return np.array([]), np.array([])
        its, vals = zip(*pts)
        return np.array(its), np.array(vals)


def _segment_rm(values: np.ndarray, infoset_of_slot: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Regret matching applied independently to every infoset's slot block."""
    pos = np.maximum(values, 0.0)
    sums = np.bincount(infoset_of_slot, weights=pos, minlength=len(counts))[infoset_of_slot]
    uniform = 1.0 / counts[infoset_of_slot]
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, pos / safe, uniform)


class TabularCFR:
    """Full-traversal CFR+ (regret-matching+, uniform averaging, alternating updates)."""

    def __init__(self, game: Game, team_mode: str = "joint", cap: int = DEFAULT_CAP,
                 tree: GameTree | None = None, fit_sweeps: int = 10):
        if team_mode not in TEAM_MODES:
            raise ContractViolation(f"team_mode must be one of {TEAM_MODES}")
        self.game = game
        self.team_mode = team_mode
        self.tree = tree if tree is not None else GameTree(game, cap)
        self.fit_sweeps = fit_sweeps
        tr = self.tree
        self.regrets = np.zeros(tr.n_slots)
        self.avg = np.zeros(tr.n_slots)
        self.team_infosets = tr.infosets_of(Player.TEAM)
        self.agent_regrets = {i: [np.zeros(len(a)) for a in tr.infosets[i].agent_actions]
                              for i in self.team_infosets}
        self.agent_avg = {i: [np.zeros(len(a)) for a in tr.infosets[i].agent_actions]
                          for i in self.team_infosets}
        self.iterations = 0

    # -- strategies ----------------------------------------------------------

    def agent_strategies(self, info: int) -> list[np.ndarray]:
        return [regret_matching(r) for r in self.agent_regrets[info]]

    def current_profile(self) -> np.ndarray:
        tr = self.tree
        profile = _segment_rm(self.regrets, tr.slot_infoset, tr.slot_count)
        if self.team_mode == "mix":
            for i in self.team_infosets:
                info = tr.infosets[i]
                profile[info.slot: info.slot + info.n_actions] = product_joint(self.agent_strategies(i))
        return profile

    def average_profile(self) -> np.ndarray:
        tr = self.tree
        profile = _segment_rm(self.avg, tr.slot_infoset, tr.slot_count)
        if self.team_mode == "mix":
            for i in self.team_infosets:
                info = tr.infosets[i]
                agents = [average_strategy({0: a}, 0) for a in self.agent_avg[i]]
                profile[info.slot: info.slot + info.n_actions] = product_joint(agents)
        return profile

    # -- one iteration ---------------------------------------------------------

    def cfr_iteration(self) -> None:
        """One sweep: update the adversary, then the team against its new strategy."""
        self.iterations += 1
        for player in (Player.ADVERSARY, Player.TEAM):
            self._update(player, self.current_profile())

    iterate = cfr_iteration

    def _update(self, player: Player, profile: np.ndarray) -> None:
        tr = self.tree
        slot_cfv, info_cfv = tr.action_values(profile, player)
        instant = slot_cfv - info_cfv[tr.slot_infoset]
        own_reach = tr.reaches(profile)[int(player)][tr.info_rep]
        mine = tr.slot_player == int(player)
        if player == Player.TEAM and self.team_mode == "mix":
            for i in self.team_infosets:
                info = tr.infosets[i]
                block = slice(info.slot, info.slot + info.n_actions)
                factors = self.agent_regrets[i]
                shape = [len(f) for f in factors]
                target = np.maximum(product_joint(factors) + instant[block], 0.0).reshape(shape)
                strategies = self.agent_strategies(i)
                self.agent_regrets[i] = fit_product_form(target, factors, self.fit_sweeps)
                for acc, s in zip(self.agent_avg[i], strategies):
                    acc += own_reach[i] * s
            return
        self.regrets[mine] = np.maximum(self.regrets[mine] + instant[mine], 0.0)
        self.avg[mine] += own_reach[tr.slot_infoset[mine]] * profile[mine]

    def run(self, iterations: int, eval_every: int = 0, report: SolveReport | None = None) -> SolveReport:
        report = report or SolveReport()
        start = time.perf_counter()
        for _ in range(iterations):
            self.cfr_iteration()
            if eval_every and self.iterations % eval_every == 0:
                report.add(self.iterations, time.perf_counter() - start, "exploitability", self.exploitability())
        report.strategies = self.average_tables()
        return report

    def exploitability(self, average: bool = True) -> float:
        return self.tree.exploitability(self.average_profile() if average else self.current_profile())

    # -- table views -------------------------------------------------------------

    def regret_tables(self) -> dict[str, RegretTable]:
        tr = self.tree
        adv, team = RegretTable(), RegretTable()
        for i, info in enumerate(tr.infosets):
            block = self.regrets[info.slot: info.slot + info.n_actions].copy()
            if info.player == Player.ADVERSARY:
                adv[info.key] = block
            elif self.team_mode == "joint":
                team[info.key] = block
            else:
                for a, r in enumerate(self.agent_regrets[i]):
                    team[(info.key, a)] = r.copy()
        return {"adversary_regret": adv, "team_regret": team}

    def average_tables(self) -> dict[str, StrategyTable]:
        tr = self.tree
        avg = self.average_profile()
        adv, team = StrategyTable(), StrategyTable()
        for i, info in enumerate(tr.infosets):
            block = avg[info.slot: info.slot + info.n_actions].copy()
            if info.player == Player.ADVERSARY:
                adv[info.key] = block
            elif self.team_mode == "joint":
                team[info.key] = block
            else:
                for a, acc in enumerate(self.agent_avg[i]):
                    team[(info.key, a)] = average_strategy({0: acc}, 0)
        return {"adversary": adv, "team": team}


class ProbeMCCFR:
    """Tabular probe-sampling MCCFR: K sampled traversals per player per iteration."""

    def __init__(self, game: Game, team_mode: str = "joint", traversals: int = 1, seed: int = 0,
                 probe_threshold: int = 64, probes: int = 1, workers: int | None = None,
                 fit_sweeps: int = 10):
        if team_mode not in TEAM_MODES:
            raise ContractViolation(f"team_mode must be one of {TEAM_MODES}")
        self.game = game
        self.team_mode = team_mode
        self.traversals = traversals
        self.seed = seed
        self.probe_threshold = probe_threshold
        self.probes = probes
        self.workers = workers
        self.fit_sweeps = fit_sweeps
        self.adv_regrets = RegretTable()
        self.team_regrets = RegretTable()
        self.adv_avg = AverageStrategyAccumulator()
        self.team_avg = AverageStrategyAccumulator()
        self.iterations = 0

    @property
    def source(self) -> TableSource:
        return TableSource(self.adv_regrets, self.team_regrets, self.team_mode)

    def iterate(self) -> None:
        self.iterations += 1
        t = self.iterations
        adv_reg, team_reg, adv_strat, team_strat = run_traversals(
            self.game, self.source, t, self.traversals, self.seed, self.probe_threshold, self.probes,
            self.workers)
        self.apply_regrets(adv_reg, team_reg)
        self.accumulate_strategies(adv_strat, team_strat)
        self.adv_avg.iterations = self.team_avg.iterations = t

    def apply_regrets(self, adv_records, team_records) -> None:
        """Sum the iteration's sampled regrets per infoset, then apply regret-matching+."""
        adv_sum: dict[InfoSetKey, np.ndarray] = {}
        for rec in adv_records:
            adv_sum[rec.key] = adv_sum.get(rec.key, 0.0) + rec.values
        for key, r in adv_sum.items():
            accumulate_plus(self.adv_regrets, key, r)

        team_sum: dict[InfoSetKey, tuple] = {}
        for rec in team_records:
            shape = [len(a) for a in rec.legal]
            dense = np.zeros(int(np.prod(shape)))
            idx = [tuple(rec.legal[i].index(a) for i, a in enumerate(j)) for j in rec.actions]
            flat = np.ravel_multi_index(np.array(idx).T, shape)
            np.add.at(dense, flat, rec.values)
            prev = team_sum.get(rec.key)
            team_sum[rec.key] = (rec.legal, dense if prev is None else prev[1] + dense)
        for key, (legal, r) in team_sum.items():
            if self.team_mode == "joint":
                accumulate_plus(self.team_regrets, key, r)
                continue
            factors = [self.team_regrets.get_vector((key, i), len(a)) for i, a in enumerate(legal)]
            target = np.maximum(product_joint(factors) + r, 0.0).reshape([len(a) for a in legal])
            for i, f in enumerate(fit_product_form(target, factors, self.fit_sweeps)):
                self.team_regrets[(key, i)] = f

    def accumulate_strategies(self, adv_records, team_records) -> None:
        for rec in adv_records:
            self.adv_avg.add(rec.key, rec.values)
        for rec in team_records:
            if self.team_mode == "mix":
                for i, s in enumerate(rec.values):
                    self.team_avg.add((rec.key, i), s)
            else:
                self.team_avg.add(rec.key, rec.values)

    def average_policy(self) -> Callable[[InfoSet], np.ndarray]:
        return table_policy(self.adv_avg, self.team_avg, self.team_mode, normalize=True)

    def current_policy(self) -> Callable[[InfoSet], np.ndarray]:
        source = self.source

        def policy(info: InfoSet) -> np.ndarray:
            if info.player == Player.ADVERSARY:
                return source.adversary(info.key, info.actions)
            return source.team_joint(info.key, info.agent_actions)
        return policy

    def tables(self) -> dict:
        return {"adversary_regret": self.adv_regrets, "team_regret": self.team_regrets,
                "adversary_average": self.adv_avg, "team_average": self.team_avg}


def table_policy(adversary: dict, team: dict, team_mode: str, normalize: bool = False
                 ) -> Callable[[InfoSet], np.ndarray]:
    """Policy over tree infosets from strategy (or accumulator) tables; missing keys are uniform."""

    def read(table, key, n):
        vec = table.get(key)
        if vec is None:
            return np.full(n, 1.0 / n)
        return average_strategy({0: vec}, 0) if normalize else np.asarray(vec)

    def policy(info: InfoSet) -> np.ndarray:
        if info.player == Player.ADVERSARY:
            return read(adversary, info.key, info.n_actions)
        if team_mode == "joint":
            return read(team, info.key, info.n_actions)
        return product_joint([read(team, (info.key, i), len(a)) for i, a in enumerate(info.agent_actions)])
    return policy


def best_response(tree: GameTree, policy: Callable[[InfoSet], np.ndarray] | np.ndarray,
                  responder: Player) -> tuple[np.ndarray, float]:
    """Exact best response of ``responder`` to the other side of ``policy``.

    Returns ``(responder slot strategy, value from the responder's view)``.
    """
    profile = policy if isinstance(policy, np.ndarray) else tree.profile_from(policy)
    return tree.best_response(profile, responder)


def exploitability(tree: GameTree, policy: Callable[[InfoSet], np.ndarray] | np.ndarray) -> float:
    profile = policy if isinstance(policy, np.ndarray) else tree.profile_from(policy)
    return tree.exploitability(profile)


def team_worst_case(tree: GameTree, policy: Callable[[InfoSet], np.ndarray] | np.ndarray) -> float:
    """Team value when the adversary best-responds to the team's part of ``policy``."""
    _, adv_value = best_response(tree, policy, Player.ADVERSARY)
    return -adv_value


def probe_traverse(state, player: Player, source, rng, iteration: int = 1,
                   probe_threshold: int = 64, probes: int = 1) -> tuple[float, ProbeTraverser]:
    """Run one probe-sampling traversal; returns the sampled value and the traverser (records)."""
    tr = ProbeTraverser(source, rng, iteration, probe_threshold, probes)
    return tr.traverse(state, player), tr
