"""Neural team CFR outer loop.

Each iteration runs ``K`` probe-sampling traversals per player with the
current regret networks, trains both regret networks on the iteration's
sampled regrets (warm-started cumulative targets), then trains the average
strategy networks on the strategies recorded at opponent decisions.

``mode="mix"`` uses the shared agent network with the product mixing layer;
``mode="joint"`` regresses one network over whole joint actions (the
baseline that has to enumerate joint actions); ``mode="tabular"`` runs the
same sampling scheme with tables instead of networks.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from teamcfr.errors import ConfigError, ContractViolation
from teamcfr.game import Game, GameState, InfoSetKey, JointAction, Player
from teamcfr.neural import (AdversaryRegretNet, JointRegretNet, NetSource, RegretNet, SampleMemory, StrategyNet,
                            TrainConfig, save_nets, train_regret, train_strategy)
from teamcfr.regret import save_tables
from teamcfr.sampling import (ProbeTraverser, RegretRecord, StrategyRecord, TableSource, run_traversals,
                              sample_index)
from teamcfr.tabular import ProbeMCCFR, SolveReport
from teamcfr.tree import InfoSet, product_joint

MODES = ("mix", "joint", "tabular")


@dataclass
class SolverConfig:
    iterations: int = 100
    traversals: int = 100
    mode: str = "mix"
    probe_threshold: int = 64
    probes: int = 1
    seed: int = 0
    eval_every: int = 1
    hidden: tuple[int, ...] = (64, 64, 64)
    train: TrainConfig = field(default_factory=TrainConfig)
    strategy_train: TrainConfig | None = None
    memory_capacity: int = 2_000_000
    regret_window: str = "iteration"    # or "all": per-record targets over the whole memory
    target_scale: str = "sum"           # per-iteration regrets/strategies summed ("sum") or averaged ("mean")
    tabular_team_mode: str = "joint"
    wall_budget: float | None = None    # seconds; graceful stop
    workers: int | None = None
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self) -> None:
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.iterations < 1 or self.traversals < 1:
            raise ConfigError("iterations and traversals must be >= 1")
        if self.probe_threshold < 1 or self.probes < 1:
            raise ConfigError("probe_threshold and probes must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.target_scale not in ("sum", "mean"):
            raise ConfigError(f"target_scale must be 'sum' or 'mean', got {self.target_scale!r}")
        if self.regret_window not in ("iteration", "all"):
            raise ConfigError(f"regret_window must be 'iteration' or 'all', got {self.regret_window!r}")


@dataclass
class SolveResult:
    report: SolveReport
    solver: "NeuralCFR | TabularSolver"
    iterations: int
    stopped_early: bool

    def average_source(self):
        return self.solver.average_source()

    def current_source(self):
        return self.solver.current_source()


# -- record aggregation -------------------------------------------------------

def aggregate_regrets(records: list[RegretRecord], scale: float = 1.0) -> list[RegretRecord]:
    """Sum sampled regrets per infoset (per joint action for the team), times ``scale``.

    Records keep first-seen order so training data is deterministic.
    """
    sums: dict[InfoSetKey, dict] = {}
    meta: dict[InfoSetKey, RegretRecord] = {}
    for rec in records:
        acc = sums.setdefault(rec.key, {})
        meta.setdefault(rec.key, rec)
        for a, v in zip(rec.actions, rec.values):
            acc[a] = acc.get(a, 0.0) + float(v)
    out = []
    for key, acc in sums.items():
        first = meta[key]
        out.append(RegretRecord(key, first.iteration, tuple(acc), np.array(list(acc.values())) * scale,
                                first.legal))
    return out


def aggregate_strategies(records: list[StrategyRecord], scale: float = 1.0) -> list[StrategyRecord]:
    """Sum recorded strategies per infoset (per agent for product-form team records)."""
    sums: dict[InfoSetKey, StrategyRecord] = {}
    for rec in records:
        prev = sums.get(rec.key)
        if prev is None:
            vals = tuple(np.asarray(v) * scale for v in rec.values) if isinstance(rec.values, tuple) \
                else np.asarray(rec.values) * scale
            sums[rec.key] = StrategyRecord(rec.key, rec.iteration, rec.actions, vals)
        elif isinstance(rec.values, tuple):
            prev.values = tuple(p + np.asarray(v) * scale for p, v in zip(prev.values, rec.values))
        else:
            prev.values = prev.values + np.asarray(rec.values) * scale
    return list(sums.values())


# -- traversal steps and play ---------------------------------------------------------

def team_traverse_step(state: GameState, source, rng: np.random.Generator, iteration: int,
                       probe_threshold: int = 64, probes: int = 1) -> tuple[float, ProbeTraverser]:
    """One team update at a team decision: returns the sampled value and the traverser (records, counters)."""
    if state.player != Player.TEAM:
        raise ContractViolation("team_traverse_step needs a team decision")
    tr = ProbeTraverser(source, rng, iteration, probe_threshold, probes)
    return tr._team_update(state, state.infoset_key()), tr


def adversary_traverse_step(state: GameState, source, rng: np.random.Generator, iteration: int,
                            probes: int = 1) -> tuple[float, ProbeTraverser]:
    if state.player != Player.ADVERSARY:
        raise ContractViolation("adversary_traverse_step needs an adversary decision")
    tr = ProbeTraverser(source, rng, iteration, 1, probes)
    return tr._adversary_update(state, state.infoset_key()), tr


def strategy_for_play(source, key: InfoSetKey, legal, player: Player):
    """Team: per-agent distributions (joint distribution in joint mode); adversary: one distribution."""
    if player == Player.ADVERSARY:
        return source.adversary(key, legal)
    if source.team_mode == "joint":
        return source.team_joint(key, legal)
    return source.team_agents(key, legal)


def sample_play(source, state: GameState, rng: np.random.Generator):
    """Sample an action at a decision node; team agents sample independently in mix mode."""
    key, legal = state.infoset_key(), state.legal_actions()
    probs = strategy_for_play(source, key, legal, state.player)
    if state.player == Player.ADVERSARY:
        return legal[sample_index(rng, probs)]
    if source.team_mode == "joint":
        idx = np.unravel_index(sample_index(rng, probs), [len(a) for a in legal])
        return JointAction(legal[i][k] for i, k in enumerate(idx))
    return JointAction(a[sample_index(rng, p)] for a, p in zip(legal, probs))


def source_policy(source) -> Callable[[InfoSet], np.ndarray]:
    """Tree policy (joint distribution at team infosets) from a strategy source."""

    def policy(info: InfoSet) -> np.ndarray:
        if info.player == Player.ADVERSARY:
            return source.adversary(info.key, info.actions)
        return source.team_joint(info.key, info.agent_actions)
    return policy


class UniformSource:
    """Uniform play for both sides (baselines)."""

    def __init__(self, team_mode: str = "mix"):
        self.team_mode = team_mode

    def adversary(self, key, legal):
        return np.full(len(legal), 1.0 / len(legal))

    def team_agents(self, key, legal):
        return [np.full(len(a), 1.0 / len(a)) for a in legal]

    def team_joint(self, key, legal):
        return product_joint(self.team_agents(key, legal))


# -- solvers -------------------------------------------------------------------

def _sub_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


class NeuralCFR:
    """Networks, memories and the per-iteration update for mix or joint mode."""

    def __init__(self, game: Game, config: SolverConfig):
        if config.mode not in ("mix", "joint"):
            raise ConfigError(f"NeuralCFR needs mode mix or joint, got {config.mode!r}")
        self.game = game
        self.config = config
        self.team_mode = config.mode
        joint = config.mode == "joint"
        seed = config.seed
        team_cls = JointRegretNet if joint else RegretNet
        self.adv_regret = AdversaryRegretNet(game, hidden=config.hidden, seed=_sub_seed(seed, 1))
        self.team_regret = team_cls(game, joint=joint, hidden=config.hidden, seed=_sub_seed(seed, 2))
        self.adv_strategy = StrategyNet(game, hidden=config.hidden, seed=_sub_seed(seed, 3))
        self.team_strategy = StrategyNet(game, joint=joint, hidden=config.hidden, seed=_sub_seed(seed, 4))
        cap = config.memory_capacity
        self.adv_regret_mem = SampleMemory(cap, _sub_seed(seed, 5))
        self.team_regret_mem = SampleMemory(cap, _sub_seed(seed, 6))
        self.adv_strategy_mem = SampleMemory(cap, _sub_seed(seed, 7))
        self.team_strategy_mem = SampleMemory(cap, _sub_seed(seed, 8))
        self.iterations = 0
        self.last_losses: dict[str, float] = {}

    def current_source(self) -> NetSource:
        return NetSource(self.adv_regret, self.team_regret, self.team_mode)

    def average_source(self) -> NetSource:
        return NetSource(self.adv_strategy, self.team_strategy, self.team_mode)

    def iterate(self) -> None:
        cfg = self.config
        self.iterations += 1
        t = self.iterations
        adv_reg, team_reg, adv_strat, team_strat = run_traversals(
            self.game, self.current_source(), t, cfg.traversals, cfg.seed, cfg.probe_threshold, cfg.probes,
            cfg.workers)
        self.adv_regret_mem.extend(adv_reg)
        self.team_regret_mem.extend(team_reg)
        self.adv_strategy_mem.extend(adv_strat)
        self.team_strategy_mem.extend(team_strat)

        scale = 1.0 / cfg.traversals if cfg.target_scale == "mean" else 1.0
        tcfg = cfg.train
        scfg = cfg.strategy_train or cfg.train
        team_kind = "mix" if self.team_mode == "mix" else "joint"
        losses = {}
        for name, net, mem, kind, salt in (("adversary", self.adv_regret, self.adv_regret_mem, "adversary", 11),
                                           ("team", self.team_regret, self.team_regret_mem, team_kind, 12)):
            if cfg.regret_window == "all":
                records = mem.records
            else:
                records = aggregate_regrets(mem.since(t), scale)
            if records:
                trace = train_regret(net, records, replace(tcfg, seed=_sub_seed(cfg.seed, t, salt)), kind)
                losses[f"regret_{name}"] = trace[-1]
        for name, net, mem, kind, salt in (("adversary", self.adv_strategy, self.adv_strategy_mem, "adversary", 13),
                                           ("team", self.team_strategy, self.team_strategy_mem, team_kind, 14)):
            records = aggregate_strategies(mem.since(t), scale)
            if records:
                trace = train_strategy(net, records, replace(scfg, seed=_sub_seed(cfg.seed, t, salt)), kind)
                losses[f"strategy_{name}"] = trace[-1]
        self.last_losses = losses

    def nets(self) -> dict:
        return {"adversary_regret": self.adv_regret, "team_regret": self.team_regret,
                "adversary_strategy": self.adv_strategy, "team_strategy": self.team_strategy}

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        save_nets(path, self.nets(), {"iteration": self.iterations, "mode": self.team_mode, **(meta or {})})


class TabularSolver:
    """``mode=tabular``: probe-sampling MCCFR with regret-matching+ tables."""

    def __init__(self, game: Game, config: SolverConfig):
        self.game = game
        self.config = config
        self.team_mode = config.tabular_team_mode
        self.inner = ProbeMCCFR(game, config.tabular_team_mode, config.traversals, config.seed,
                                config.probe_threshold, config.probes, config.workers)
        self.last_losses: dict[str, float] = {}

    @property
    def iterations(self) -> int:
        return self.inner.iterations

    def iterate(self) -> None:
        self.inner.iterate()

    def current_source(self) -> TableSource:
        return self.inner.source

    def average_source(self) -> TableSource:
        return TableSource(self.inner.adv_avg, self.inner.team_avg, self.team_mode)

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        save_tables(path, self.inner.tables(), {"iteration": self.iterations, "mode": "tabular",
                                                "team_mode": self.team_mode, **(meta or {})})


def make_solver(game: Game, config: SolverConfig):
    return TabularSolver(game, config) if config.mode == "tabular" else NeuralCFR(game, config)


Evaluator = Callable[[int, object], dict]


def solve(game: Game, config: SolverConfig, evaluate: Evaluator | None = None,
          report: SolveReport | None = None, clock: Callable[[], float] = time.perf_counter,
          progress: Callable[[int, float, dict], None] | None = None,
          stop_when: Callable[[int, dict], bool] | None = None) -> SolveResult:
    """Run up to ``config.iterations`` iterations.

    ``evaluate(t, solver)`` is called every ``eval_every`` iterations (and at
    the last one) and returns ``{metric: value}`` rows for the report.  The
    wall budget is checked after each iteration; exceeding it stops the run
    and flags the report as partial.  ``stop_when(t, rows)`` returning true
    ends the run normally after iteration ``t``.
    """
    solver = make_solver(game, config)
    report = report or SolveReport()
    start = clock()
    stopped = False
    for t in range(1, config.iterations + 1):
        solver.iterate()
        elapsed = clock() - start
        over = config.wall_budget is not None and elapsed > config.wall_budget
        rows = {}
        for name, value in solver.last_losses.items():
            rows.setdefault("loss_regret" if name.startswith("regret") else "loss_strategy", []).append(value)
        rows = {k: float(np.mean(v)) for k, v in rows.items()}
        if evaluate is not None and (t % max(config.eval_every, 1) == 0 or t == config.iterations or over):
            rows.update(evaluate(t, solver))
        for metric, value in rows.items():
            report.add(t, elapsed, metric, value)
        if progress is not None:
            progress(t, elapsed, rows)
        if config.checkpoint_every and config.checkpoint_dir and t % config.checkpoint_every == 0:
            ckpt = Path(config.checkpoint_dir)
            ckpt.mkdir(parents=True, exist_ok=True)
            solver.save(ckpt / f"iter_{t:06d}.ckpt", {"seed": config.seed})
        if over:
            stopped = True
            break
        if stop_when is not None and stop_when(t, rows):
            break
    report.stopped_early = stopped
    return SolveResult(report, solver, solver.iterations, stopped)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
