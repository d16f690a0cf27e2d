"""Head-to-head match play between strategy sources."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from teamcfr.game import Game, Player
from teamcfr.solver import UniformSource, sample_play


@dataclass
class MatchResult:
    utilities: np.ndarray   # team utility per episode

    @property
    def episodes(self) -> int:
        return len(self.utilities)

    @property
    def mean(self) -> float:
        return float(self.utilities.mean())

    @property
    def se(self) -> float:
        n = len(self.utilities)
        return float(self.utilities.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def match_eval(team, adversary, game: Game, episodes: int, seed: int = 0) -> MatchResult:
    """Play ``episodes`` games, team moves from ``team`` and adversary moves from ``adversary``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4D41]))
    out = np.empty(episodes)
    for e in range(episodes):
        state = game.initial_state()
        while not state.is_terminal():
            player = state.player
            if player == Player.CHANCE:
                action = state.sample_chance(rng)
            else:
                action = sample_play(team if player == Player.TEAM else adversary, state, rng)
            state = state.apply(action)
        out[e] = state.utility(Player.TEAM)
    return MatchResult(out)


def baseline_eval(game: Game, episodes: int, seed: int = 0) -> MatchResult:
    """Uniform team against a uniform adversary."""
    uniform = UniformSource()
    return match_eval(uniform, uniform, game, episodes, seed)
