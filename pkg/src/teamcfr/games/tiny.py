"""One-shot matrix game: the team moves, then the adversary, both blind."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from teamcfr.errors import ConfigError
from teamcfr.game import Game, GameState, InfoSetKey, JointAction, Player


@dataclass(frozen=True)
class TinyMatrixSpec:
    """``payoff[a_1, ..., a_n, b]`` is the team utility, entries in [-1, 1]."""

    payoff: np.ndarray = field(compare=False)

    def __post_init__(self) -> None:
        payoff = np.asarray(self.payoff, dtype=np.float64)
        object.__setattr__(self, "payoff", payoff)
        if payoff.ndim < 2:
            raise ConfigError("payoff tensor needs at least one agent axis and the adversary axis")
        n = payoff.ndim - 1
        if n > 3:
            raise ConfigError(f"at most 3 team agents supported, got {n}")
        if any(k > 3 or k < 1 for k in payoff.shape[:-1]):
            raise ConfigError(f"agent action counts must be in 1..3, got {payoff.shape[:-1]}")
        if not 1 <= payoff.shape[-1] <= 4:
            raise ConfigError(f"adversary action count must be in 1..4, got {payoff.shape[-1]}")
        if not np.all(np.isfinite(payoff)) or np.abs(payoff).max() > 1.0:
            raise ConfigError("payoffs must be finite and lie in [-1, 1]")

    @property
    def n_agents(self) -> int:
        return self.payoff.ndim - 1

    @property
    def agent_actions(self) -> tuple[int, ...]:
        return self.payoff.shape[:-1]

    @property
    def adversary_actions(self) -> int:
        return self.payoff.shape[-1]

    @classmethod
    def matching_pennies(cls) -> "TinyMatrixSpec":
        return cls(np.array([[1.0, -1.0], [-1.0, 1.0]]))

    @classmethod
    def random(cls, rng: np.random.Generator, agent_actions=(2, 2), adversary_actions: int = 2) -> "TinyMatrixSpec":
        return cls(rng.uniform(-1.0, 1.0, size=(*agent_actions, adversary_actions)))


@dataclass(frozen=True, eq=False)
class TinyMatrixState(GameState):
    game: "TinyMatrixGame"
    history: tuple = ()

    @property
    def player(self) -> Player | None:
        return (Player.TEAM, Player.ADVERSARY, None)[len(self.history)]

    def _legal(self) -> tuple:
        spec = self.game.spec
        if len(self.history) == 0:
            return tuple(tuple(range(k)) for k in spec.agent_actions)
        return tuple(range(spec.adversary_actions))

    def _apply(self, action) -> "TinyMatrixState":
        return TinyMatrixState(self.game, self.history + (action,))

    def _team_utility(self) -> float:
        joint, b = self.history
        return float(self.game.spec.payoff[(*joint, b)])

    def _observation(self) -> tuple:
        return ()


class TinyMatrixGame(Game):
    def __init__(self, spec: TinyMatrixSpec):
        super().__init__()
        self.spec = spec
        self.name = "tiny_matrix"
        self.n_agents = spec.n_agents
        self.num_agent_actions = max(spec.agent_actions)
        self.num_adversary_actions = spec.adversary_actions
        self.feature_size = 1

    def initial_state(self) -> TinyMatrixState:
        return TinyMatrixState(self)

    def _features(self, key: InfoSetKey) -> np.ndarray:
        return np.array([1.0 if key.player == Player.TEAM else -1.0])


def tiny_matrix_game(spec: TinyMatrixSpec) -> TinyMatrixGame:
    return TinyMatrixGame(spec)


__all__ = ["TinyMatrixSpec", "TinyMatrixGame", "TinyMatrixState", "tiny_matrix_game", "JointAction"]
