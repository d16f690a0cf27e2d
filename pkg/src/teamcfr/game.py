"""Extensive-form game interface for team-vs-adversary zero-sum games.

A game is a tree of immutable :class:`GameState` objects.  Every non-terminal
state has exactly one acting :class:`Player`: the chance player, the
adversary, or the team.  At team states all agents act simultaneously, so the
legal actions are given per agent and a move is a :class:`JointAction`
composed of one action id per agent.  Joint action sets are never
materialised unless :meth:`GameState.joint_actions` is called.

Utilities are always reported from the team's perspective in ``[-1, 1]`` and
the adversary receives the negation.
"""

from __future__ import annotations

import abc
import enum
import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, NamedTuple, Sequence

import numpy as np

from teamcfr.errors import ContractViolation


class Player(enum.IntEnum):
    ADVERSARY = 0
    TEAM = 1
    CHANCE = 2


class AgentAction(NamedTuple):
    agent: int
    action: int


class JointAction(tuple):
    """A team move: one action id per agent, in fixed agent order."""

    def __new__(cls, actions: Sequence[int]) -> "JointAction":
        return super().__new__(cls, (int(a) for a in actions))

    @property
    def components(self) -> tuple[AgentAction, ...]:
        return tuple(AgentAction(i, a) for i, a in enumerate(self))

    def __repr__(self) -> str:
        return f"JointAction({list(self)})"


def _tuplify(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(_tuplify(o) for o in obj)
    return obj


@dataclass(frozen=True)
class InfoSetKey:
    """Identity of an information set.

    ``obs`` is the acting player's full observation sequence (perfect recall),
    built from nested tuples of ints.  ``key`` is its canonical byte string.
    """

    player: Player
    obs: tuple

    @property
    def key(self) -> bytes:
        return json.dumps([int(self.player), self.obs], separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "InfoSetKey":
        player, obs = json.loads(raw.decode())
        return cls(Player(player), _tuplify(obs))

    def __repr__(self) -> str:
        return f"InfoSetKey({self.player.name}, {self.obs!r})"


class GameState(abc.ABC):
    """Immutable history node.  Subclasses hold whatever derived data they need."""

    game: "Game"
    history: tuple

    @property
    @abc.abstractmethod
    def player(self) -> Player | None:
        """Acting player, or ``None`` at terminal states."""

    def is_terminal(self) -> bool:
        return self.player is None

    @abc.abstractmethod
    def _legal(self) -> tuple:
        """Flat action tuple, or per-agent tuples at team states."""

    @abc.abstractmethod
    def _apply(self, action: Any) -> "GameState":
        ...

    @abc.abstractmethod
    def _team_utility(self) -> float:
        ...

    @abc.abstractmethod
    def _observation(self) -> tuple:
        """Observation sequence of the acting player."""

    def _chance_outcomes(self) -> list[tuple[Any, float]]:
        raise NotImplementedError

    # -- public surface -------------------------------------------------

    def legal_actions(self) -> tuple:
        """Legal moves: per-agent action tuples for the team, a flat tuple otherwise."""
        if self.is_terminal():
            raise ContractViolation("legal_actions called on a terminal state")
        return self._legal()

    def num_joint_actions(self) -> int:
        if self.player != Player.TEAM:
            return len(self.legal_actions())
        return math.prod(len(a) for a in self.legal_actions())

    def joint_actions(self) -> list[JointAction]:
        """Enumerate the team's joint actions in lexicographic agent order."""
        if self.player != Player.TEAM:
            raise ContractViolation("joint_actions is only defined at team states")
        return [JointAction(c) for c in itertools.product(*self.legal_actions())]

    def chance_outcomes(self) -> list[tuple[Any, float]]:
        if self.player != Player.CHANCE:
            raise ContractViolation("chance_outcomes called on a non-chance state")
        return self._chance_outcomes()

    def sample_chance(self, rng: np.random.Generator) -> Any:
        outcomes = self.chance_outcomes()
        probs = np.array([p for _, p in outcomes])
        return outcomes[rng.choice(len(outcomes), p=probs / probs.sum())][0]

    def apply(self, action: Any) -> "GameState":
        """Return the child reached by ``action``; ``self`` is left untouched."""
        player = self.player
        if player is None:
            raise ContractViolation("cannot apply an action at a terminal state")
        if player == Player.TEAM:
            legal = self._legal()
            if len(action) != len(legal):
                raise ContractViolation(
                    f"joint action has {len(action)} components, team has {len(legal)} agents"
                )
            for i, (a, allowed) in enumerate(zip(action, legal)):
                if a not in allowed:
                    raise ContractViolation(f"agent {i}: action {a} not in {allowed}")
            action = JointAction(action)
        elif player == Player.CHANCE:
            self._check_chance(action)
        elif action not in self._legal():
            raise ContractViolation(f"adversary action {action} not in {self._legal()}")
        return self._apply(action)

    def _check_chance(self, action: Any) -> None:
        if action not in [a for a, _ in self._chance_outcomes()]:
            raise ContractViolation(f"chance outcome {action!r} is not possible here")

    def utility(self, player: Player = Player.TEAM) -> float:
        if not self.is_terminal():
            raise ContractViolation("utility requested at a non-terminal state")
        u = self._team_utility()
        if player == Player.TEAM:
            return u
        if player == Player.ADVERSARY:
            return -u
        raise ContractViolation("chance has no utility")

    def infoset_key(self) -> InfoSetKey:
        player = self.player
        if player is None:
            raise ContractViolation("terminal states have no information set")
        if player == Player.CHANCE:
            raise ContractViolation("chance states have no information set")
        return InfoSetKey(player, self._observation())


class Game(abc.ABC):
    """A concrete game; subclasses define the state type and the feature map."""

    name: str = "game"
    n_agents: int = 1
    num_agent_actions: int = 1
    num_adversary_actions: int = 1
    feature_size: int = 1
    utility_range: float = 2.0

    def __init__(self) -> None:
        self._feature_cache: dict[InfoSetKey, np.ndarray] = {}

    @abc.abstractmethod
    def initial_state(self) -> GameState:
        ...

    @abc.abstractmethod
    def _features(self, key: InfoSetKey) -> np.ndarray:
        ...

    @property
    def max_actions(self) -> int:
        return max(self.num_agent_actions, self.num_adversary_actions)

    @property
    def encoding_size(self) -> int:
        return self.feature_size + self.n_agents + self.max_actions

    def infoset_features(self, key: InfoSetKey) -> np.ndarray:
        feats = self._feature_cache.get(key)
        if feats is None:
            if len(self._feature_cache) > 500_000:
                self._feature_cache.clear()
            feats = np.asarray(self._features(key), dtype=np.float64)
            feats.setflags(write=False)
            self._feature_cache[key] = feats
        return feats

    def encode(self, key: InfoSetKey, agent: int, action: int) -> np.ndarray:
        """Fixed-length network input for (infoset, agent, candidate action)."""
        return self.encode_batch(key, agent, [action])[0]

    def encode_batch(self, key: InfoSetKey, agent: int, actions: Sequence[int]) -> np.ndarray:
        f = self.feature_size
        out = np.zeros((len(actions), self.encoding_size))
        out[:, :f] = self.infoset_features(key)
        out[:, f + agent] = 1.0
        out[np.arange(len(actions)), f + self.n_agents + np.asarray(actions, dtype=int)] = 1.0
        return out

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"
