"""Team Goofspiel with hidden bids.

Every round each team agent and the adversary secretly bid one card from
their own hand of cards ``1..C`` on the revealed prize.  The single highest
bid takes the prize for its side; a tie on the highest bid voids the prize.
Players only learn who won each round, never the cards played.  After ``R``
rounds the side with more points wins (+1 / -1, 0 on a tie).

Action ids are ``card - 1``.  Prizes are the top ``R`` values ``C, C-1, ...``,
either in descending order or shuffled by a root chance event over at most
``PERMUTATION_CAP`` orderings (the first ones in lexicographic order).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from teamcfr.errors import ConfigError
from teamcfr.game import Game, GameState, InfoSetKey, Player

PERMUTATION_CAP = 24

TEAM_WON, VOID, ADVERSARY_WON = 1, 0, -1


@dataclass(frozen=True)
class GoofspielSpec:
    cards: int
    team_players: int
    rounds: int
    prize_order: str = "shuffled"  # or "descending"

    def __post_init__(self) -> None:
        if not (self.cards >= self.rounds >= 1):
            raise ConfigError(f"need cards >= rounds >= 1, got C={self.cards} R={self.rounds}")
        if self.team_players < 1:
            raise ConfigError("need at least one team player")
        if self.prize_order not in ("descending", "shuffled"):
            raise ConfigError(f"prize_order must be 'descending' or 'shuffled', not {self.prize_order!r}")

    @property
    def prizes(self) -> tuple[int, ...]:
        return tuple(range(self.cards, self.cards - self.rounds, -1))

    @property
    def label(self) -> str:
        return f"{self.cards}C{self.team_players}P{self.rounds}R"


def _resolve(team_bid: tuple[int, ...], adv_bid: int) -> int:
    bids = list(team_bid) + [adv_bid]
    top = max(bids)
    if bids.count(top) > 1:
        return VOID
    return ADVERSARY_WON if adv_bid == top else TEAM_WON


@dataclass(frozen=True, eq=False)
class GoofspielState(GameState):
    game: "GoofspielGame"
    history: tuple
    order: tuple | None            # prize order, None until chance has moved
    team_bids: tuple = ()          # one JointAction per completed round
    adv_bids: tuple = ()
    outcomes: tuple = ()
    pending: tuple | None = None   # team bid of the current round

    @property
    def round(self) -> int:
        return len(self.outcomes)

    @property
    def player(self) -> Player | None:
        if self.order is None:
            return Player.CHANCE
        if self.round >= self.game.spec.rounds:
            return None
        return Player.TEAM if self.pending is None else Player.ADVERSARY

    def _chance_outcomes(self):
        perms = self.game.prize_orders
        return [(p, 1.0 / len(perms)) for p in perms]

    def _legal(self) -> tuple:
        all_cards = range(self.game.spec.cards)
        if self.pending is None:
            return tuple(
                tuple(a for a in all_cards if a not in played)
                for played in zip(*self.team_bids)
            ) if self.team_bids else tuple(tuple(all_cards) for _ in range(self.game.n_agents))
        return tuple(a for a in all_cards if a not in self.adv_bids)

    def _apply(self, action) -> "GoofspielState":
        hist = self.history + (action,)
        if self.order is None:
            return GoofspielState(self.game, hist, tuple(action))
        if self.pending is None:
            return GoofspielState(self.game, hist, self.order, self.team_bids, self.adv_bids,
                                  self.outcomes, tuple(action))
        result = _resolve(self.pending, action)
        return GoofspielState(self.game, hist, self.order, self.team_bids + (self.pending,),
                              self.adv_bids + (action,), self.outcomes + (result,))

    def points(self) -> tuple[int, int]:
        team = sum(p for p, o in zip(self.order, self.outcomes) if o == TEAM_WON)
        adv = sum(p for p, o in zip(self.order, self.outcomes) if o == ADVERSARY_WON)
        return team, adv

    def _team_utility(self) -> float:
        team, adv = self.points()
        return float(np.sign(team - adv))

    def _observation(self) -> tuple:
        revealed = self.order[: self.round + 1]
        own = self.team_bids if self.pending is None else self.adv_bids
        return (revealed, own, self.outcomes)


class GoofspielGame(Game):
    def __init__(self, spec: GoofspielSpec):
        super().__init__()
        self.spec = spec
        self.name = f"goofspiel_{spec.label}"
        self.n_agents = spec.team_players
        self.num_agent_actions = spec.cards
        self.num_adversary_actions = spec.cards
        C, P, R = spec.cards, spec.team_players, spec.rounds
        self.feature_size = 1 + R + C + (P + 1) * C + 3 * R + 2
        if spec.prize_order == "shuffled":
            self.prize_orders = list(itertools.islice(itertools.permutations(spec.prizes), PERMUTATION_CAP))
        else:
            self.prize_orders = [spec.prizes]

    def initial_state(self) -> GoofspielState:
        if self.spec.prize_order == "shuffled":
            return GoofspielState(self, (), None)
        return GoofspielState(self, (), self.spec.prizes)

    @property
    def n_prize_orders(self) -> int:
        return len(self.prize_orders)

    @property
    def full_permutation_count(self) -> int:
        return math.factorial(self.spec.rounds)

    def _features(self, key: InfoSetKey) -> np.ndarray:
        C, P, R = self.spec.cards, self.spec.team_players, self.spec.rounds
        revealed, own, outcomes = key.obs
        x = np.zeros(self.feature_size)
        x[0] = 1.0 if key.player == Player.TEAM else -1.0
        rnd = len(outcomes)
        o = 1
        x[o + rnd] = 1.0
        o += R
        x[o + revealed[-1] - 1] = 1.0
        o += C
        if key.player == Player.TEAM:
            for i in range(P):
                x[o + i * C: o + (i + 1) * C] = 1.0
                for bid in own:
                    x[o + i * C + bid[i]] = 0.0
        else:
            block = o + P * C
            x[block: block + C] = 1.0
            for bid in own:
                x[block + bid] = 0.0
        o += (P + 1) * C
        for r, res in enumerate(outcomes):
            x[o + 3 * r + (res + 1)] = 1.0
        o += 3 * R
        total = sum(self.spec.prizes)
        x[o] = sum(p for p, res in zip(revealed, outcomes) if res == TEAM_WON) / total
        x[o + 1] = sum(p for p, res in zip(revealed, outcomes) if res == ADVERSARY_WON) / total
        return x


def goofspiel_game(spec: GoofspielSpec) -> GoofspielGame:
    return GoofspielGame(spec)
