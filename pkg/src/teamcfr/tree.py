"""Flat array form of a fully enumerated game tree.

Nodes are numbered breadth-first so every depth level is a contiguous range
and parents precede children.  Decision nodes point at an information set;
each information set owns a contiguous block of "slots", one per action (per
joint action for the team), so a whole behaviour profile is one float array.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from teamcfr.errors import ConfigError, SizeCapExceeded
from teamcfr.game import Game, InfoSetKey, Player

TERMINAL = -1
DEFAULT_CAP = 1_000_000


@dataclass
class InfoSet:
    key: InfoSetKey
    player: Player
    actions: tuple            # flat list; JointActions for the team
    agent_actions: tuple | None
    slot: int
    depth: int
    nodes: list = field(default_factory=list)

    @property
    def n_actions(self) -> int:
        return len(self.actions)


def estimate_size(game: Game, samples: int = 200, seed: int = 0) -> float:
    """Knuth's unbiased estimate of the number of histories (random descents)."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(samples):
        state, weight, count = game.initial_state(), 1.0, 1.0
        while not state.is_terminal():
            if state.player == Player.CHANCE:
                try:
                    b = len(state.chance_outcomes())
                except SizeCapExceeded as exc:
                    b = exc.estimate
                action = state.sample_chance(rng)
            elif state.player == Player.TEAM:
                legal = state.legal_actions()
                b = math.prod(len(a) for a in legal)
                action = tuple(a[rng.integers(len(a))] for a in legal)
            else:
                legal = state.legal_actions()
                b = len(legal)
                action = legal[rng.integers(b)]
            weight *= b
            count += weight
            state = state.apply(action)
        total += count
    return total / samples


class GameTree:
    """Enumerated tree; raises :class:`SizeCapExceeded` above ``cap`` histories."""

    def __init__(self, game: Game, cap: int = DEFAULT_CAP):
        self.game = game
        player, util, parent, edge, depth = [], [], [], [], []
        chance_prob, infoset_of = [], []
        self.infosets: list[InfoSet] = []
        index: dict[InfoSetKey, int] = {}
        first_child, n_child = [], []
        slots = 0

        queue = deque([(game.initial_state(), -1, -1, 0, np.nan)])
        while queue:
            state, par, e, d, cp = queue.popleft()
            nid = len(player)
            if nid >= cap:
                raise SizeCapExceeded(
                    f"{game.name}: more than {cap} histories (estimated {estimate_size(game):.3g})",
                    estimate_size(game))
            parent.append(par)
            edge.append(e)
            depth.append(d)
            chance_prob.append(cp)
            first_child.append(nid + len(queue) + 1)
            if state.is_terminal():
                player.append(TERMINAL)
                util.append(state.utility())
                infoset_of.append(-1)
                n_child.append(0)
                continue
            p = state.player
            player.append(int(p))
            util.append(0.0)
            if p == Player.CHANCE:
                infoset_of.append(-1)
                outcomes = state.chance_outcomes()
                n_child.append(len(outcomes))
                for k, (a, prob) in enumerate(outcomes):
                    queue.append((state.apply(a), nid, k, d + 1, prob))
                continue
            key = state.infoset_key()
            i = index.get(key)
            if i is None:
                if p == Player.TEAM:
                    actions, agent_actions = tuple(state.joint_actions()), state.legal_actions()
                else:
                    actions, agent_actions = tuple(state.legal_actions()), None
                i = index[key] = len(self.infosets)
                self.infosets.append(InfoSet(key, p, actions, agent_actions, slots, d))
                slots += len(actions)
            info = self.infosets[i]
            if info.depth != d:
                raise ConfigError(f"{game.name}: information set {key!r} spans several depths")
            info.nodes.append(nid)
            infoset_of.append(i)
            n_child.append(info.n_actions)
            for k, a in enumerate(info.actions):
                queue.append((state.apply(a), nid, k, d + 1, np.nan))

        self.player = np.array(player, dtype=np.int8)
        self.util = np.array(util)
        self.parent = np.array(parent, dtype=np.int64)
        self.edge = np.array(edge, dtype=np.int64)
        self.depth = np.array(depth, dtype=np.int64)
        self.chance_prob = np.array(chance_prob)
        self.infoset = np.array(infoset_of, dtype=np.int64)
        self.first_child = np.array(first_child, dtype=np.int64)
        self.n_child = np.array(n_child, dtype=np.int64)
        self.n_slots = slots
        self.index = index

        self.slot_start = np.array([s.slot for s in self.infosets], dtype=np.int64)
        self.slot_count = np.array([s.n_actions for s in self.infosets], dtype=np.int64)
        self.slot_infoset = np.repeat(np.arange(len(self.infosets)), self.slot_count)
        self.slot_player = np.repeat(np.array([int(s.player) for s in self.infosets], dtype=np.int8),
                                     self.slot_count)
        self.levels = [np.flatnonzero(self.depth == d) for d in range(int(self.depth.max()) + 1)]
        # edge slot for children of decision nodes, -1 under chance / for the root
        par = np.maximum(self.parent, 0)
        par_info = self.infoset[par]
        self.edge_slot = np.where((self.parent >= 0) & (par_info >= 0),
                                  self.slot_start[np.maximum(par_info, 0)] + self.edge, -1)
        self.parent_player = np.where(self.parent >= 0, self.player[par], TERMINAL)
        # one representative node per infoset (own reach is shared across the set)
        self.info_rep = np.array([s.nodes[0] for s in self.infosets], dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.player)

    def infosets_of(self, player: Player) -> list[int]:
        return [i for i, s in enumerate(self.infosets) if s.player == player]

    def uniform_profile(self) -> np.ndarray:
        return 1.0 / self.slot_count[self.slot_infoset]

    # -- vectorised passes -------------------------------------------------

    def edge_probs(self, profile: np.ndarray) -> np.ndarray:
        """Probability of the edge entering each node under ``profile``."""
        probs = np.where(self.edge_slot >= 0, profile[np.maximum(self.edge_slot, 0)], self.chance_prob)
        probs[0] = 1.0
        return probs

    def reaches(self, profile: np.ndarray) -> dict[int, np.ndarray]:
        """Per-player contribution to the reach probability of each node."""
        ep = self.edge_probs(profile)
        out = {int(p): np.ones(self.n_nodes) for p in Player}
        for lvl in self.levels[1:]:
            par = self.parent[lvl]
            pp = self.parent_player[lvl]
            for p, reach in out.items():
                reach[lvl] = reach[par] * np.where(pp == p, ep[lvl], 1.0)
        return out

    def values(self, profile: np.ndarray) -> np.ndarray:
        """Expected team utility below each node."""
        ep = self.edge_probs(profile)
        v = self.util.copy()
        for lvl in reversed(self.levels[1:]):
            contrib = np.bincount(self.parent[lvl], weights=ep[lvl] * v[lvl], minlength=self.n_nodes)
            mask = np.zeros(self.n_nodes, dtype=bool)
            mask[self.parent[lvl]] = True
            v[mask] = contrib[mask]
        return v

    def game_value(self, profile: np.ndarray) -> float:
        return float(self.values(profile)[0])

    def action_values(self, profile: np.ndarray, player: Player) -> tuple[np.ndarray, np.ndarray]:
        """Counterfactual values per slot and per infoset for ``player``.

        Returns ``(slot_cfv, infoset_cfv)``; only entries of ``player`` are
        meaningful.  Values are from ``player``'s perspective.
        """
        reach = self.reaches(profile)
        others = np.ones(self.n_nodes)
        for p, r in reach.items():
            if p != int(player):
                others *= r
        sign = 1.0 if player == Player.TEAM else -1.0
        v = sign * self.values(profile)
        kids = np.flatnonzero((self.edge_slot >= 0) & (self.parent_player == int(player)))
        slot_cfv = np.bincount(self.edge_slot[kids], weights=others[self.parent[kids]] * v[kids],
                               minlength=self.n_slots)
        weighted = slot_cfv * profile
        info_cfv = np.bincount(self.slot_infoset, weights=weighted, minlength=len(self.infosets))
        return slot_cfv, info_cfv

    def best_response(self, profile: np.ndarray, responder: Player) -> tuple[np.ndarray, float]:
        """Exact best response of ``responder`` against the other side of ``profile``.

        Returns the responder's pure strategy as a slot array and its expected
        value from its own perspective.  For the team the maximisation runs
        over full joint actions.
        """
        reach = self.reaches(profile)
        others = np.ones(self.n_nodes)
        for p, r in reach.items():
            if p != int(responder):
                others *= r
        sign = 1.0 if responder == Player.TEAM else -1.0
        ep = self.edge_probs(profile)
        v = sign * self.util.copy()
        br = profile.copy()
        resp_slots = self.slot_player == int(responder)
        for lvl in reversed(self.levels):
            decision = lvl[self.player[lvl] != TERMINAL]
            if decision.size == 0:
                continue
            mine = decision[self.player[decision] == int(responder)]
            if mine.size:
                infos = np.unique(self.infoset[mine])
                for i in infos:
                    info = self.infosets[i]
                    nodes = np.array(info.nodes)
                    kids = self.first_child[nodes][:, None] + np.arange(info.n_actions)[None, :]
                    q = others[nodes] @ v[kids]
                    best = int(np.argmax(q))
                    br[info.slot: info.slot + info.n_actions] = 0.0
                    br[info.slot + best] = 1.0
                    v[nodes] = v[kids[:, best]]
            rest = decision[self.player[decision] != int(responder)]
            if rest.size:
                starts, counts = self.first_child[rest], self.n_child[rest]
                kid_idx = np.repeat(starts, counts) + _ranges(counts)
                owner = np.repeat(np.arange(rest.size), counts)
                sums = np.bincount(owner, weights=ep[kid_idx] * v[kid_idx], minlength=rest.size)
                v[rest] = sums
        br[~resp_slots] = profile[~resp_slots]
        return br, float(v[0])

    def exploitability(self, profile: np.ndarray) -> float:
        """Mean best-response gain of both sides; zero exactly at equilibrium."""
        _, adv_gain = self.best_response(profile, Player.ADVERSARY)
        _, team_gain = self.best_response(profile, Player.TEAM)
        return 0.5 * (adv_gain + team_gain)

    def profile_from(self, policy) -> np.ndarray:
        """Build a slot array from ``policy(infoset) -> probabilities``."""
        out = np.empty(self.n_slots)
        for info in self.infosets:
            probs = np.asarray(policy(info), dtype=np.float64)
            out[info.slot: info.slot + info.n_actions] = probs
        return out


def _ranges(counts: np.ndarray) -> np.ndarray:
    """Concatenated ``arange(c)`` for each count."""
    total = int(counts.sum())
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total) - offsets


def product_joint(agent_probs: list[np.ndarray]) -> np.ndarray:
    """Flattened outer product over agents, in the order of ``itertools.product``."""
    out = np.ones(1)
    for p in agent_probs:
        out = np.multiply.outer(out, p).ravel()
    return out
