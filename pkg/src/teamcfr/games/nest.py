"""NEST: network pursuit with a tracked evader.

The evader and a team of pursuers move on an undirected graph (a grid by
default).  Each step the evader commits a move to a neighbouring node or
stays, then the pursuers commit theirs jointly; positions update together.
The evader is captured when it ends a step on a pursuer's node or swaps an
edge with a pursuer.  It escapes by ending an uncaptured step on an exit.

Pursuers observe all positions (they track the evader).  The evader sees only
its own trajectory, which implies the elapsed step count.  Team utility is +1
for a capture or a timeout and -1 for an escape.

Action ids are destination node ids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from teamcfr.errors import ConfigError, ContractViolation, SizeCapExceeded
from teamcfr.game import Game, GameState, InfoSetKey, Player

MAX_CHANCE_ENUMERATION = 1_000_000


def load_adjacency(path: str | Path) -> tuple[tuple[int, int], ...]:
    """Read an edge list, one ``u v`` pair per line; ``#`` starts a comment."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: node ids must be integers") from exc
        edges.append((u, v))
    return tuple(edges)


def grid_edges(width: int, height: int) -> tuple[tuple[int, int], ...]:
    edges = []
    for r in range(height):
        for c in range(width):
            n = r * width + c
            if c + 1 < width:
                edges.append((n, n + 1))
            if r + 1 < height:
                edges.append((n, n + width))
    return tuple(edges)


def grid_boundary(width: int, height: int) -> set[int]:
    return {r * width + c for r in range(height) for c in range(width)
            if r in (0, height - 1) or c in (0, width - 1)}


@dataclass(frozen=True)
class NestSpec:
    width: int
    height: int
    pursuers: int
    exits: tuple[int, ...] | None = None
    step_limit: int = 3
    evader_start: int | None = None
    pursuer_starts: tuple[int, ...] | None = None
    edges: tuple[tuple[int, int], ...] | None = None  # overrides the grid when given

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid dimensions must be positive")
        if self.pursuers < 1:
            raise ConfigError("need at least one pursuer")
        if self.step_limit < 1:
            raise ConfigError("step_limit must be >= 1")
        if self.exits is None:
            w, h = self.width, self.height
            corners = sorted({0, w - 1, (h - 1) * w, h * w - 1})
            object.__setattr__(self, "exits", tuple(corners))
        object.__setattr__(self, "exits", tuple(int(e) for e in self.exits))
        n = self.n_nodes
        if not self.exits or any(not 0 <= e < n for e in self.exits):
            raise ConfigError(f"exits {self.exits} must be valid node ids")
        if self.edges is None:
            outside = set(self.exits) - grid_boundary(self.width, self.height)
            if outside:
                raise ConfigError(f"exits {sorted(outside)} are not on the grid boundary")
        if (self.evader_start is None) != (self.pursuer_starts is None):
            raise ConfigError("give both evader_start and pursuer_starts, or neither")
        if self.pursuer_starts is not None:
            object.__setattr__(self, "pursuer_starts", tuple(int(p) for p in self.pursuer_starts))
            if len(self.pursuer_starts) != self.pursuers:
                raise ConfigError("pursuer_starts must list one node per pursuer")
            if any(not 0 <= p < n for p in (self.evader_start, *self.pursuer_starts)):
                raise ConfigError("start nodes out of range")
        if self.edges is not None:
            nodes = {u for e in self.edges for u in e}
            if nodes and (min(nodes) < 0 or max(nodes) >= n):
                raise ConfigError(f"edge list uses node ids outside 0..{n - 1}")

    @property
    def n_nodes(self) -> int:
        if self.edges is not None:
            return max(max(e) for e in self.edges) + 1 if self.edges else 1
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class NestState(GameState):
    game: "NestGame"
    history: tuple
    trail: tuple = ()             # (evader, pursuers) snapshot per completed step, incl. start
    pending: int | None = None    # evader's committed move this step
    status: int | None = None     # terminal team utility

    @property
    def player(self) -> Player | None:
        if self.status is not None:
            return None
        if not self.trail:
            return Player.CHANCE
        return Player.ADVERSARY if self.pending is None else Player.TEAM

    @property
    def evader(self) -> int:
        return self.trail[-1][0]

    @property
    def pursuer_positions(self) -> tuple[int, ...]:
        return self.trail[-1][1]

    @property
    def steps(self) -> int:
        return len(self.trail) - 1

    def _chance_outcomes(self):
        game = self.game
        count = len(game.evader_starts) * game.n_nodes ** game.spec.pursuers
        if count > MAX_CHANCE_ENUMERATION:
            raise SizeCapExceeded(f"{count} initial placements; sample them instead", count)
        p = 1.0 / count
        return [((e, ps), p) for e in game.evader_starts
                for ps in itertools.product(range(game.n_nodes), repeat=game.spec.pursuers)]

    def sample_chance(self, rng: np.random.Generator):
        game = self.game
        e = game.evader_starts[rng.integers(len(game.evader_starts))]
        ps = tuple(int(x) for x in rng.integers(game.n_nodes, size=game.spec.pursuers))
        return (e, ps)

    def _check_chance(self, action) -> None:
        game = self.game
        try:
            e, ps = action
            ok = e in game.evader_starts and len(ps) == game.spec.pursuers and all(
                0 <= p < game.n_nodes for p in ps)
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise ContractViolation(f"invalid initial placement {action!r}")

    def _legal(self) -> tuple:
        moves = self.game.moves
        if self.pending is None:
            return moves[self.evader]
        return tuple(moves[p] for p in self.pursuer_positions)

    def _apply(self, action) -> "NestState":
        hist = self.history + (action,)
        if not self.trail:
            e, ps = action
            return NestState(self.game, hist, ((e, tuple(ps)),),
                             status=1 if e in ps else None)
        if self.pending is None:
            return NestState(self.game, hist, self.trail, int(action))
        e0, ps0 = self.trail[-1]
        e1, ps1 = self.pending, tuple(action)
        trail = self.trail + ((e1, ps1),)
        captured = e1 in ps1 or any(p0 == e1 and p1 == e0 for p0, p1 in zip(ps0, ps1))
        if captured:
            status = 1
        elif e1 in self.game.exit_set:
            status = -1
        elif len(trail) - 1 >= self.game.spec.step_limit:
            status = 1
        else:
            status = None
        return NestState(self.game, hist, trail, None, status)

    def _team_utility(self) -> float:
        return float(self.status)

    def _observation(self) -> tuple:
        if self.pending is None:
            return tuple(e for e, _ in self.trail)
        return self.trail


class NestGame(Game):
    def __init__(self, spec: NestSpec):
        super().__init__()
        self.spec = spec
        self.name = f"nest_{spec.width}x{spec.height}_1v{spec.pursuers}"
        self.n_nodes = spec.n_nodes
        edges = spec.edges if spec.edges is not None else grid_edges(spec.width, spec.height)
        nbrs: dict[int, set[int]] = {n: {n} for n in range(self.n_nodes)}
        for u, v in edges:
            nbrs[u].add(v)
            nbrs[v].add(u)
        self.moves = tuple(tuple(sorted(nbrs[n])) for n in range(self.n_nodes))
        self.exit_set = frozenset(spec.exits)
        self.evader_starts = tuple(n for n in range(self.n_nodes) if n not in self.exit_set)
        if spec.evader_start is None and not self.evader_starts:
            raise ConfigError("every node is an exit; the evader has nowhere to start")
        self.n_agents = spec.pursuers
        self.num_agent_actions = self.n_nodes
        self.num_adversary_actions = self.n_nodes
        self.feature_size = 1 + self.n_nodes * (1 + spec.pursuers) + 1

    def initial_state(self) -> NestState:
        root = NestState(self, ())
        if self.spec.evader_start is None:
            return root
        return root._apply((self.spec.evader_start, self.spec.pursuer_starts))

    def _features(self, key: InfoSetKey) -> np.ndarray:
        n = self.n_nodes
        x = np.zeros(self.feature_size)
        if key.player == Player.TEAM:
            x[0] = 1.0
            e, ps = key.obs[-1]
            for i, p in enumerate(ps):
                x[1 + n * (1 + i) + p] = 1.0
            steps = len(key.obs) - 1
        else:
            x[0] = -1.0
            e = key.obs[-1]
            steps = len(key.obs) - 1
        x[1 + e] = 1.0
        x[-1] = steps / self.spec.step_limit
        return x


def nest_game(spec: NestSpec) -> NestGame:
    return NestGame(spec)
