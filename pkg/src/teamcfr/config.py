"""Experiment configuration from flat INI files.

Sections and keys (``*`` = required section)::

    [experiment]*  seed, name
    [game]*        kind = goofspiel | nest | tiny, then per kind:
                   goofspiel: cards, team_players, rounds, prize_order
                   nest:      width, height, pursuers, exits, step_limit,
                              evader_start, pursuer_starts, adjacency (file)
                   tiny:      preset = matching_pennies | random | explicit,
                              payoff (JSON), agent_actions, adversary_actions,
                              instance_seed
    [solver]*      mode, iterations, traversals, probe_threshold, probes,
                   regret_window, target_scale, tabular_team_mode,
                   wall_budget, memory_capacity, checkpoint_every
    [network]      hidden
    [train]        steps, batch_size, lr, momentum, optimizer, clip_norm
    [eval]*        metric = auto | exploitability | match, every, episodes
    [output]*      dir, wall_clock

Unknown sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from teamcfr.errors import ConfigError
from teamcfr.game import Game
from teamcfr.games import (GoofspielSpec, NestSpec, TinyMatrixSpec, goofspiel_game, load_adjacency, nest_game,
                           tiny_matrix_game)
from teamcfr.neural import TrainConfig
from teamcfr.solver import SolverConfig

REQUIRED = ("experiment", "game", "solver", "eval", "output")

_int, _float, _str = "int", "float", "str"
SCHEMA: dict[str, dict[str, str]] = {
    "experiment": {"seed": _int, "name": _str},
    "game": {"kind": _str, "cards": _int, "team_players": _int, "rounds": _int, "prize_order": _str,
             "width": _int, "height": _int, "pursuers": _int, "exits": "ints", "step_limit": _int,
             "evader_start": _int, "pursuer_starts": "ints", "adjacency": _str,
             "preset": _str, "payoff": "json", "agent_actions": "ints", "adversary_actions": _int,
             "instance_seed": _int},
    "solver": {"mode": _str, "iterations": _int, "traversals": _int, "probe_threshold": _int, "probes": _int,
               "regret_window": _str, "target_scale": _str, "tabular_team_mode": _str, "wall_budget": _float,
               "memory_capacity": _int, "checkpoint_every": _int},
    "network": {"hidden": "ints"},
    "train": {"steps": _int, "batch_size": _int, "lr": _float, "momentum": _float, "optimizer": _str,
              "clip_norm": _float},
    "eval": {"metric": _str, "every": _int, "episodes": _int},
    "output": {"dir": _str, "wall_clock": "bool"},
}


@dataclass
class EvalConfig:
    metric: str = "auto"
    every: int = 1
    episodes: int = 2000


@dataclass
class OutputConfig:
    dir: Path
    wall_clock: bool = True


@dataclass
class ExperimentConfig:
    path: Path
    text: str
    seed: int
    name: str
    game_params: dict
    solver: SolverConfig
    eval: EvalConfig
    output: OutputConfig

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def build_game(self) -> Game:
        return build_game(self.game_params, self.path)


class _Reader:
    """Typed access to a parsed INI file with ``file:line`` diagnostics."""

    def __init__(self, path: Path, text: str):
        self.path = path
        self.lines = text.splitlines()
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def line_of(self, section: str, key: str | None = None) -> int:
        in_section = False
        for i, line in enumerate(self.lines, 1):
            s = line.strip()
            if s.startswith("["):
                in_section = s.strip("[] ").lower() == section
                if in_section and key is None:
                    return i
            elif in_section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
                return i
        return 0

    def fail(self, section: str, key: str | None, message: str):
        where = f"[{section}]" + (f" {key}" if key else "")
        raise ConfigError(f"{self.path}:{self.line_of(section, key)}: {where}: {message}")

    def check_schema(self) -> None:
        for section in REQUIRED:
            if not self.cp.has_section(section):
                raise ConfigError(f"{self.path}: missing required section [{section}]")
        for section in self.cp.sections():
            if section not in SCHEMA:
                self.fail(section, None, f"unknown section (expected one of {sorted(SCHEMA)})")
            for key in self.cp[section]:
                if key not in SCHEMA[section]:
                    self.fail(section, key, f"unknown key (allowed: {', '.join(sorted(SCHEMA[section]))})")

    def get(self, section: str, key: str, default=None):
        if not self.cp.has_section(section) or key not in self.cp[section]:
            return default
        raw = self.cp[section][key].strip()
        kind = SCHEMA[section][key]
        try:
            if kind == _int:
                return int(raw)
            if kind == _float:
                return float(raw)
            if kind == "bool":
                return self.cp[section].getboolean(key)
            if kind == "ints":
                return tuple(int(v) for v in re.split(r"[,\s]+", raw) if v)
            if kind == "json":
                return json.loads(raw)
            return raw
        except (ValueError, json.JSONDecodeError):
            self.fail(section, key, f"expected {kind}, got {raw!r}")

    def require(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"{self.path}:{self.line_of(section)}: [{section}]: missing required key {key!r}")
        return value


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def parse_config(text: str, path: str | Path = "<config>") -> ExperimentConfig:
    path = Path(path)
    r = _Reader(path, text)
    r.check_schema()
    seed = r.require("experiment", "seed")

    game_params = {k: r.get("game", k) for k in r.cp["game"]}
    if "kind" not in game_params:
        r.require("game", "kind")

    defaults = TrainConfig()
    train = TrainConfig(
        steps=r.get("train", "steps", defaults.steps),
        batch_size=r.get("train", "batch_size", defaults.batch_size),
        lr=r.get("train", "lr", defaults.lr),
        momentum=r.get("train", "momentum", defaults.momentum),
        optimizer=r.get("train", "optimizer", defaults.optimizer),
        clip_norm=r.get("train", "clip_norm", defaults.clip_norm),
    )
    if train.optimizer not in ("sgd", "adam"):
        r.fail("train", "optimizer", f"must be sgd or adam, got {train.optimizer!r}")
    metric = r.get("eval", "metric", "auto")
    if metric not in ("auto", "exploitability", "match"):
        r.fail("eval", "metric", f"must be auto, exploitability or match, got {metric!r}")
    evaluation = EvalConfig(metric, r.get("eval", "every", 1), r.get("eval", "episodes", 2000))
    if evaluation.every < 1 or evaluation.episodes < 2:
        r.fail("eval", None, "every must be >= 1 and episodes >= 2")

    out_dir = Path(r.require("output", "dir"))
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    output = OutputConfig(out_dir, r.get("output", "wall_clock", True))

    s = {k: r.get("solver", k) for k in r.cp["solver"]}
    try:
        solver = SolverConfig(
            iterations=s.get("iterations", 100), traversals=s.get("traversals", 100), mode=s.get("mode", "mix"),
            probe_threshold=s.get("probe_threshold", 64), probes=s.get("probes", 1), seed=seed,
            eval_every=evaluation.every, hidden=r.get("network", "hidden", (64, 64, 64)), train=train,
            memory_capacity=s.get("memory_capacity", 2_000_000),
            regret_window=s.get("regret_window", "iteration"), target_scale=s.get("target_scale", "sum"),
            tabular_team_mode=s.get("tabular_team_mode", "joint"), wall_budget=s.get("wall_budget"),
            checkpoint_every=s.get("checkpoint_every", 0), checkpoint_dir=str(out_dir / "checkpoints"),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}:{r.line_of('solver')}: [solver]: {exc}") from None

    cfg = ExperimentConfig(path, text, seed, r.get("experiment", "name", path.stem), game_params, solver,
                           evaluation, output)
    try:
        cfg.build_game()
    except ConfigError as exc:
        raise ConfigError(f"{path}:{r.line_of('game')}: [game]: {exc}") from None
    return cfg


def build_game(params: dict, base: Path | None = None) -> Game:
    kind = params.get("kind")

    def need(key):
        if params.get(key) is None:
            raise ConfigError(f"game kind {kind!r} needs key {key!r}")
        return params[key]

    if kind == "goofspiel":
        return goofspiel_game(GoofspielSpec(need("cards"), need("team_players"), need("rounds"),
                                            params.get("prize_order") or "shuffled"))
    if kind == "nest":
        edges = None
        if params.get("adjacency"):
            adj = Path(params["adjacency"])
            if base is not None and not adj.is_absolute():
                adj = base.parent / adj
            edges = load_adjacency(adj)
        ps = params.get("pursuer_starts")
        return nest_game(NestSpec(need("width"), need("height"), need("pursuers"), params.get("exits"),
                                  params.get("step_limit") or 3, params.get("evader_start"),
                                  tuple(ps) if ps else None, edges))
    if kind == "tiny":
        preset = params.get("preset") or ("explicit" if params.get("payoff") is not None else "matching_pennies")
        if preset == "matching_pennies":
            return tiny_matrix_game(TinyMatrixSpec.matching_pennies())
        if preset == "random":
            rng = np.random.default_rng(params.get("instance_seed") or 0)
            return tiny_matrix_game(TinyMatrixSpec.random(rng, tuple(params.get("agent_actions") or (2, 2)),
                                                          params.get("adversary_actions") or 2))
        if preset == "explicit":
            return tiny_matrix_game(TinyMatrixSpec(np.asarray(need("payoff"), dtype=np.float64)))
        raise ConfigError(f"unknown tiny preset {preset!r}")
    raise ConfigError(f"unknown game kind {kind!r} (goofspiel, nest or tiny)")
