"""Run an experiment config: solve, evaluate, and write CSV, JSON and checkpoints."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path
from typing import TextIO

import numpy as np

from teamcfr.config import ExperimentConfig, load_config
from teamcfr.errors import ConfigError, SizeCapExceeded
from teamcfr.evaluation import baseline_eval, match_eval
from teamcfr.game import Game, Player
from teamcfr.neural import NET_MAGIC, NetSource, load_nets
from teamcfr.regret import TABLE_MAGIC, load_tables
from teamcfr.sampling import TableSource
from teamcfr.solver import UniformSource, solve, source_policy
from teamcfr.tabular import exploitability
from teamcfr.tree import GameTree

CSV_HEADER = "iter,seconds,metric,value"
METRICS = ("exploitability", "match_mean", "match_se", "loss_regret", "loss_strategy")
EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_FAIL = 0, 2, 3, 1


def _eval_seed(seed: int, t: int) -> int:
    return int(np.random.SeedSequence([seed, t, 0xE7A1]).generate_state(1)[0])


def make_evaluator(cfg: ExperimentConfig, game: Game):
    """Exact exploitability when the tree fits (or is requested), else match play vs a uniform adversary."""
    tree = None
    if cfg.eval.metric in ("auto", "exploitability"):
        try:
            tree = GameTree(game)
        except SizeCapExceeded as exc:
            if cfg.eval.metric == "exploitability":
                raise ConfigError(f"[eval] metric = exploitability but {exc}") from None
    if tree is not None:
        def evaluate(t, solver):
            return {"exploitability": exploitability(tree, source_policy(solver.average_source()))}
    else:
        def evaluate(t, solver):
            res = match_eval(solver.average_source(), UniformSource(), game, cfg.eval.episodes,
                             _eval_seed(cfg.seed, t))
            return {"match_mean": res.mean, "match_se": res.se}
    return evaluate, tree


def format_row(t: int, seconds: float, metric: str, value: float) -> str:
    return f"{t},{seconds:.3f},{metric},{value!r}"


def run(config_path: str | Path, out: TextIO | None = None) -> int:
    """Solve and evaluate per config; returns the exit status."""
    out = out or sys.stdout
    cfg = load_config(config_path)
    game = cfg.build_game()
    evaluate, tree = make_evaluator(cfg, game)
    out_dir = cfg.output.dir
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = f"config_sha256={cfg.sha256} seed={cfg.seed}"

    baseline = None
    if tree is None:
        b = baseline_eval(game, cfg.eval.episodes, _eval_seed(cfg.seed, 0))
        baseline = {"mean": b.mean, "se": b.se, "episodes": b.episodes}

    csv_path = out_dir / "metrics.csv"
    start = time.perf_counter()
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# {stamp}\n{CSV_HEADER}\n")

        def progress(t, elapsed, rows):
            seconds = elapsed if cfg.output.wall_clock else 0.0
            for metric in METRICS:
                if metric in rows:
                    fh.write(format_row(t, seconds, metric, float(rows[metric])) + "\n")
            fh.flush()
            shown = " ".join(f"{k}={rows[k]:.5g}" for k in METRICS if k in rows)
            if shown:
                print(f"iter {t:5d}  {elapsed:8.1f}s  {shown}", file=out, flush=True)

        result = solve(game, cfg.solver, evaluate, progress=progress)

    ckpt = out_dir / "final.ckpt"
    result.solver.save(ckpt, {"config_sha256": cfg.sha256, "seed": cfg.seed})
    final = {}
    for metric in METRICS:
        _, values = result.report.series(metric)
        if len(values):
            final[metric] = float(values[-1])
    summary = {
        "config_sha256": cfg.sha256, "seed": cfg.seed, "name": cfg.name, "game": game.name,
        "mode": cfg.solver.mode, "iterations": result.iterations, "stopped_early": result.stopped_early,
        "final": final, "baseline": baseline, "metrics_csv": csv_path.name, "checkpoint": ckpt.name,
    }
    if cfg.output.wall_clock:
        summary["elapsed_seconds"] = time.perf_counter() - start
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if result.stopped_early:
        print(f"wall budget of {cfg.solver.wall_budget}s exceeded after {result.iterations} iterations; "
              f"partial results written to {out_dir}", file=out)
        return EXIT_BUDGET
    return EXIT_OK


def load_checkpoint(path: str | Path, game: Game):
    """Average-strategy source and metadata from a TNET1 or TCFR1 checkpoint."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
    if magic == NET_MAGIC:
        nets, meta = load_nets(path, game)
        return NetSource(nets["adversary_strategy"], nets["team_strategy"], meta["mode"]), meta
    if magic == TABLE_MAGIC:
        tables, meta = load_tables(path)
        return TableSource(tables["adversary_average"], tables["team_average"], meta["team_mode"]), meta
    raise ConfigError(f"{path}: unknown checkpoint format {magic!r}")


def evaluate_checkpoint(config_path: str | Path, ckpt: str | Path, episodes: int | None = None) -> dict:
    cfg = load_config(config_path)
    game = cfg.build_game()
    source, meta = load_checkpoint(ckpt, game)
    n = episodes or cfg.eval.episodes
    res = match_eval(source, UniformSource(), game, n, _eval_seed(cfg.seed, 1))
    base = baseline_eval(game, n, _eval_seed(cfg.seed, 0))
    diff_se = float(np.hypot(res.se, base.se))
    return {"checkpoint": str(ckpt), "seed": cfg.seed, "config_sha256": cfg.sha256, "episodes": n,
            "team_vs_uniform": {"mean": res.mean, "se": res.se},
            "uniform_vs_uniform": {"mean": base.mean, "se": base.se},
            "advantage_in_se": (res.mean - base.mean) / diff_se if diff_se > 0 else float("inf"),
            "checkpoint_meta": meta}


def best_response_report(config_path: str | Path, ckpt: str | Path) -> dict:
    cfg = load_config(config_path)
    game = cfg.build_game()
    source, meta = load_checkpoint(ckpt, game)
    tree = GameTree(game)
    profile = tree.profile_from(source_policy(source))
    _, adv_gain = tree.best_response(profile, Player.ADVERSARY)
    _, team_gain = tree.best_response(profile, Player.TEAM)
    return {"checkpoint": str(ckpt), "seed": cfg.seed, "config_sha256": cfg.sha256,
            "profile_value": tree.game_value(profile), "adversary_best_response_value": adv_gain,
            "team_best_response_value": team_gain, "team_worst_case_value": -adv_gain,
            "exploitability": 0.5 * (adv_gain + team_gain), "checkpoint_meta": meta}
