"""Self-check suites run by ``teamcfr verify``.

Each suite compares the implementation against an independent oracle and
returns a :class:`Check`; the CLI exits nonzero if any check fails.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from teamcfr.decomposition import check_strategy_consistency
from teamcfr.game import Player
from teamcfr.games import TinyMatrixSpec, tiny_matrix_game
from teamcfr.neural import MLP, NetSpec, RegretNet, SampleMemory, TrainConfig, fit, gradient_check, grouped_loss
from teamcfr.regret import RegretTable, regret_matching
from teamcfr.sampling import ProbeTraverser, TableSource, traversal_rng


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} {self.value:.3e} (limit {self.threshold:.1e}) {self.detail}"


def random_profile(rng: np.random.Generator) -> list[np.ndarray]:
    """Random non-negative regret vectors: 2-4 agents, 1-5 actions, some zeros and all-zero agents."""
    n = int(rng.integers(2, 5))
    prof = []
    for _ in range(n):
        k = int(rng.integers(1, 6))
        v = rng.exponential(size=k) * rng.choice([1e-3, 1.0, 1e3])
        v[rng.random(k) < 0.3] = 0.0
        if rng.random() < 0.05:
            v[:] = 0.0
        prof.append(v)
    return prof


def consistency_suite(n_profiles: int = 10_000, seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = max(check_strategy_consistency(random_profile(rng)) for _ in range(n_profiles))
    return Check("product_decomposition", worst, 1e-12, worst <= 1e-12,
                 f"{n_profiles} profiles in {time.perf_counter() - start:.1f}s")


def net_equivalence_suite(n_nets: int = 100, seed: int = 0) -> Check:
    """Regret matching over mixed joint outputs vs the product of per-agent regret matching."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_nets):
        sizes = tuple(int(s) for s in rng.integers(1, 4, size=int(rng.integers(1, 4))))
        spec = TinyMatrixSpec(rng.uniform(-1, 1, size=sizes + (2,)))
        game = tiny_matrix_game(spec)
        net = RegretNet(game, hidden=(16, 16), seed=int(rng.integers(2**31)))
        net.fresh = False
        state = game.initial_state()
        key, legal = state.infoset_key(), state.legal_actions()
        joints = list(itertools.product(*legal))
        joint_rm = regret_matching(np.array([net.forward_joint(key, j) for j in joints]))
        agent_rm = [regret_matching(net.values(key, i, a)) for i, a in enumerate(legal)]
        prod = np.array([np.prod([agent_rm[i][legal[i].index(a)] for i, a in enumerate(j)]) for j in joints])
        worst = max(worst, float(np.max(np.abs(joint_rm - prod))))
    return Check("mixing_net_equivalence", worst, 1e-9, worst <= 1e-9, f"{n_nets} nets")


def gradient_suite(seed: int = 0) -> Check:
    rng = np.random.default_rng(seed)
    mlp = MLP(NetSpec(10, (64, 64, 64), "softplus", seed))
    x = rng.normal(size=(2 * 32, 10))
    y = rng.uniform(0, 3, size=32)
    res = gradient_check(mlp, x, y, group=2, n_probe=100)
    return Check("gradient_through_product", res.max_rel_error, 1e-4, res.max_rel_error <= 1e-4,
                 f"{res.probed} params, {res.kinks_skipped} kink crossings skipped")


def representability_suite(n_profiles: int = 20, steps: int = 10_000, seed: int = 0,
                           cfg: TrainConfig | None = None) -> Check:
    """Regress the mixing product onto product-form targets ``R_1(a_1) R_2(a_2)``.

    Each profile is one infoset (random features) with 3 actions per agent;
    inputs mirror the agent encoding (features, agent one-hot, action one-hot).
    """
    rng = np.random.default_rng(seed)
    n_feat, n_agents, n_act = 4, 2, 3
    xs, ys = [], []
    for _ in range(n_profiles):
        regrets = [rng.random(n_act) * 2 for _ in range(n_agents)]
        feat = rng.normal(size=n_feat)
        for joint in itertools.product(range(n_act), repeat=n_agents):
            for i, a in enumerate(joint):
                row = np.zeros(n_feat + n_agents + n_act)
                row[:n_feat] = feat
                row[n_feat + i] = 1.0
                row[n_feat + n_agents + a] = 1.0
                xs.append(row)
            ys.append(np.prod([regrets[i][a] for i, a in enumerate(joint)]))
    x, y = np.array(xs), np.array(ys)
    mlp = MLP(NetSpec(x.shape[1], (64, 64, 64), "softplus", seed + 1))
    cfg = cfg or TrainConfig(steps=steps)
    trace = fit(mlp, x, y, n_agents, cfg)
    mse = grouped_loss(mlp, x, y, n_agents)
    return Check("mixing_representability", mse, 1e-3, mse <= 1e-3,
                 f"{n_profiles} profiles, {cfg.steps} steps ({cfg.optimizer}), start {trace[0]:.3g}")


def exact_tiny_regrets(payoff: np.ndarray, joint: np.ndarray, adversary: np.ndarray):
    """Closed-form counterfactual regrets of a one-shot team-vs-adversary matrix game.

    ``joint`` is the team's distribution over joint actions in product order.
    Returns ``(team regrets per joint action, adversary regrets)``.
    """
    flat = payoff.reshape(-1, payoff.shape[-1])
    team_v = flat @ adversary
    adv_v = -(joint @ flat)
    return team_v - joint @ team_v, adv_v - adversary @ adv_v


def probe_bias_suite(traversals: int = 100_000, seed: int = 0) -> Check:
    """Mean sampled regret vs the exact regret, in standard errors, on a fixed-strategy tiny game."""
    rng = np.random.default_rng(seed)
    payoff = rng.uniform(-1, 1, size=(2, 3, 2))
    game = tiny_matrix_game(TinyMatrixSpec(payoff))
    root = game.initial_state()
    key = root.infoset_key()
    adv_key = root.apply(root.joint_actions()[0]).infoset_key()
    team_tab, adv_tab = RegretTable(), RegretTable()
    team_tab[key] = rng.uniform(0, 1, size=6)
    adv_tab[adv_key] = rng.uniform(0, 1, size=2)
    source = TableSource(adv_tab, team_tab, "joint")
    exact_team, exact_adv = exact_tiny_regrets(payoff, regret_matching(team_tab[key]),
                                               regret_matching(adv_tab[adv_key]))

    team_samples = np.empty((traversals, 6))
    adv_samples = np.empty((traversals, 2))
    for k in range(traversals):
        tr = ProbeTraverser(source, traversal_rng(seed, 1, k), 1, probe_threshold=64)
        tr.traverse(root, Player.TEAM)
        tr.traverse(root, Player.ADVERSARY)
        team_rec, adv_rec = tr.regret_records
        team_samples[k] = team_rec.values
        adv_samples[k] = adv_rec.values
    worst = 0.0
    for samples, exact in ((team_samples, exact_team), (adv_samples, exact_adv)):
        se = samples.std(axis=0, ddof=1) / np.sqrt(traversals)
        z = np.abs(samples.mean(axis=0) - exact) / np.where(se > 0, se, np.inf)
        worst = max(worst, float(np.max(z)))
    return Check("probe_unbiasedness", worst, 3.0, worst <= 3.0, f"max |z| over {traversals} traversals")


def reservoir_suite(inserts: int = 100_000, capacity: int = 1000, runs: int = 20, bins: int = 100,
                    seed: int = 0) -> Check:
    """Chi-square test of retention frequency by insertion position."""
    counts = np.zeros(bins)
    for r in range(runs):
        mem = SampleMemory(capacity, seed=seed + r)
        for i in range(inserts):
            mem.insert(i)
        counts += np.bincount(np.array(mem.records) * bins // inserts, minlength=bins)
    p = float(stats.chisquare(counts).pvalue)
    return Check("reservoir_uniformity", p, 0.01, p > 0.01, f"chi-square p over {runs}x{inserts} inserts")


SUITES: dict[str, Callable[[], Check]] = {
    "consistency": consistency_suite,
    "net_equivalence": net_equivalence_suite,
    "gradient": gradient_suite,
    "representability": representability_suite,
    "probe": probe_bias_suite,
    "reservoir": reservoir_suite,
}


def run_all(quick: bool = False) -> list[Check]:
    if quick:
        return [consistency_suite(1000), net_equivalence_suite(20), gradient_suite(),
                representability_suite(n_profiles=5, steps=6000), probe_bias_suite(10_000), reservoir_suite(runs=5)]
    return [suite() for suite in SUITES.values()]
