"""Product-form decomposition of team regrets.

The team's cumulative regret for a joint action is modelled as the product of
per-agent cumulative regrets.  With non-negative factors, regret matching on
the joint tensor gives exactly the product of the agents' individual
regret-matching strategies, so the team can act by sampling each agent
independently.  This module holds that algebra, a checker for it, and brute
force max-min oracles for one-shot matrix games.
"""

from __future__ import annotations

import itertools
from math import comb, prod
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from teamcfr.errors import ContractViolation, SizeCapExceeded
from teamcfr.regret import regret_matching


def _profile(profile: Sequence) -> list[np.ndarray]:
    vecs = [np.asarray(r, dtype=np.float64) for r in profile]
    if not vecs:
        raise ContractViolation("empty regret profile")
    for v in vecs:
        if v.ndim != 1 or v.size == 0 or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ContractViolation(f"agent regrets must be finite, non-negative vectors: {v}")
    return vecs


def compose_joint_regret(profile: Sequence) -> np.ndarray:
    """Joint regret tensor with entry ``prod_i R_i[a_i]``."""
    vecs = _profile(profile)
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return out


def joint_strategy(tensor) -> np.ndarray:
    """Regret matching over all joint actions, keeping the tensor's shape."""
    t = np.asarray(tensor, dtype=np.float64)
    return regret_matching(t.ravel()).reshape(t.shape)


def individual_strategies(profile: Sequence) -> list[np.ndarray]:
    return [regret_matching(v) for v in _profile(profile)]


def check_strategy_consistency(profile: Sequence) -> float:
    """Largest gap between the joint strategy and the product of agent strategies.

    An agent with an all-zero vector is treated as uniform on both sides.
    Each vector is divided by its max first: that scales the joint tensor by
    one positive constant (regret matching ignores it) and keeps the product
    of tiny regrets from underflowing to zero.
    """
    vecs = [v / v.max() if v.max() > 0 else v for v in _profile(profile)]
    lhs = joint_strategy(compose_joint_regret(vecs))
    rhs = compose_joint_regret(individual_strategies(vecs))
    if not any(v.sum() > 0 for v in vecs) or all(v.sum() > 0 for v in vecs):
        return float(np.max(np.abs(lhs - rhs)))
    # some agents are all-zero: the joint tensor vanishes and falls back to uniform,
    # which only matches the product when the zero agents are treated as uniform too
    filled = [v if v.sum() > 0 else np.ones_like(v) for v in vecs]
    lhs = joint_strategy(compose_joint_regret(filled))
    return float(np.max(np.abs(lhs - rhs)))


def is_product_distribution(joint, tol: float = 1e-9) -> bool:
    """True if a joint distribution equals the product of its own marginals."""
    j = np.asarray(joint, dtype=np.float64)
    axes = range(j.ndim)
    marginals = [j.sum(axis=tuple(k for k in axes if k != i)) for i in axes]
    return bool(np.max(np.abs(compose_joint_regret(marginals) - j)) <= tol)


def fit_product_form(target, factors: Sequence | None = None, sweeps: int = 10) -> list[np.ndarray]:
    """Non-negative rank-one fit ``target ~ outer(R_1, ..., R_n)`` by alternating least squares.

    Warm-starts from ``factors`` when they are non-zero; otherwise starts from
    the target's marginal sums.
    """
    t = np.asarray(target, dtype=np.float64)
    n = t.ndim
    if not np.any(t > 0):
        return [np.zeros(k) for k in t.shape]
    axes = range(n)
    if factors is None or any(not np.any(f > 0) for f in factors):
        factors = [t.sum(axis=tuple(k for k in axes if k != i)) for i in axes]
        scale = (t.sum() / max(prod(f.sum() for f in factors), 1e-300)) ** (1.0 / n)
        factors = [f * scale for f in factors]
    factors = [np.array(f, dtype=np.float64) for f in factors]
    for _ in range(sweeps):
        for i in axes:
            others = [factors[j] for j in axes if j != i]
            denom = prod(float(f @ f) for f in others)
            if denom <= 0:
                return [np.zeros(k) for k in t.shape]
            proj = np.moveaxis(t, i, 0)
            for f in others:
                proj = np.tensordot(proj, f, axes=([1], [0]))
            factors[i] = np.maximum(proj / denom, 0.0)
    return factors


# -- max-min oracles for one-shot matrix games -----------------------------------

def simplex_grid(k: int, resolution: float) -> np.ndarray:
    """All points of the (k-1)-simplex whose coordinates are multiples of ``resolution``."""
    steps = int(round(1.0 / resolution))
    if not np.isclose(steps * resolution, 1.0):
        raise ContractViolation(f"resolution {resolution} must divide 1")
    pts = [c for c in itertools.product(range(steps + 1), repeat=k - 1) if sum(c) <= steps]
    arr = np.array([list(c) + [steps - sum(c)] for c in pts], dtype=np.float64)
    return arr / steps


def _worst_case(joint: np.ndarray, payoff: np.ndarray) -> np.ndarray:
    """Team value against a best-responding adversary, for a batch of joint strategies."""
    flat = payoff.reshape(-1, payoff.shape[-1])
    return (joint.reshape(joint.shape[0], -1) @ flat).min(axis=1)


def decomposable_maxmin_oracle(payoff, resolution: float = 0.01, budget: int = 5_000_000,
                               refine: bool = True) -> tuple[list[np.ndarray], float]:
    """Best product-form team strategy against a best-responding adversary.

    Brute force over a simplex grid per agent, then coordinate-wise refinement
    at a tenth of the step.  Returns ``(per-agent strategies, team value)``.
    """
    payoff = np.asarray(payoff, dtype=np.float64)
    sizes = payoff.shape[:-1]
    total = grid_size(sizes, resolution)
    if total > budget:
        raise SizeCapExceeded(f"{total} grid points exceed the budget of {budget}", total)
    grids = [simplex_grid(k, resolution) for k in sizes]

    best_val, best = -np.inf, None
    # one first-agent grid point at a time against every combination of the others
    rest = list(itertools.product(*(range(len(g)) for g in grids[1:]))) if len(grids) > 1 else [()]
    rest_joint = np.array([compose_joint_regret([grids[j + 1][i] for j, i in enumerate(idx)]).ravel()
                           if idx else np.ones(1) for idx in rest])
    flat = payoff.reshape(sizes[0], -1, payoff.shape[-1])
    for p0 in grids[0]:
        m = np.tensordot(p0, flat, axes=([0], [0]))          # (rest joint, adversary)
        vals = (rest_joint @ m).min(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best = [p0] + [grids[j + 1][i] for j, i in enumerate(rest[k])]

    if refine:
        best, best_val = _refine(payoff, best, best_val, resolution)
    return best, best_val


def _refine(payoff, strategies, value, resolution, sweeps: int = 3):
    fine = resolution / 10.0
    strategies = [s.copy() for s in strategies]
    for _ in range(sweeps):
        improved = False
        for i, s in enumerate(strategies):
            k = len(s)
            offsets = np.array(list(itertools.product(np.arange(-10, 11) * fine, repeat=k - 1)))
            cand = np.column_stack([s[:-1] + offsets, np.zeros(len(offsets))])
            cand[:, -1] = 1.0 - cand[:, :-1].sum(axis=1)
            cand = cand[np.all(cand >= -1e-12, axis=1)]
            cand = np.clip(cand, 0.0, 1.0)
            vals = np.array([team_value(payoff, strategies[:i] + [c] + strategies[i + 1:]) for c in cand])
            j = int(np.argmax(vals))
            if vals[j] > value + 1e-15:
                value, strategies[i], improved = float(vals[j]), cand[j], True
        if not improved:
            break
    return strategies, value


def team_value(payoff, agent_strategies: Sequence) -> float:
    """Team value of a product strategy against the adversary's best response."""
    payoff = np.asarray(payoff, dtype=np.float64)
    joint = compose_joint_regret(agent_strategies)
    return float(_worst_case(joint[None], payoff)[0])


def joint_maxmin_oracle(payoff) -> tuple[np.ndarray, float]:
    """Unrestricted (correlated) team max-min strategy by linear programming."""
    payoff = np.asarray(payoff, dtype=np.float64)
    flat = payoff.reshape(-1, payoff.shape[-1])
    n_joint, n_adv = flat.shape
    # variables: x (joint strategy), v; maximise v s.t. flat^T x >= v
    c = np.zeros(n_joint + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-flat.T, np.ones((n_adv, 1))])
    a_eq = np.hstack([np.ones((1, n_joint)), np.zeros((1, 1))])
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n_adv), A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * n_joint + [(None, None)], method="highs")
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    x = np.clip(res.x[:-1], 0.0, None)
    return (x / x.sum()).reshape(payoff.shape[:-1]), float(res.x[-1])


def grid_size(sizes: Sequence[int], resolution: float) -> int:
    steps = int(round(1.0 / resolution))
    return prod(comb(steps + k - 1, k - 1) for k in sizes)
