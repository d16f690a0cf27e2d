"""Numpy feed-forward networks for regret and average-strategy estimation.

The team's regret network is a single agent network shared by all agents
(the agent index is part of its input) followed by a parameter-free mixing
layer that multiplies the agents' outputs::

    R_joint(I, (a_1..a_n)) = prod_i R_agent(I, i, a_i)

Outputs pass through a softplus so every factor is non-negative.  Training
regresses the product onto joint-action targets; the gradient reaches the
shared parameters through every factor of the product.

Everything is float64 with hand-written backpropagation.
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from teamcfr.errors import ContractViolation, TrainingDiverged
from teamcfr.game import Game, InfoSetKey
from teamcfr.regret import regret_matching
from teamcfr.tree import product_joint

NET_MAGIC = b"TNET1"


@dataclass(frozen=True)
class NetSpec:
    input_size: int
    hidden: tuple[int, ...] = (64, 64, 64)
    output: str = "softplus"    # non-negative head; "linear" for checks
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_size < 1 or any(h < 1 for h in self.hidden):
            raise ContractViolation("layer widths must be >= 1")
        if self.output not in ("softplus", "linear"):
            raise ContractViolation(f"unknown output map {self.output!r}")


@dataclass
class TrainConfig:
    steps: int = 1000
    batch_size: int = 256
    lr: float = 1e-3
    momentum: float = 0.9
    optimizer: str = "sgd"          # or "adam"
    clip_norm: float | None = None
    min_lr: float = 1e-10
    eval_samples: int = 4096
    seed: int = 0


class MLP:
    """Fully connected ReLU network with a scalar output."""

    def __init__(self, spec: NetSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        sizes = [spec.input_size, *spec.hidden, 1]
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.params.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.spec = self.spec
        other.params = [p.copy() for p in self.params]
        return other

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for p in self.params:
            p[...] = flat[pos: pos + p.size].reshape(p.shape)
            pos += p.size

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = np.maximum(z, 0.0)
                acts.append(h)
            else:
                h = z[:, 0]
        z_out = h
        y = np.logaddexp(0.0, z_out) if self.spec.output == "softplus" else z_out
        if keep:
            return y, (acts, z_out)
        return y

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def relu_pattern(self, x: np.ndarray) -> np.ndarray:
        """Signs of every hidden pre-activation, flattened (used to detect kinks)."""
        _, (acts, _) = self.forward(x, keep=True)
        return np.concatenate([(a > 0).ravel() for a in acts[1:]]) if len(acts) > 1 else np.zeros(0, bool)

    def backward(self, cache, dy: np.ndarray) -> list[np.ndarray]:
        acts, z_out = cache
        dz = dy * _sigmoid(z_out) if self.spec.output == "softplus" else dy
        grads = [None] * len(self.params)
        delta = dz[:, None]
        n_layers = len(self.params) // 2
        for k in reversed(range(n_layers)):
            h = acts[k]
            grads[2 * k] = h.T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.params[2 * k].T) * (acts[k] > 0)
        return grads


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


# -- grouped-product regression (shared by every net kind) ----------------------

def grouped_predict(mlp: MLP, x: np.ndarray, group: int) -> np.ndarray:
    """Product of the outputs of consecutive blocks of ``group`` rows, in row order."""
    f = mlp(x).reshape(-1, group)
    out = f[:, 0].copy()
    for i in range(1, group):
        out *= f[:, i]
    return out


def _exclusive_products(f: np.ndarray) -> np.ndarray:
    """For each column i, the product of all other columns (no division)."""
    n = f.shape[1]
    prefix = np.ones_like(f)
    suffix = np.ones_like(f)
    for i in range(1, n):
        prefix[:, i] = prefix[:, i - 1] * f[:, i - 1]
        suffix[:, n - 1 - i] = suffix[:, n - i] * f[:, n - i]
    return prefix * suffix


def loss_and_grad(mlp: MLP, x: np.ndarray, y: np.ndarray, group: int = 1):
    """Mean squared error of the grouped product and its parameter gradient."""
    out, cache = mlp.forward(x, keep=True)
    f = out.reshape(-1, group)
    pred = f.prod(axis=1) if group > 1 else f[:, 0]
    err = pred - y
    loss = float(np.mean(err ** 2))
    dpred = 2.0 * err / len(y)
    df = dpred[:, None] * _exclusive_products(f) if group > 1 else dpred[:, None]
    return loss, mlp.backward(cache, df.ravel())


def grouped_loss(mlp: MLP, x: np.ndarray, y: np.ndarray, group: int = 1) -> float:
    return float(np.mean((grouped_predict(mlp, x, group) - y) ** 2))


def fit(mlp: MLP, x: np.ndarray, y: np.ndarray, group: int, cfg: TrainConfig) -> list[float]:
    """Mini-batch training with an epoch-level monotonicity guard.

    After each epoch the loss on a fixed evaluation subset is compared with
    the previous epoch; on an increase the epoch is rolled back and the step
    size halved, so the returned per-epoch trace never increases.  Accepted
    epochs grow the step again by 10%, up to ``cfg.lr``.
    """
    n = len(y)
    if n == 0:
        raise ContractViolation("cannot train on an empty memory")
    rng = np.random.default_rng(cfg.seed)
    xg = x.reshape(n, group, -1)
    eval_idx = np.arange(n) if n <= cfg.eval_samples else rng.choice(n, cfg.eval_samples, replace=False)
    x_eval = xg[eval_idx].reshape(-1, x.shape[1])
    y_eval = y[eval_idx]

    def eval_loss() -> float:
        val = grouped_loss(mlp, x_eval, y_eval, group)
        if not math.isfinite(val):
            raise TrainingDiverged(
                f"non-finite loss (lr={lr:g}, |y|max={np.abs(y).max():.3g}, params max="
                f"{max(np.abs(p).max() for p in mlp.params):.3g})")
        return val

    lr = cfg.lr
    state = [np.zeros_like(p) for p in mlp.params]
    state2 = [np.zeros_like(p) for p in mlp.params]
    adam_t = 0
    batch = min(cfg.batch_size, n)
    epoch_steps = max(1, math.ceil(n / batch))
    trace = [eval_loss()]
    steps_done = 0
    while steps_done < cfg.steps and lr >= cfg.min_lr:
        saved = [p.copy() for p in mlp.params]
        for _ in range(min(epoch_steps, cfg.steps - steps_done)):
            idx = rng.integers(n, size=batch) if batch < n else np.arange(n)
            _, grads = loss_and_grad(mlp, xg[idx].reshape(-1, x.shape[1]), y[idx], group)
            if cfg.clip_norm:
                norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads))
                if norm > cfg.clip_norm:
                    grads = [g * (cfg.clip_norm / norm) for g in grads]
            if cfg.optimizer == "adam":
                adam_t += 1
                for p, g, m, v in zip(mlp.params, grads, state, state2):
                    m *= 0.9
                    m += 0.1 * g
                    v *= 0.999
                    v += 0.001 * g * g
                    p -= lr * (m / (1 - 0.9 ** adam_t)) / (np.sqrt(v / (1 - 0.999 ** adam_t)) + 1e-8)
            else:
                for p, g, vel in zip(mlp.params, grads, state):
                    vel *= cfg.momentum
                    vel -= lr * g
                    p += vel
            steps_done += 1
        current = grouped_loss(mlp, x_eval, y_eval, group)
        if not math.isfinite(current) or current > trace[-1]:
            for p, s in zip(mlp.params, saved):
                p[...] = s
            # momentum from the rejected epoch would repeat the overshoot
            state = [np.zeros_like(p) for p in mlp.params]
            state2 = [np.zeros_like(p) for p in mlp.params]
            adam_t = 0
            lr *= 0.5
            if not math.isfinite(current) and lr < cfg.min_lr:
                eval_loss()
            continue
        trace.append(current)
        lr = min(lr * 1.1, cfg.lr)
    return trace


# -- action-value networks --------------------------------------------------------

class ActionNet:
    """Non-negative value per (infoset, agent, action), or per joint action.

    A fresh net returns exactly zero everywhere (so the first strategies are
    uniform); it switches to the parametric function at its first training.
    """

    def __init__(self, game: Game, spec: NetSpec | None = None, joint: bool = False, hidden=(64, 64, 64),
                 seed: int = 0):
        self.game = game
        self.joint = joint
        width = self.joint_input_size(game) if joint else game.encoding_size
        self.spec = spec or NetSpec(width, tuple(hidden), "softplus", seed)
        if self.spec.input_size != width:
            raise ContractViolation(f"net input width {self.spec.input_size} != encoding width {width}")
        self.mlp = MLP(self.spec)
        self.fresh = True

    @staticmethod
    def joint_input_size(game: Game) -> int:
        return game.feature_size + game.n_agents * game.num_agent_actions

    def copy(self) -> "ActionNet":
        other = ActionNet.__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.mlp = self.mlp.copy()
        return other

    # input rows ---------------------------------------------------------------

    def agent_rows(self, key: InfoSetKey, agent: int, actions: Sequence[int]) -> np.ndarray:
        return self.game.encode_batch(key, agent, actions)

    def joint_rows(self, key: InfoSetKey, joints: Sequence[Sequence[int]]) -> np.ndarray:
        game = self.game
        f, a = game.feature_size, game.num_agent_actions
        out = np.zeros((len(joints), f + game.n_agents * a))
        out[:, :f] = game.infoset_features(key)
        j = np.asarray(joints, dtype=int).reshape(len(joints), game.n_agents)
        rows = np.arange(len(joints))
        for i in range(game.n_agents):
            out[rows, f + i * a + j[:, i]] = 1.0
        return out

    def mix_rows(self, key: InfoSetKey, joints: Sequence[Sequence[int]]) -> np.ndarray:
        """``n`` consecutive agent rows per joint action (input of the mixing product)."""
        game = self.game
        n = game.n_agents
        j = np.asarray(joints, dtype=int).reshape(len(joints), n)
        out = np.zeros((len(joints), n, game.encoding_size))
        for i in range(n):
            out[:, i, :] = game.encode_batch(key, i, j[:, i])
        return out.reshape(len(joints) * n, -1)

    # evaluation ---------------------------------------------------------------

    def values(self, key: InfoSetKey, agent: int, actions: Sequence[int]) -> np.ndarray:
        if self.fresh:
            return np.zeros(len(actions))
        return self.mlp(self.agent_rows(key, agent, actions))

    def joint_values(self, key: InfoSetKey, joints: Sequence[Sequence[int]]) -> np.ndarray:
        if self.fresh:
            return np.zeros(len(joints))
        return self.mlp(self.joint_rows(key, joints))


class RegretNet(ActionNet):
    """Shared agent network with a multiplicative mixing layer."""

    def forward_agent(self, key: InfoSetKey, agent: int, action: int) -> float:
        return float(self.values(key, agent, [action])[0])

    def forward_joint(self, key: InfoSetKey, joint: Sequence[int]) -> float:
        out = 1.0
        for i, a in enumerate(joint):
            out *= self.forward_agent(key, i, a)
        return out

    def mixed_values(self, key: InfoSetKey, joints: Sequence[Sequence[int]]) -> np.ndarray:
        """Joint values for many joint actions via the mixing product (batched)."""
        if self.fresh:
            return np.zeros(len(joints))
        return grouped_predict(self.mlp, self.mix_rows(key, joints), self.game.n_agents)

    def agent_strategies(self, key: InfoSetKey, legal: Sequence[Sequence[int]]) -> list[np.ndarray]:
        return [regret_matching(self.values(key, i, a)) for i, a in enumerate(legal)]


class JointRegretNet(ActionNet):
    """One network over whole joint actions (baseline without the mixing layer)."""

    def __init__(self, game: Game, spec: NetSpec | None = None, joint: bool = True, hidden=(64, 64, 64),
                 seed: int = 0):
        super().__init__(game, spec, True, hidden, seed)


class AdversaryRegretNet(ActionNet):
    """Plain regret net for the adversary: (infoset, action) -> regret >= 0."""

    def action_values(self, key: InfoSetKey, actions: Sequence[int]) -> np.ndarray:
        return self.values(key, 0, actions)


class StrategyNet(ActionNet):
    """Cumulative strategy scores; normalising over legal actions gives the average strategy."""

    def probs(self, key: InfoSetKey, agent: int, actions: Sequence[int]) -> np.ndarray:
        return regret_matching(self.values(key, agent, actions))


# -- sample memory -------------------------------------------------------------------

class SampleMemory:
    """Fixed-capacity reservoir: after ``n`` inserts each one is kept with probability cap/n."""

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ContractViolation("memory capacity must be >= 1")
        self.capacity = capacity
        self.records: list = []
        self.seen = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.records)

    def insert(self, record) -> None:
        if len(self.records) < self.capacity:
            self.records.append(record)
        else:
            j = int(self.rng.integers(self.seen + 1))
            if j < self.capacity:
                self.records[j] = record
        self.seen += 1

    reservoir_insert = insert

    def extend(self, records) -> None:
        for r in records:
            self.insert(r)

    def since(self, iteration: int) -> list:
        return [r for r in self.records if r.iteration >= iteration]


def reservoir_insert(memory: SampleMemory, record) -> SampleMemory:
    memory.insert(record)
    return memory


# -- training on traversal records ----------------------------------------------------

def regret_samples(net: ActionNet, records, kind: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Inputs, warm-start targets ``(R_old + r)^+`` and group size for regret records.

    ``kind`` is ``"adversary"``, ``"mix"`` (team, mixing product) or ``"joint"``.
    """
    xs, ys = [], []
    for rec in records:
        if kind == "adversary":
            x = net.agent_rows(rec.key, 0, rec.actions)
            old = net.values(rec.key, 0, rec.actions)
        elif kind == "mix":
            x = net.mix_rows(rec.key, rec.actions)
            old = net.mixed_values(rec.key, rec.actions)
        else:
            x = net.joint_rows(rec.key, rec.actions)
            old = net.joint_values(rec.key, rec.actions)
        xs.append(x)
        ys.append(np.maximum(old + rec.values, 0.0))
    group = net.game.n_agents if kind == "mix" else 1
    return np.concatenate(xs), np.concatenate(ys), group


def strategy_samples(net: ActionNet, records, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and accumulated targets ``(S_old + pi)^+`` for strategy records."""
    xs, ys = [], []
    for rec in records:
        if kind == "mix":
            for i, (acts, probs) in enumerate(zip(rec.actions, rec.values)):
                xs.append(net.agent_rows(rec.key, i, acts))
                ys.append(np.maximum(net.values(rec.key, i, acts) + probs, 0.0))
        elif kind == "joint":
            joints = list(itertools.product(*rec.actions))
            xs.append(net.joint_rows(rec.key, joints))
            ys.append(np.maximum(net.joint_values(rec.key, joints) + rec.values, 0.0))
        else:
            xs.append(net.agent_rows(rec.key, 0, rec.actions))
            ys.append(np.maximum(net.values(rec.key, 0, rec.actions) + rec.values, 0.0))
    return np.concatenate(xs), np.concatenate(ys)


def train_regret(net: ActionNet, records, cfg: TrainConfig, kind: str) -> list[float]:
    """Fit ``net`` to warm-start cumulative regret targets; returns the per-epoch loss."""
    if not records:
        raise ContractViolation("regret memory is empty")
    x, y, group = regret_samples(net, records, kind)
    net.fresh = False
    return fit(net.mlp, x, y, group, cfg)


def train_strategy(net: ActionNet, records, cfg: TrainConfig, kind: str) -> list[float]:
    if not records:
        raise ContractViolation("strategy memory is empty")
    x, y = strategy_samples(net, records, kind)
    net.fresh = False
    return fit(net.mlp, x, y, 1, cfg)


# -- gradient check --------------------------------------------------------------------

@dataclass
class GradientCheck:
    max_rel_error: float
    max_abs_error: float
    max_abs_grad: float
    probed: int
    kinks_skipped: int


def gradient_check(mlp: MLP, x: np.ndarray, y: np.ndarray, group: int = 1, n_probe: int = 100,
                   step: float = 1e-5, seed: int = 0) -> GradientCheck:
    """Analytic vs central-difference gradients of the grouped-product MSE.

    A parameter whose +-step perturbation flips any ReLU is not differentiable
    over that interval; it is skipped (and counted) and another one is drawn.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_and_grad(mlp, x, y, group)
    flat_grad = np.concatenate([g.ravel() for g in grads])
    theta = mlp.get_flat()
    order = rng.permutation(theta.size)
    rel, abs_err, probed, skipped = [], [], [], 0
    for i in order:
        if len(probed) == n_probe:
            break
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        mlp.set_flat(plus)
        lp, pat_p = grouped_loss(mlp, x, y, group), mlp.relu_pattern(x)
        mlp.set_flat(minus)
        lm, pat_m = grouped_loss(mlp, x, y, group), mlp.relu_pattern(x)
        if not np.array_equal(pat_p, pat_m):
            skipped += 1
            continue
        num = (lp - lm) / (2 * step)
        ana = flat_grad[i]
        probed.append(i)
        abs_err.append(abs(num - ana))
        rel.append(abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    mlp.set_flat(theta)
    return GradientCheck(float(max(rel)), float(max(abs_err)), float(np.abs(flat_grad[probed]).max()),
                         len(probed), skipped)


# -- checkpoints -----------------------------------------------------------------------

def save_nets(path: str | Path, nets: dict[str, ActionNet], meta: dict | None = None) -> None:
    """``TNET1`` + u32 header length + JSON header + little-endian float64 weights."""
    entries = []
    for name, net in nets.items():
        entries.append({"name": name, "class": type(net).__name__, "joint": net.joint, "fresh": net.fresh,
                        "spec": asdict(net.spec), "shapes": [list(p.shape) for p in net.mlp.params]})
    header = json.dumps({"version": 1, "nets": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC + struct.pack("<I", len(header)) + header)
        for net in nets.values():
            for p in net.mlp.params:
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_nets(path: str | Path, game: Game) -> tuple[dict[str, ActionNet], dict]:
    data = Path(path).read_bytes()
    if data[:5] != NET_MAGIC:
        raise ValueError(f"{path}: not a TNET1 checkpoint")
    (hlen,) = struct.unpack_from("<I", data, 5)
    header = json.loads(data[9:9 + hlen])
    pos = 9 + hlen
    classes = {c.__name__: c for c in (ActionNet, RegretNet, JointRegretNet, AdversaryRegretNet, StrategyNet)}
    nets = {}
    for entry in header["nets"]:
        spec = NetSpec(**{**entry["spec"], "hidden": tuple(entry["spec"]["hidden"])})
        net = classes[entry["class"]](game, spec, joint=entry["joint"])
        for p, shape in zip(net.mlp.params, entry["shapes"]):
            count = int(np.prod(shape))
            p[...] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
        net.fresh = entry["fresh"]
        nets[entry["name"]] = net
    return nets, header["meta"]


# -- strategy source for traversal / play -------------------------------------------------

class NetSource:
    """Regret-matching strategies from networks, cached per infoset.

    Pass regret nets for current play (traversal) or strategy nets for average
    play.  The cache assumes the nets stay fixed for this object's lifetime.
    """

    def __init__(self, adversary: ActionNet, team: ActionNet, team_mode: str = "mix"):
        self.adversary_net = adversary
        self.team_net = team
        self.team_mode = team_mode
        self._adv: dict = {}
        self._team: dict = {}

    def adversary(self, key, legal):
        s = self._adv.get(key)
        if s is None:
            s = self._adv[key] = regret_matching(self.adversary_net.values(key, 0, legal))
        return s

    def team_agents(self, key, legal):
        if self.team_mode == "joint":
            joint = self.team_joint(key, legal).reshape([len(a) for a in legal])
            axes = range(joint.ndim)
            return [joint.sum(axis=tuple(j for j in axes if j != i)) for i in axes]
        s = self._team.get(key)
        if s is None:
            s = self._team[key] = [regret_matching(self.team_net.values(key, i, a)) for i, a in enumerate(legal)]
        return s

    def team_joint(self, key, legal):
        if self.team_mode == "mix":
            return product_joint(self.team_agents(key, legal))
        s = self._team.get(key)
        if s is None:
            joints = list(itertools.product(*legal))
            s = self._team[key] = regret_matching(self.team_net.joint_values(key, joints))
        return s
