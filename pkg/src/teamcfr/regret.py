"""Tabular regret bookkeeping: regret matching(+), instantaneous regrets and
reach-weighted average strategies.

Tables are plain dictionaries from a hashable key to a float64 vector; a
missing key reads as the zero vector.  Keys are :class:`InfoSetKey` objects,
or ``(InfoSetKey, agent)`` pairs for per-agent team tables.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Hashable, Iterable, Mapping

import numpy as np

from teamcfr.errors import ContractViolation
from teamcfr.game import InfoSetKey

TABLE_MAGIC = b"TCFR1"


def regret_matching(regrets) -> np.ndarray:
    """Probabilities proportional to positive regret; uniform if none is positive."""
    r = np.asarray(regrets, dtype=np.float64)
    if r.size == 0:
        raise ContractViolation("regret_matching needs at least one action")
    if not np.all(np.isfinite(r)):
        raise ContractViolation(f"non-finite regret {r}")
    pos = np.maximum(r, 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    return np.full(r.shape, 1.0 / r.size)


def instantaneous_regret(action_values, strategy) -> np.ndarray:
    """``r[a] = v[a] - sum_b sigma[b] v[b]``."""
    v = np.asarray(action_values, dtype=np.float64)
    s = np.asarray(strategy, dtype=np.float64)
    if v.shape != s.shape:
        raise ContractViolation(f"values {v.shape} and strategy {s.shape} differ in length")
    return v - s @ v


class RegretTable(dict):
    """Cumulative regrets under the regret-matching+ discipline (all entries >= 0)."""

    def get_vector(self, key: Hashable, n_actions: int) -> np.ndarray:
        vec = self.get(key)
        if vec is None:
            return np.zeros(n_actions)
        return vec

    def strategy(self, key: Hashable, n_actions: int) -> np.ndarray:
        return regret_matching(self.get_vector(key, n_actions))

    def accumulate_plus(self, key: Hashable, instant) -> np.ndarray:
        return accumulate_plus(self, key, instant)


def accumulate_plus(table: RegretTable, key: Hashable, instant) -> np.ndarray:
    """Regret-matching+ update in place: ``R <- max(R + r, 0)``; returns the new vector."""
    r = np.asarray(instant, dtype=np.float64)
    old = table.get(key)
    if old is None:
        old = np.zeros_like(r)
    elif old.shape != r.shape:
        raise ContractViolation(f"regret vector length {r.size} != {old.size} actions at {key!r}")
    new = np.maximum(old + r, 0.0)
    table[key] = new
    return new


class StrategyTable(dict):
    """Key -> probability vector."""

    def probs(self, key: Hashable, n_actions: int) -> np.ndarray:
        vec = self.get(key)
        if vec is None:
            return np.full(n_actions, 1.0 / n_actions)
        return vec


class AverageStrategyAccumulator(dict):
    """Key -> reach-weighted sum of strategies, plus the number of iterations seen."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.iterations = 0

    def add(self, key: Hashable, strategy, weight: float = 1.0) -> None:
        s = np.asarray(strategy, dtype=np.float64) * weight
        old = self.get(key)
        self[key] = s.copy() if old is None else old + s

    def to_strategy_table(self) -> StrategyTable:
        return StrategyTable({k: average_strategy(self, k) for k in self})


def average_strategy(acc: Mapping, key: Hashable) -> np.ndarray:
    vec = np.asarray(acc[key], dtype=np.float64)
    total = vec.sum()
    if total > 0.0:
        return vec / total
    return np.full(vec.shape, 1.0 / vec.size)


# -- checkpoints -------------------------------------------------------------

def _key_bytes(key: Hashable) -> bytes:
    if isinstance(key, InfoSetKey):
        return b"K" + key.key
    if isinstance(key, tuple) and len(key) == 2 and isinstance(key[0], InfoSetKey):
        return b"A" + struct.pack("<I", key[1]) + key[0].key
    raise TypeError(f"cannot serialize table key {key!r}")


def _key_from_bytes(raw: bytes) -> Hashable:
    if raw[:1] == b"K":
        return InfoSetKey.from_bytes(raw[1:])
    if raw[:1] == b"A":
        (agent,) = struct.unpack("<I", raw[1:5])
        return (InfoSetKey.from_bytes(raw[5:]), agent)
    raise ValueError("corrupt table key")


def save_tables(path: str | Path, tables: Mapping[str, Mapping], meta: Mapping | None = None) -> None:
    """Write named tables to a little-endian binary checkpoint.

    Layout: ``TCFR1``, u32 header length, JSON header, then per table (in header
    order) a u64 entry count followed by entries of
    ``u32 key length, key bytes, u32 n, n float64``.
    """
    names = list(tables)
    header = {"version": 1, "tables": names, "meta": dict(meta or {}),
              "iterations": {n: getattr(tables[n], "iterations", None) for n in names}}
    with open(path, "wb") as fh:
        raw = json.dumps(header, sort_keys=True).encode()
        fh.write(TABLE_MAGIC + struct.pack("<I", len(raw)) + raw)
        for name in names:
            table = tables[name]
            fh.write(struct.pack("<Q", len(table)))
            for key, vec in sorted(((_key_bytes(k), v) for k, v in table.items()), key=lambda kv: kv[0]):
                vec = np.asarray(vec, dtype="<f8")
                fh.write(struct.pack("<I", len(key)) + key + struct.pack("<I", vec.size) + vec.tobytes())


def load_tables(path: str | Path) -> tuple[dict[str, dict], dict]:
    """Inverse of :func:`save_tables`; returns ``(tables, meta)``."""
    data = Path(path).read_bytes()
    if data[:5] != TABLE_MAGIC:
        raise ValueError(f"{path}: not a TCFR1 checkpoint")
    (hlen,) = struct.unpack_from("<I", data, 5)
    header = json.loads(data[9:9 + hlen])
    pos = 9 + hlen
    kinds = {"regret": RegretTable, "strategy": StrategyTable, "average": AverageStrategyAccumulator}
    tables: dict[str, dict] = {}
    for name in header["tables"]:
        (count,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        cls = next((c for k, c in kinds.items() if k in name), dict)
        table = cls()
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", data, pos)
            key = _key_from_bytes(data[pos + 4:pos + 4 + klen])
            pos += 4 + klen
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            table[key] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
        if isinstance(table, AverageStrategyAccumulator) and header["iterations"].get(name) is not None:
            table.iterations = header["iterations"][name]
        tables[name] = table
    return tables, header["meta"]


def check_nonnegative(tables: Iterable[Mapping]) -> None:
    for table in tables:
        for key, vec in table.items():
            if np.any(vec < 0):
                raise AssertionError(f"negative cumulative regret at {key!r}: {vec}")
