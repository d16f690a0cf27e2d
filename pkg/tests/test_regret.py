"""Regret matching, regret-matching+ tables, averaging and table checkpoints."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamcfr.errors import ContractViolation
from teamcfr.game import InfoSetKey, Player
from teamcfr.regret import (AverageStrategyAccumulator, RegretTable, StrategyTable, accumulate_plus,
                            average_strategy, check_nonnegative, instantaneous_regret, load_tables, regret_matching,
                            save_tables)

finite = st.floats(-1e6, 1e6, allow_nan=False)
vectors = st.lists(finite, min_size=1, max_size=8).map(np.array)


@pytest.mark.parametrize("regrets, expected", [
    ([3, 1, 0], [0.75, 0.25, 0.0]),
    ([-2, -5], [0.5, 0.5]),
    ([0, 0, 0, 0], [0.25] * 4),
])
def test_regret_matching_examples(regrets, expected):
    assert np.allclose(regret_matching(regrets), expected, atol=0, rtol=0) or \
        np.max(np.abs(regret_matching(regrets) - expected)) <= 1e-15


def test_regret_matching_rejects_empty_and_nonfinite():
    with pytest.raises(ContractViolation):
        regret_matching([])
    with pytest.raises(ContractViolation):
        regret_matching([np.nan, 1.0])


@settings(max_examples=1000, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_regret_matching_scale_invariant(r, c):
    assert np.max(np.abs(regret_matching(c * r) - regret_matching(r))) <= 1e-12


@given(vectors)
def test_regret_matching_is_distribution(r):
    p = regret_matching(r)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-9
    assert np.all(p[r <= 0] == 0) or np.all(r <= 0)


@pytest.mark.parametrize("v, sigma, expected", [
    ([1, 0], [0.5, 0.5], [0.5, -0.5]),
    ([3, 3, 3], [0.2, 0.3, 0.5], [0, 0, 0]),
    ([2, 1, 0], [1, 0, 0], [0, -1, -2]),
])
def test_instantaneous_regret_examples(v, sigma, expected):
    assert np.allclose(instantaneous_regret(v, sigma), expected, atol=1e-15)


@given(st.lists(st.tuples(finite, st.floats(0, 1)), min_size=1, max_size=8))
def test_weighted_instantaneous_regret_cancels(pairs):
    v = np.array([a for a, _ in pairs]) / 1e6
    w = np.array([b for _, b in pairs]) + 1e-9
    sigma = w / w.sum()
    assert abs(sigma @ instantaneous_regret(v, sigma)) <= 1e-12


def test_accumulate_plus_examples():
    t = RegretTable()
    t["k"] = np.array([1.0, 0.0])
    assert list(accumulate_plus(t, "k", [-3, 2])) == [0, 2]
    assert list(accumulate_plus(t, "new", [1, -1])) == [1, 0]
    for _ in range(5):
        accumulate_plus(t, "five", [1, 1])
    assert list(t["five"]) == [5, 5]
    with pytest.raises(ContractViolation):
        accumulate_plus(t, "k", [1, 2, 3])


@given(st.lists(st.lists(finite, min_size=3, max_size=3), max_size=30))
def test_accumulate_plus_keeps_nonnegative(updates):
    t = RegretTable()
    for u in updates:
        accumulate_plus(t, "k", u)
    check_nonnegative([t])
    if t:
        assert np.all(t["k"] >= 0)


def test_check_nonnegative_flags_negative():
    with pytest.raises(AssertionError, match="negative cumulative regret"):
        check_nonnegative([{"k": np.array([1.0, -1e-3])}])


def test_average_strategy():
    acc = AverageStrategyAccumulator()
    acc.add("a", [0.5, 0.5], weight=1.0)
    acc.add("a", [1.0, 0.0], weight=3.0)
    assert np.allclose(average_strategy(acc, "a"), [0.875, 0.125])
    acc["z"] = np.zeros(3)
    assert np.allclose(average_strategy(acc, "z"), [1 / 3] * 3)
    table = acc.to_strategy_table()
    assert isinstance(table, StrategyTable)
    assert abs(table["a"].sum() - 1) <= 1e-9


def test_table_checkpoint_roundtrip(tmp_path):
    key = InfoSetKey(Player.TEAM, ((6, 5), ((0, 1),), (1,)))
    reg = RegretTable({key: np.array([1.5, 0.0, 2.25]), (key, 1): np.array([0.0, 3.0])})
    avg = AverageStrategyAccumulator({key: np.array([0.1, 0.9])})
    avg.iterations = 7
    path = tmp_path / "t.ckpt"
    save_tables(path, {"team_regret": reg, "team_average": avg}, {"seed": 3})
    raw = path.read_bytes()
    assert raw[:5] == b"TCFR1"
    tables, meta = load_tables(path)
    assert meta["seed"] == 3
    assert isinstance(tables["team_regret"], RegretTable)
    assert tables["team_average"].iterations == 7
    assert np.array_equal(tables["team_regret"][key], reg[key])
    assert np.array_equal(tables["team_regret"][(key, 1)], reg[(key, 1)])
    # byte-stable
    save_tables(tmp_path / "u.ckpt", {"team_regret": reg, "team_average": avg}, {"seed": 3})
    assert (tmp_path / "u.ckpt").read_bytes() == raw


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(b"NOPE!")
    with pytest.raises(ValueError):
        load_tables(path)
