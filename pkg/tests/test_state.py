from __future__ import annotations

import math
import random
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamclean.model import DataVector, Schema, SchemaAttribute
from streamclean.state import (
    KeyStore,
    RunningStats,
    StateCorruptionError,
    StreamState,
    UsageError,
    WindowSpec,
    commit_vector,
    stats_of,
    update_stats,
    window_snapshot,
)

from conftest import T0, at


def two_pass(xs):
    mean = math.fsum(xs) / len(xs)
    return mean, math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))


def test_welford_textbook_sequence():
    s = stats_of([2, 4, 4, 4, 5, 5, 7, 9])
    assert s.mean == 5.0
    assert s.std == 2.0
    assert (s.min, s.max) == (2.0, 9.0)


def test_single_observation():
    s = update_stats(RunningStats(), 3.25)
    assert (s.count, s.mean, s.m2) == (1, 3.25, 0.0)


def test_constant_sequence_has_zero_std():
    assert stats_of([1.5] * 50).std == 0.0


def test_empty_stats_are_undefined():
    s = RunningStats()
    assert not s.defined
    assert math.isnan(s.variance) and math.isnan(s.std)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_values_are_refused(bad):
    with pytest.raises(StateCorruptionError):
        update_stats(RunningStats(), bad)


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=300))
def test_welford_matches_two_pass(xs):
    s = stats_of(xs)
    mean, std = two_pass(xs)
    assert s.mean == pytest.approx(mean, rel=1e-9, abs=1e-9)
    assert s.std == pytest.approx(std, rel=1e-9, abs=1e-6)


def test_keystore_keeps_first_payload():
    store = KeyStore()
    store.add(("a",), (10,), 1, at(0))
    assert store.seen == {("a",)}
    store.add(("b",), (20,), 2, at(1))
    store.add(("a",), (30,), 3, at(2))
    assert store.seen == {("a",), ("b",)}
    assert store.first_payloads[("a",)] == (10,)


def test_time_horizon_evicts_old_keys():
    store = KeyStore(timedelta(seconds=60))
    store.add(("a",), (), 1, at(0))
    assert store.contains(("a",), at(60))
    assert not store.contains(("a",), at(61))
    store.add(("b",), (), 2, at(61))
    store.evict(2, at(61))
    assert store.seen == {("b",)}
    assert ("a",) not in store.first_payloads


def test_count_horizon_evicts_by_position():
    store = KeyStore(2)
    for i, key in enumerate("abc", start=1):
        store.add((key,), (), i, at(i))
        store.evict(i, at(i))
    assert store.seen == {("b",), ("c",)}


def xs_schema() -> Schema:
    return Schema((SchemaAttribute("x", "float"),))


def fed(values, times, windows=()):
    state = StreamState(xs_schema(), windows=windows)
    for i, (x, t) in enumerate(zip(values, times), start=1):
        state.commit(DataVector(i, at(t), (x,)))
    return state


def test_tumbling_count_window_starts_fresh():
    spec = WindowSpec("tumbling", "count", 3)
    state = fed([1.0, 2.0, 3.0, 4.0], [0, 1, 2, 3], [spec])
    s = window_snapshot(state, spec, at(3))["x"]
    assert (s.count, s.mean) == (1, 4.0)


def test_sliding_time_window_membership():
    spec = WindowSpec("sliding", "time", timedelta(seconds=10), timedelta(seconds=5))
    state = fed([0.0, 5.0, 12.0], [0, 5, 12], [spec])
    s = window_snapshot(state, spec, at(12))["x"]
    assert s.count == 2
    assert s.mean == 8.5


def test_empty_window_is_undefined():
    spec = WindowSpec("tumbling", "time", timedelta(seconds=10))
    state = fed([], [], [spec])
    s = window_snapshot(state, spec, at(0))["x"]
    assert s.count == 0 and not s.defined


def test_unconfigured_window_is_a_usage_error():
    with pytest.raises(UsageError):
        window_snapshot(fed([1.0], [0]), WindowSpec("tumbling", "count", 2), at(0))


@pytest.mark.parametrize(
    "args",
    [
        ("hopping", "time", timedelta(seconds=1), None),
        ("sliding", "time", timedelta(seconds=5), None),
        ("sliding", "time", timedelta(seconds=5), timedelta(seconds=6)),
        ("tumbling", "count", timedelta(seconds=5), None),
        ("tumbling", "count", 0, None),
    ],
)
def test_invalid_window_specs(args):
    with pytest.raises(ValueError):
        WindowSpec(*args)


def brute_window(spec: WindowSpec, times_ms: list[int], values: list[float], now_ms: int) -> list[float]:
    """Enumerate candidate windows and take the earliest-starting one containing the point."""
    if spec.measure == "count":
        point = len(times_ms) - 1
        if point < 0:
            return []
        starts = range(0, point + 1, spec.step)
        start = min(s for s in starts if s <= point < s + spec.size)
        return [x for i, x in enumerate(values) if start <= i < start + spec.size]
    size = spec.size // timedelta(milliseconds=1)
    step = spec.step // timedelta(milliseconds=1)
    start = (now_ms // step) * step
    while start - step + size > now_ms:
        start -= step
    return [x for t, x in zip(times_ms, values) if start <= t < start + size and t <= now_ms]


window_specs = st.one_of(
    st.integers(1, 20).flatmap(lambda n: st.builds(WindowSpec, st.just("tumbling"), st.just("count"), st.just(n))),
    st.integers(1, 20).flatmap(
        lambda n: st.builds(WindowSpec, st.just("sliding"), st.just("count"), st.just(n), st.integers(1, n))
    ),
    st.integers(1, 60).flatmap(
        lambda n: st.builds(
            WindowSpec, st.just("tumbling"), st.just("time"), st.just(timedelta(seconds=n))
        )
    ),
    st.integers(1, 60).flatmap(
        lambda n: st.builds(
            WindowSpec,
            st.just("sliding"),
            st.just("time"),
            st.just(timedelta(seconds=n)),
            st.integers(1, n).map(lambda s: timedelta(seconds=s)),
        )
    ),
)


@settings(max_examples=60, deadline=None)
@given(window_specs, st.integers(0, 2**32 - 1))
def test_window_snapshot_matches_brute_force(spec, seed):
    rng = random.Random(seed)
    state = StreamState(xs_schema(), windows=[spec])
    times, values = [], []
    t = 0
    for i in range(1, 201):
        t += rng.choice((0, 500, 1000, 3000, 7000))
        x = round(rng.uniform(-100, 100), 3)
        state.commit(DataVector(i, T0 + timedelta(milliseconds=t), (x,)))
        times.append(round((T0.timestamp()) * 1000) + t)
        values.append(x)
        now = T0 + timedelta(milliseconds=t)
        got = window_snapshot(state, spec, now)["x"]
        want = brute_window(spec, times, values, round(now.timestamp() * 1000))
        assert got.count == len(want)
        if want:
            assert got.mean == stats_of(want).mean


def test_commit_skips_nulls_and_wrong_types():
    schema = Schema((SchemaAttribute("x", "float"), SchemaAttribute("y", "float")))
    state = StreamState(schema)
    state.commit(DataVector(1, at(0), (None, 1.0)))
    state.commit(DataVector(2, at(1), ("abc", 2.0), frozenset({0})))
    assert state.stats["x"].count == 0
    assert state.stats["y"].count == 2
    assert state.committed == 2 and state.last_index == 2


def test_snapshot_is_independent():
    state = fed([1.0, 2.0], [0, 1])
    snap = state.snapshot()
    state.commit(DataVector(3, at(2), (3.0,)))
    assert snap.stats["x"].count == 2
    assert state.stats["x"].count == 3


def test_commit_vector_rejects_foreign_schema():
    state = fed([], [])
    with pytest.raises(UsageError):
        commit_vector(state, DataVector(1, at(0), (1.0,)), Schema((SchemaAttribute("z", "float"),)))


def test_median_and_mode():
    state = fed([3.0, 1.0, 2.0, 2.0], [0, 1, 2, 3])
    assert state.median("x") == 2.0
    assert state.mode("x") == 2.0
