"""Everything knowable about a stream at the moment a vector is cleaned.

``StreamState`` is built only from committed (final, post-repair) vectors. It
holds single-pass statistics per numeric attribute, the key and full-vector
stores used by the order-dependent detectors, and optional window buffers.
"""

from __future__ import annotations

import bisect
import copy
import math
from collections import Counter, deque
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Any, Hashable, Iterable, Union

from .model import DataVector, Schema, conforms, instant_seconds

Horizon = Union[timedelta, int, None]


class StateCorruptionError(ValueError):
    """A value that would poison running statistics (NaN, inf)."""


class UsageError(RuntimeError):
    """An operation was called on a state not configured for it."""


@dataclass(frozen=True)
class RunningStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @property
    def defined(self) -> bool:
        return self.count > 0

    @property
    def variance(self) -> float:
        """Population variance; NaN when no observations exist."""
        return self.m2 / self.count if self.count else math.nan

    @property
    def std(self) -> float:
        return math.sqrt(self.variance) if self.count else math.nan


def update_stats(stats: RunningStats, x: float) -> RunningStats:
    """Welford single-pass update."""
    x = float(x)
    if not math.isfinite(x):
        raise StateCorruptionError(f"refusing non-finite observation {x!r}")
    n = stats.count + 1
    delta = x - stats.mean
    mean = stats.mean + delta / n
    m2 = stats.m2 + delta * (x - mean)
    return RunningStats(n, mean, max(m2, 0.0), min(stats.min, x), max(stats.max, x))


def stats_of(values: Iterable[float]) -> RunningStats:
    stats = RunningStats()
    for x in values:
        stats = update_stats(stats, x)
    return stats


# -- retention ------------------------------------------------------------------


def _expired(horizon: Horizon, seq: int, t: datetime, now_seq: int, now: datetime) -> bool:
    if horizon is None:
        return False
    if isinstance(horizon, timedelta):
        return now - t > horizon
    return now_seq - seq >= horizon


class _RetainedSet:
    """Set of hashable items with optional time- or count-based retention.

    An item's age is measured from the last commit that carried it.
    """

    def __init__(self, horizon: Horizon = None):
        self.horizon = horizon
        self._last: dict[Hashable, tuple[int, datetime]] = {}
        self._order: deque[tuple[int, datetime, Hashable]] = deque()

    def __contains__(self, item: Hashable) -> bool:
        return item in self._last

    def __len__(self) -> int:
        return len(self._last)

    def __iter__(self):
        return iter(self._last)

    def contains(self, item: Hashable, now: datetime | None = None) -> bool:
        stamp = self._last.get(item)
        if stamp is None:
            return False
        if now is not None and isinstance(self.horizon, timedelta):
            return now - stamp[1] <= self.horizon
        return True

    def add(self, item: Hashable, seq: int, t: datetime) -> None:
        self._last[item] = (seq, t)
        if self.horizon is not None:
            self._order.append((seq, t, item))

    def evict(self, now_seq: int, now: datetime) -> list[Hashable]:
        dropped = []
        while self._order and _expired(self.horizon, self._order[0][0], self._order[0][1], now_seq, now):
            seq, t, item = self._order.popleft()
            if self._last.get(item) == (seq, t):
                del self._last[item]
                dropped.append(item)
        return dropped

    def stamp(self, item: Hashable) -> tuple[int, datetime] | None:
        return self._last.get(item)


class KeyStore:
    """Seen key tuples plus the contradiction-scope payload of each key's first vector."""

    def __init__(self, horizon: Horizon = None):
        self._seen = _RetainedSet(horizon)
        self.first_payloads: dict[tuple, tuple] = {}

    @property
    def horizon(self) -> Horizon:
        return self._seen.horizon

    @property
    def seen(self) -> set[tuple]:
        return set(self._seen)

    def contains(self, key: tuple, now: datetime | None = None) -> bool:
        return self._seen.contains(key, now)

    def add(self, key: tuple, payload: tuple, seq: int, t: datetime) -> None:
        if key not in self._seen:
            self.first_payloads[key] = payload
        self._seen.add(key, seq, t)

    def evict(self, now_seq: int, now: datetime) -> None:
        for key in self._seen.evict(now_seq, now):
            self.first_payloads.pop(key, None)


class VectorStore:
    """Full value tuples of committed vectors (exact, no hashing shortcuts)."""

    def __init__(self, horizon: Horizon = None):
        self._tuples = _RetainedSet(horizon)

    def contains(self, values: tuple, now: datetime | None = None) -> bool:
        return self._tuples.contains(values, now)

    def add(self, values: tuple, seq: int, t: datetime) -> None:
        self._tuples.add(values, seq, t)

    def evict(self, now_seq: int, now: datetime) -> None:
        self._tuples.evict(now_seq, now)

    def __len__(self) -> int:
        return len(self._tuples)


# -- windows --------------------------------------------------------------------


@dataclass(frozen=True)
class WindowSpec:
    """Tumbling or sliding window measured in time (``timedelta``) or vector count (``int``).

    Windows start at multiples of ``slide`` (epoch-aligned for time, from the
    first committed vector for count). A snapshot at ``now`` uses the
    earliest-starting window that still contains ``now``.
    """

    kind: str
    measure: str
    size: timedelta | int
    slide: timedelta | int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("tumbling", "sliding"):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if self.measure not in ("time", "count"):
            raise ValueError(f"unknown window measure {self.measure!r}")
        unit = timedelta if self.measure == "time" else int
        if not isinstance(self.size, unit) or (self.slide is not None and not isinstance(self.slide, unit)):
            raise ValueError(f"{self.measure} windows need {unit.__name__} size and slide")
        zero = timedelta(0) if self.measure == "time" else 0
        if self.size <= zero:
            raise ValueError("window size must be positive")
        if self.kind == "sliding":
            if self.slide is None:
                raise ValueError("sliding windows need a slide")
            if not zero < self.slide <= self.size:
                raise ValueError("slide must be in (0, size]")

    @property
    def step(self) -> timedelta | int:
        return self.size if self.kind == "tumbling" else self.slide  # type: ignore[return-value]


def _ms(t: datetime) -> int:
    return round(instant_seconds(t) * 1000)


def window_bounds(spec: WindowSpec, now: datetime | int) -> tuple[int, int]:
    """Half-open ``[start, end)`` of the snapshot window, in epoch ms or 0-based position."""
    if spec.measure == "time":
        size = spec.size // timedelta(milliseconds=1)  # type: ignore[operator]
        step = spec.step // timedelta(milliseconds=1)  # type: ignore[operator]
        point = _ms(now)  # type: ignore[arg-type]
        k = (point - size) // step + 1
    else:
        size, step, point = spec.size, spec.step, now  # type: ignore[assignment]
        k = max((point - size) // step + 1, 0)  # type: ignore[operator]
    start = k * step
    return start, start + size


class _WindowBuffer:
    def __init__(self, spec: WindowSpec):
        self.spec = spec
        self.entries: deque[tuple[int, datetime, tuple]] = deque()

    def add(self, seq: int, t: datetime, values: tuple) -> None:
        self.entries.append((seq, t, values))
        if self.spec.measure == "count":
            while len(self.entries) > self.spec.size:  # type: ignore[operator]
                self.entries.popleft()
        else:
            while self.entries and t - self.entries[0][1] > self.spec.size:
                self.entries.popleft()

    def members(self, now: datetime, committed: int) -> list[tuple]:
        if self.spec.measure == "count":
            if committed == 0:
                return []
            start, end = window_bounds(self.spec, committed - 1)
            return [vals for seq, _, vals in self.entries if start <= seq - 1 < end]
        start, end = window_bounds(self.spec, now)
        point = _ms(now)
        return [vals for _, t, vals in self.entries if start <= _ms(t) < end and _ms(t) <= point]


# -- the state ------------------------------------------------------------------


class StreamState:
    """Summary of the committed prefix of a stream.

    Single writer: only :meth:`commit` mutates it, once per committed vector.
    Use :meth:`snapshot` for an independent copy.
    """

    def __init__(self, schema: Schema, horizon: Horizon = None, windows: Iterable[WindowSpec] = ()):
        self.schema = schema
        self.horizon = horizon
        numeric = schema.numeric_attributes
        self.stats: dict[str, RunningStats] = {name: RunningStats() for name in numeric}
        self.sorted_values: dict[str, list[float]] = {name: [] for name in numeric}
        self.value_counts: dict[str, Counter] = {name: Counter() for name in schema.names}
        self.last_points: dict[str, deque] = {name: deque(maxlen=2) for name in schema.names}
        self.keys = KeyStore(horizon)
        self.unique_values: dict[str, _RetainedSet] = {name: _RetainedSet(horizon) for name in schema.unique_attributes}
        self.vectors = VectorStore(horizon)
        self.learned_fd: dict[int, dict[tuple, Any]] = {
            i: {} for i, fd in enumerate(schema.functional_dependencies) if fd.unknown_tuple == "learn_first_seen"
        }
        self.windows: dict[WindowSpec, _WindowBuffer] = {spec: _WindowBuffer(spec) for spec in windows}
        self.committed = 0
        self.last_arrival: datetime | None = None
        self.last_index: int | None = None

    def snapshot(self) -> StreamState:
        return copy.deepcopy(self)

    def key_of(self, v: DataVector) -> tuple | None:
        key = self.schema.key
        if not key:
            return None
        values = tuple(v.get(self.schema, name) for name in key)
        return None if any(x is None for x in values) else values

    def scope_of(self, v: DataVector) -> tuple:
        return tuple(v.get(self.schema, name) for name in self.schema.contradiction_scope)

    def commit(self, v: DataVector) -> StreamState:
        schema = self.schema
        self.committed += 1
        seq, t = self.committed, v.arrival
        for pos, (attr, x) in enumerate(zip(schema.attributes, v.values)):
            if x is None or pos in v.wrong_type or not conforms(x, attr.declared_type):
                continue
            name = attr.name
            if name in self.stats:
                fx = float(x)
                self.stats[name] = update_stats(self.stats[name], fx)
                bisect.insort(self.sorted_values[name], fx)
            self.value_counts[name][x] += 1
            self.last_points[name].append((t, x))
            if name in self.unique_values:
                self.unique_values[name].add(x, seq, t)
        key = self.key_of(v)
        if key is not None:
            self.keys.add(key, self.scope_of(v), seq, t)
        self.vectors.add(v.values, seq, t)
        for i, learned in self.learned_fd.items():
            fd = schema.functional_dependencies[i]
            det = tuple(v.get(schema, name) for name in fd.determinant)
            dep = v.get(schema, fd.dependent)
            if dep is not None and None not in det and det not in fd.mapping and det not in learned:
                learned[det] = dep
        for buffer in self.windows.values():
            buffer.add(seq, t, v.values)
        if self.horizon is not None:
            self.keys.evict(seq, t)
            self.vectors.evict(seq, t)
            for store in self.unique_values.values():
                store.evict(seq, t)
        self.last_arrival = t
        if not v.synthetic:
            self.last_index = v.index
        return self

    def median(self, name: str) -> float | None:
        values = self.sorted_values.get(name)
        if not values:
            return None
        n = len(values)
        mid = n // 2
        return values[mid] if n % 2 else (values[mid - 1] + values[mid]) / 2

    def mode(self, name: str) -> Any:
        counts = self.value_counts[name]
        if not counts:
            return None
        return counts.most_common(1)[0][0]


def commit_vector(state: StreamState, v: DataVector, schema: Schema | None = None) -> StreamState:
    if schema is not None and schema is not state.schema and schema != state.schema:
        raise UsageError("vector schema differs from the state's schema")
    return state.commit(v)


def window_snapshot(state: StreamState, spec: WindowSpec, now: datetime) -> dict[str, RunningStats]:
    """Per-numeric-attribute statistics over the window containing ``now``."""
    buffer = state.windows.get(spec)
    if buffer is None:
        raise UsageError(f"window {spec} is not configured on this state")
    members = buffer.members(now, state.committed)
    out = {}
    for name in state.schema.numeric_attributes:
        pos = state.schema.position(name)
        attr = state.schema.attributes[pos]
        out[name] = stats_of(
            float(vals[pos]) for vals in members if vals[pos] is not None and conforms(vals[pos], attr.declared_type)
        )
    return out
