"""Error detectors, one per error type.

Every detector sees only the current vector and, where needed, the state of
the committed prefix. Nulls are left to :func:`detect_missing`; the interval,
FD and outlier checks skip them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Mapping

from .model import DataVector, Schema, conforms, format_value
from .state import RunningStats, StreamState, UsageError

ERROR_TYPES = (
    "uniqueness",
    "wrong_type",
    "interval",
    "fd",
    "missing",
    "duplicate",
    "outlier",
    "contradiction",
    "missing_vector",
)
VECTOR_LEVEL = ("duplicate", "missing_vector")

DEFAULT_THRESHOLD = 3.0
DEFAULT_WARMUP = 30


@dataclass(frozen=True)
class Finding:
    vector_index: int
    attribute: str | None
    error_type: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "vector_index": self.vector_index,
            "attribute": self.attribute,
            "error_type": self.error_type,
            "detail": self.detail,
        }


def detect_wrong_type(v: DataVector, schema: Schema) -> list[Finding]:
    out = []
    for pos, (attr, x) in enumerate(zip(schema.attributes, v.values)):
        if pos in v.wrong_type or not conforms(x, attr.declared_type):
            out.append(Finding(v.index, attr.name, "wrong_type", f"{x!r} is not {attr.declared_type}"))
    return out


def detect_uniqueness(v: DataVector, state: StreamState, schema: Schema) -> list[Finding]:
    out = []
    for name in schema.unique_attributes:
        x = v.get(schema, name)
        if x is None:
            continue
        if state.unique_values[name].contains(x, v.arrival):
            out.append(Finding(v.index, name, "uniqueness", f"{format_value(x)} already seen"))
    return out


def detect_interval(v: DataVector, schema: Schema) -> list[Finding]:
    out = []
    for pos, (attr, x) in enumerate(zip(schema.attributes, v.values)):
        if attr.interval is None or x is None or pos in v.wrong_type:
            continue
        if not attr.interval.contains(x):
            out.append(Finding(v.index, attr.name, "interval", f"{format_value(x)} outside permitted values"))
    return out


def fd_expected(schema: Schema, fd_pos: int, v: DataVector, state: StreamState | None = None):
    """Permitted dependent value for *v* under FD number *fd_pos*.

    Returns ``(known, value)``; ``known`` is False when the determinant tuple is
    not covered by the rule (or learned mapping) or contains nulls.
    """
    fd = schema.functional_dependencies[fd_pos]
    det = tuple(v.get(schema, name) for name in fd.determinant)
    if None in det:
        return False, None
    if det in fd.mapping:
        return True, fd.mapping[det]
    if state is not None and fd_pos in state.learned_fd and det in state.learned_fd[fd_pos]:
        return True, state.learned_fd[fd_pos][det]
    return False, None


def detect_fd(v: DataVector, schema: Schema, state: StreamState | None = None) -> list[Finding]:
    """Check every declared FD. ``state`` is only consulted for learn-first-seen rules."""
    out = []
    for i, fd in enumerate(schema.functional_dependencies):
        dep = v.get(schema, fd.dependent)
        if dep is None:
            continue
        known, expected = fd_expected(schema, i, v, state)
        if known:
            if dep != expected:
                out.append(Finding(v.index, fd.dependent, "fd", f"{fd.label}: expected {format_value(expected)}"))
        elif fd.unknown_tuple == "reject" and None not in (v.get(schema, n) for n in fd.determinant):
            out.append(Finding(v.index, fd.dependent, "fd", f"{fd.label}: unknown determinant"))
    return out


def detect_missing(v: DataVector, schema: Schema) -> list[Finding]:
    return [
        Finding(v.index, attr.name, "missing", "null in non-nullable attribute")
        for attr, x in zip(schema.attributes, v.values)
        if x is None and not attr.nullable
    ]


def missing_slots(previous: datetime, current: datetime, cadence: timedelta) -> list[datetime]:
    """Expected arrival slots strictly between two arrivals.

    Gaps are rounded to whole cadences, so jitter below half a cadence does
    not count as a missing vector.
    """
    gap = current - previous
    n = max(round(gap / cadence) - 1, 0)
    return [previous + cadence * k for k in range(1, n + 1)]


def detect_missing_vectors(state: StreamState, v: DataVector, schema: Schema) -> list[Finding]:
    if schema.expected_cadence is None:
        raise UsageError("missing-vector detection needs an expected cadence")
    if state.last_arrival is None:
        return []
    return [
        Finding(v.index, None, "missing_vector", f"expected vector at {format_value(slot)}")
        for slot in missing_slots(state.last_arrival, v.arrival, schema.expected_cadence)
    ]


def detect_duplicate(v: DataVector, state: StreamState) -> Finding | None:
    if state.vectors.contains(v.values, v.arrival):
        return Finding(v.index, None, "duplicate", "identical vector already committed")
    return None


def detect_contradiction(v: DataVector, state: StreamState, schema: Schema) -> list[Finding]:
    key = state.key_of(v)
    if key is None or not state.keys.contains(key, v.arrival):
        return []
    first = state.keys.first_payloads.get(key)
    if first is None:
        return []
    out = []
    for name, was in zip(schema.contradiction_scope, first):
        now = v.get(schema, name)
        if now != was:
            out.append(Finding(v.index, name, "contradiction", f"key {key!r}: first seen {format_value(was)}"))
    return out


def is_outlier(x: float, stats: RunningStats, threshold: float, warmup: int = DEFAULT_WARMUP) -> bool:
    if stats.count < max(warmup, 1):
        return False
    std = stats.std
    deviation = abs(x - stats.mean)
    if std == 0:
        return deviation > 0
    return deviation > threshold * std


def detect_outlier(
    v: DataVector,
    state: StreamState,
    schema: Schema,
    threshold: float = DEFAULT_THRESHOLD,
    warmup: int = DEFAULT_WARMUP,
    stats: Mapping[str, RunningStats] | None = None,
    attributes: tuple[str, ...] | None = None,
) -> list[Finding]:
    """Rolling z-score test on numeric attributes.

    ``stats`` overrides the prefix statistics (e.g. a window snapshot).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    source = state.stats if stats is None else stats
    out = []
    for name in attributes or schema.numeric_attributes:
        pos = schema.position(name)
        x = v.values[pos]
        if x is None or pos in v.wrong_type or isinstance(x, (str, bool)) or not math.isfinite(float(x)):
            continue
        s = source.get(name)
        if s is not None and is_outlier(float(x), s, threshold, warmup):
            out.append(Finding(v.index, name, "outlier", f"mean {s.mean:.6g} std {s.std:.6g}"))
    return out
