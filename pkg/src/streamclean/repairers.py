"""Repair strategies.

Each ``repair_*`` function takes a vector and the findings raised against it
and returns ``(vector, decision)``. A ``None`` vector means the vector is
rejected and must not be committed. Repairs only use the current vector and
the state of the committed prefix.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterable, Mapping, Sequence

from .detectors import Finding, fd_expected, is_outlier
from .model import (
    DataVector,
    Schema,
    SchemaAttribute,
    conforms,
    convert_text,
    format_value,
    from_seconds,
    instant_seconds,
    to_instant,
)
from .state import RunningStats, StreamState, UsageError

STRATEGIES: dict[str, tuple[str, ...]] = {
    "wrong_type": ("convert", "convert_with_fixups", "delete_value"),
    "interval": ("clamp_nearest", "random_in_interval", "distribution_mean", "cost_based"),
    "missing": (
        "delete_vector",
        "leave_null_with_rule",
        "mean",
        "median",
        "mode",
        "last_value",
        "previous_only_interpolation",
    ),
    "uniqueness": ("reject_vector",),
    "duplicate": ("reject_vector",),
    "contradiction": ("reject_vector", "align_to_first"),
    "outlier": ("nearest_non_outlier", "distribution_mean", "delete_value"),
    "fd": ("set_dependent_from_mapping", "reject_vector"),
    "missing_vector": ("synthesize_interpolated",),
}


@dataclass(frozen=True)
class Change:
    attribute: str
    old: Any
    new: Any
    strategy: str

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "old": format_value(self.old),
            "new": format_value(self.new),
            "strategy": self.strategy,
        }


@dataclass
class CleaningDecision:
    vector_index: int
    error_type: str
    outcome: str = "pass"  # pass | repaired | deleted
    changes: list[Change] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "vector_index": self.vector_index,
            "error_type": self.error_type,
            "outcome": self.outcome,
            "changes": [c.to_dict() for c in self.changes],
            "findings": [f.to_dict() for f in self.findings],
            "notes": list(self.notes),
        }


def _finish(v: DataVector, decision: CleaningDecision, changes: dict[int, Any], clear: Iterable[int] = ()):
    clear = list(clear)
    if changes or clear:
        v = v.replace_values(changes, clear)
    decision.outcome = "repaired" if decision.changes else "pass"
    return v, decision


def _reject(v: DataVector, decision: CleaningDecision):
    decision.outcome = "deleted"
    decision.changes = []
    return None, decision


def _cast(value: float, attr: SchemaAttribute) -> Any:
    """Bring a numeric result back into the attribute's declared type."""
    if attr.declared_type == "integer":
        return int(round(value))
    if attr.declared_type == "instant":
        return from_seconds(value)
    return float(value)


# -- wrong data type ----------------------------------------------------------

_DAY_FIRST = re.compile(r"^(\d{1,2})[./-](\d{1,2})[./-](\d{4})(?:[ T](\d{1,2}):(\d{2})(?::(\d{2})(?:\.(\d{1,3}))?)?)?$")
_YEAR_SLASH = re.compile(r"^(\d{4})/(\d{1,2})/(\d{1,2})(?:[ T](\d{1,2}):(\d{2})(?::(\d{2}))?)?$")
_COMPACT = re.compile(r"^(\d{4})(\d{2})(\d{2})(?:T?(\d{2})(\d{2})(\d{2})?)?$")
_GROUPED_INT = re.compile(r"^[+-]?\d{1,3}(,\d{3})+$")


def _fix_number(text: str, declared_type: str) -> str:
    s = text.strip()
    for sep in (" ", " ", "_", "'"):
        s = s.replace(sep, "")
    if "," in s and "." in s:
        if s.rfind(",") > s.rfind("."):
            s = s.replace(".", "").replace(",", ".")
        else:
            s = s.replace(",", "")
    elif s.count(",") > 1 or (declared_type == "integer" and _GROUPED_INT.match(s)):
        s = s.replace(",", "")
    elif "," in s:
        s = s.replace(",", ".")
    if declared_type == "integer" and re.match(r"^[+-]?\d+\.0*$", s):
        s = s.split(".")[0]
    return s


def _fix_instant(text: str) -> datetime:
    s = text.strip()
    m = _DAY_FIRST.match(s)
    if m:
        d, mo, y, hh, mm, ss, ms = m.groups()
        return to_instant(datetime(int(y), int(mo), int(d), int(hh or 0), int(mm or 0), int(ss or 0), int((ms or "0").ljust(3, "0")) * 1000))
    m = _YEAR_SLASH.match(s)
    if m:
        y, mo, d, hh, mm, ss = m.groups()
        return to_instant(datetime(int(y), int(mo), int(d), int(hh or 0), int(mm or 0), int(ss or 0)))
    m = _COMPACT.match(s)
    if m:
        y, mo, d, hh, mm, ss = m.groups()
        return to_instant(datetime(int(y), int(mo), int(d), int(hh or 0), int(mm or 0), int(ss or 0)))
    raise ValueError(f"no date form matches {text!r}")


def convert_value(value: Any, declared_type: str, fixups: bool = False) -> Any:
    """Convert *value* to *declared_type*, optionally trying common fix-ups.

    Raises ``ValueError`` when conversion is impossible.
    """
    if conforms(value, declared_type):
        return float(value) if declared_type == "float" else value
    if isinstance(value, str):
        try:
            return convert_text(value, declared_type)
        except ValueError:
            if not fixups:
                raise
        if declared_type in ("integer", "float"):
            return convert_text(_fix_number(value, declared_type), declared_type)
        if declared_type == "boolean":
            low = value.strip().lower()
            if low in ("1", "yes", "y", "t", "on"):
                return True
            if low in ("0", "no", "n", "f", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if declared_type == "instant":
            return _fix_instant(value)
        raise ValueError(f"cannot convert {value!r} to {declared_type}")
    if declared_type == "text":
        return format_value(value)
    if declared_type == "integer" and isinstance(value, float) and value.is_integer():
        return int(value)
    if declared_type == "float" and isinstance(value, bool):
        raise ValueError("booleans are not floats")
    raise ValueError(f"cannot convert {value!r} to {declared_type}")


def repair_wrong_type(v: DataVector, findings: Sequence[Finding], schema: Schema, strategy: str = "convert_with_fixups"):
    decision = CleaningDecision(v.index, "wrong_type", findings=list(findings))
    changes: dict[int, Any] = {}
    clear = []
    for f in findings:
        pos = schema.position(f.attribute)
        attr = schema.attributes[pos]
        old = v.values[pos]
        clear.append(pos)
        if strategy == "delete_value":
            new = None
        else:
            try:
                new = convert_value(old, attr.declared_type, fixups=strategy == "convert_with_fixups")
            except ValueError as exc:
                decision.notes.append(f"{attr.name}: conversion failed ({exc}); value removed")
                new = None
        changes[pos] = new
        decision.changes.append(Change(attr.name, old, new, strategy))
    return _finish(v, decision, changes, clear)


# -- interval violations -------------------------------------------------------------


def _inward(bound: float, inclusive: bool, attr: SchemaAttribute, upward: bool) -> float:
    if attr.declared_type == "integer":
        b = math.ceil(bound) if upward else math.floor(bound)
        if not inclusive and b == bound:
            b += 1 if upward else -1
        return b
    if inclusive:
        return bound
    return math.nextafter(bound, math.inf if upward else -math.inf)


def clamp_into(x: float, attr: SchemaAttribute) -> float:
    iv = attr.interval
    if iv.lower is not None and (x < iv.lower or (x == iv.lower and not iv.lower_inclusive)):
        return _inward(iv.lower, iv.lower_inclusive, attr, upward=True)
    if iv.upper is not None and (x > iv.upper or (x == iv.upper and not iv.upper_inclusive)):
        return _inward(iv.upper, iv.upper_inclusive, attr, upward=False)
    return x


def _allowed_sorted(attr: SchemaAttribute) -> list:
    return sorted(attr.interval.allowed, key=lambda a: (type(a).__name__, format_value(a)))


def _prefix_mode_within(attr: SchemaAttribute, state: StreamState | None) -> Any:
    if state is not None:
        for value, _ in state.value_counts[attr.name].most_common():
            if value in attr.interval.allowed:
                return value
    return _allowed_sorted(attr)[0]


def _clamp_value(x: Any, attr: SchemaAttribute, state: StreamState | None, decision: CleaningDecision) -> Any:
    iv = attr.interval
    if iv.is_discrete:
        if iv.is_ordinal and isinstance(x, (int, float)) and not isinstance(x, bool):
            return min(sorted(iv.allowed), key=lambda a: abs(a - x))
        decision.notes.append(f"{attr.name}: not ordinal; used prefix mode")
        return _prefix_mode_within(attr, state)
    number = instant_seconds(x) if isinstance(x, datetime) else float(x)
    return _cast(clamp_into(number, attr), attr)


def repair_interval(
    v: DataVector,
    findings: Sequence[Finding],
    state: StreamState | None,
    schema: Schema,
    strategy: str = "clamp_nearest",
    rng: random.Random | None = None,
):
    decision = CleaningDecision(v.index, "interval", findings=list(findings))
    changes: dict[int, Any] = {}
    for f in findings:
        pos = schema.position(f.attribute)
        attr = schema.attributes[pos]
        iv = attr.interval
        old = v.values[pos]
        if strategy in ("clamp_nearest", "cost_based"):
            new = _clamp_value(old, attr, state, decision)
        elif strategy == "random_in_interval":
            if rng is None:
                raise UsageError("random_in_interval needs a seeded rng")
            if iv.is_discrete:
                new = rng.choice(_allowed_sorted(attr))
            elif iv.lower is None or iv.upper is None:
                decision.notes.append(f"{attr.name}: unbounded interval; clamped instead")
                new = _clamp_value(old, attr, state, decision)
            elif attr.declared_type == "integer":
                new = rng.randint(_inward(iv.lower, iv.lower_inclusive, attr, True), _inward(iv.upper, iv.upper_inclusive, attr, False))
            else:
                new = _cast(rng.uniform(iv.lower, iv.upper), attr)
                if not iv.contains(new):
                    new = _cast(clamp_into(as_float(new), attr), attr)
        elif strategy == "distribution_mean":
            if iv.is_discrete:
                new = _prefix_mode_within(attr, state)
            else:
                stats = state.stats.get(attr.name) if state is not None else None
                if stats is None or not stats.defined:
                    decision.notes.append(f"{attr.name}: no prefix statistics; clamped instead")
                    new = _clamp_value(old, attr, state, decision)
                else:
                    new = _cast(clamp_into(stats.mean, attr), attr)
        else:
            raise UsageError(f"unknown interval strategy {strategy!r}")
        changes[pos] = new
        decision.changes.append(Change(attr.name, old, new, strategy))
    return _finish(v, decision, changes)


def as_float(x: Any) -> float:
    return instant_seconds(x) if isinstance(x, datetime) else float(x)


# -- missing values ------------------------------------------------------------------


def _strategy_for(strategy: str | Mapping[str, str], name: str) -> str:
    if isinstance(strategy, str):
        return strategy
    return strategy.get(name, strategy.get("*", "leave_null_with_rule"))


def previous_only_value(points: Sequence[tuple[datetime, Any]], at: datetime) -> float | None:
    """Extrapolate the line through the last two committed points to ``at``."""
    if not points:
        return None
    t1, x1 = points[-1]
    if len(points) < 2:
        return as_float(x1)
    t0, x0 = points[-2]
    dt = (t1 - t0).total_seconds()
    if dt == 0:
        return as_float(x1)
    slope = (as_float(x1) - as_float(x0)) / dt
    return as_float(x1) + slope * (at - t1).total_seconds()


def repair_missing(
    v: DataVector,
    findings: Sequence[Finding],
    state: StreamState,
    schema: Schema,
    strategy: str | Mapping[str, str] = "mean",
):
    decision = CleaningDecision(v.index, "missing", findings=list(findings))
    if any(_strategy_for(strategy, f.attribute) == "delete_vector" for f in findings):
        return _reject(v, decision)
    changes: dict[int, Any] = {}
    for f in findings:
        name = f.attribute
        pos = schema.position(name)
        attr = schema.attributes[pos]
        how = _strategy_for(strategy, name)
        new = None
        if how == "leave_null_with_rule":
            decision.notes.append(f"{name}: left null by rule")
            continue
        if how == "mean":
            stats = state.stats.get(name)
            if stats is not None and stats.defined:
                new = _cast(stats.mean, attr)
        elif how == "median":
            m = state.median(name)
            if m is not None:
                new = _cast(m, attr)
        elif how == "mode":
            new = state.mode(name)
        elif how == "last_value":
            points = state.last_points[name]
            if points:
                new = points[-1][1]
        elif how == "previous_only_interpolation":
            if attr.declared_type in ("integer", "float", "instant"):
                x = previous_only_value(state.last_points[name], v.arrival)
                if x is not None:
                    new = _cast(x, attr)
                    if len(state.last_points[name]) < 2:
                        decision.notes.append(f"{name}: one prior point; carried forward")
            elif state.last_points[name]:
                new = state.last_points[name][-1][1]
        else:
            raise UsageError(f"unknown missing-value strategy {how!r}")
        if new is None:
            decision.notes.append(f"{name}: no prefix data for {how}; deferred")
            continue
        changes[pos] = new
        decision.changes.append(Change(name, None, new, how))
    return _finish(v, decision, changes)


# -- key and order conflicts ---------------------------------------------------------


def repair_order_conflict(
    v: DataVector,
    findings: Sequence[Finding],
    strategy: str = "reject_vector",
    state: StreamState | None = None,
    schema: Schema | None = None,
):
    error_type = findings[0].error_type if findings else "duplicate"
    decision = CleaningDecision(v.index, error_type, findings=list(findings))
    if strategy == "reject_vector":
        return _reject(v, decision)
    if strategy != "align_to_first":
        raise UsageError(f"unknown order-conflict strategy {strategy!r}")
    if any(f.error_type != "contradiction" for f in findings):
        raise UsageError("align_to_first only applies to contradicting records")
    if state is None or schema is None:
        raise UsageError("align_to_first needs the state and schema")
    first = state.keys.first_payloads[state.key_of(v)]
    reference = dict(zip(schema.contradiction_scope, first))
    changes: dict[int, Any] = {}
    for f in findings:
        pos = schema.position(f.attribute)
        changes[pos] = reference[f.attribute]
        decision.changes.append(Change(f.attribute, v.values[pos], reference[f.attribute], strategy))
    return _finish(v, decision, changes)


# -- outliers ------------------------------------------------------------------------


def nearest_accepted(x: float, stats: RunningStats, threshold: float, integer: bool = False) -> float:
    """Closest value to *x* on its side of the mean that the z-score test accepts."""
    mean, std = stats.mean, stats.std
    if std == 0:
        return round(mean) if integer else mean
    sign = 1.0 if x >= mean else -1.0
    y = mean + sign * threshold * std
    if integer:
        y = math.floor(y) if sign > 0 else math.ceil(y)
    toward = -sign * math.inf
    while is_outlier(float(y), stats, threshold, warmup=0):
        y = y - sign if integer else math.nextafter(y, toward)
    return y


def repair_outlier(
    v: DataVector,
    findings: Sequence[Finding],
    state: StreamState,
    strategy: str = "nearest_non_outlier",
    threshold: float = 3.0,
    stats: Mapping[str, RunningStats] | None = None,
):
    """Repair against the same statistics the detector used (``stats`` or the prefix)."""
    schema = state.schema
    source = state.stats if stats is None else stats
    decision = CleaningDecision(v.index, "outlier", findings=list(findings))
    changes: dict[int, Any] = {}
    for f in findings:
        pos = schema.position(f.attribute)
        attr = schema.attributes[pos]
        old = v.values[pos]
        s = source.get(f.attribute)
        if strategy == "delete_value":
            new = None
        elif s is None or s.count < 1:
            decision.notes.append(f"{f.attribute}: statistics undefined; skipped")
            continue
        elif strategy == "nearest_non_outlier":
            new = nearest_accepted(float(old), s, threshold, integer=attr.declared_type == "integer")
            new = int(new) if attr.declared_type == "integer" else float(new)
        elif strategy == "distribution_mean":
            new = _cast(s.mean, attr)
        else:
            raise UsageError(f"unknown outlier strategy {strategy!r}")
        changes[pos] = new
        decision.changes.append(Change(f.attribute, old, new, strategy))
    return _finish(v, decision, changes)


# -- functional dependencies ---------------------------------------------------------


def repair_fd(
    v: DataVector,
    findings: Sequence[Finding],
    schema: Schema,
    strategy: str = "set_dependent_from_mapping",
    state: StreamState | None = None,
):
    """Overwrite violated dependents from their rules, in declaration order.

    When several rules govern one attribute, each applicable rule is applied in
    turn and recorded, so the last declared one wins.
    """
    decision = CleaningDecision(v.index, "fd", findings=list(findings))
    if strategy == "reject_vector":
        return _reject(v, decision)
    if strategy != "set_dependent_from_mapping":
        raise UsageError(f"unknown FD strategy {strategy!r}")
    flagged = {f.attribute for f in findings}
    current = v
    for i, fd in enumerate(schema.functional_dependencies):
        if fd.dependent not in flagged:
            continue
        known, expected = fd_expected(schema, i, current, state)
        if not known:
            decision.notes.append(f"{fd.label}: no rule for determinant; left unchanged")
            continue
        pos = schema.position(fd.dependent)
        old = current.values[pos]
        if old != expected:
            current = current.replace_values({pos: expected})
            decision.changes.append(Change(fd.dependent, old, expected, f"{strategy}:{fd.label}"))
    decision.outcome = "repaired" if decision.changes else "pass"
    return current, decision


# -- missing vectors -----------------------------------------------------------------


def synthesize_between(previous: DataVector, current: DataVector, slots: Sequence[datetime], schema: Schema) -> list[DataVector]:
    """Vectors for skipped slots, linearly interpolated between two known vectors.

    Both endpoints are known when ``current`` arrives, so this uses no future data.
    Non-numeric attributes carry the previous value forward.
    """
    out = []
    span = (current.arrival - previous.arrival).total_seconds()
    for slot in slots:
        w = (slot - previous.arrival).total_seconds() / span if span else 0.0
        values = []
        for attr, a, b in zip(schema.attributes, previous.values, current.values):
            if attr.name == schema.arrival_attribute:
                values.append(slot)
            elif attr.declared_type in ("integer", "float", "instant") and a is not None and b is not None \
                    and conforms(a, attr.declared_type) and conforms(b, attr.declared_type):
                values.append(_cast(as_float(a) + w * (as_float(b) - as_float(a)), attr))
            else:
                values.append(a)
        out.append(DataVector(current.index, slot, tuple(values), synthetic=True))
    return out
