"""Stream data model: typed values, data vectors, schemas and constraints.

A stream is an ordered sequence of :class:`DataVector` objects sharing one
:class:`Schema`. Values are plain Python objects (``int``, ``float``, ``str``,
``bool``, timezone-aware ``datetime`` or ``None``); the schema says which of
those each attribute should hold.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Mapping, Sequence

TYPES = ("integer", "float", "text", "boolean", "instant")
NUMERIC_TYPES = ("integer", "float")

UNKNOWN_TUPLE_POLICIES = ("ignore", "learn_first_seen", "reject")

_TRUE = {"true", "t", "1", "yes", "y"}
_FALSE = {"false", "f", "0", "no", "n"}
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class ParseFault(ValueError):
    """Raised when a raw record cannot be turned into a vector at all."""


# -- instants ---------------------------------------------------------------


def to_instant(value: datetime) -> datetime:
    """Normalize to UTC with millisecond precision (naive values are read as UTC)."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    else:
        value = value.astimezone(timezone.utc)
    return value.replace(microsecond=(value.microsecond // 1000) * 1000)


def parse_instant(text: str) -> datetime:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    return to_instant(datetime.fromisoformat(s))


def format_instant(value: datetime) -> str:
    value = to_instant(value)
    base = value.strftime("%Y-%m-%dT%H:%M:%S")
    ms = value.microsecond // 1000
    return f"{base}.{ms:03d}Z" if ms else base + "Z"


def instant_seconds(value: datetime) -> float:
    return to_instant(value).timestamp()


def from_seconds(seconds: float) -> datetime:
    return to_instant(datetime.fromtimestamp(seconds, tz=timezone.utc))


# -- value conversion -------------------------------------------------------


def convert_text(text: str, declared_type: str) -> Any:
    """Strict conversion of *text* to *declared_type*; raises ``ValueError``."""
    s = text.strip()
    if declared_type == "text":
        return text
    if declared_type == "integer":
        if not _INT_RE.match(s):
            raise ValueError(f"not an integer: {text!r}")
        return int(s)
    if declared_type == "float":
        if not _FLOAT_RE.match(s) and s.lower() not in ("nan", "inf", "-inf", "+inf"):
            raise ValueError(f"not a float: {text!r}")
        return float(s)
    if declared_type == "boolean":
        low = s.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ValueError(f"not a boolean: {text!r}")
    if declared_type == "instant":
        try:
            return parse_instant(s)
        except ValueError:
            raise ValueError(f"not an instant: {text!r}") from None
    raise ValueError(f"unknown type {declared_type!r}")


def format_value(value: Any) -> str:
    """Canonical text form; ``None`` renders as the empty string."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, datetime):
        return format_instant(value)
    return str(value)


def conforms(value: Any, declared_type: str) -> bool:
    """Does *value*'s runtime variant match *declared_type*? ``None`` always conforms."""
    if value is None:
        return True
    if declared_type == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if declared_type == "float":
        return isinstance(value, float) or (isinstance(value, int) and not isinstance(value, bool))
    if declared_type == "text":
        return isinstance(value, str)
    if declared_type == "boolean":
        return isinstance(value, bool)
    if declared_type == "instant":
        return isinstance(value, datetime)
    return False


def as_number(value: Any) -> float | None:
    """Numeric view used by statistics: numbers as-is, instants as epoch seconds."""
    if value is None or isinstance(value, (bool, str)):
        return None
    if isinstance(value, datetime):
        return instant_seconds(value)
    if isinstance(value, (int, float)):
        x = float(value)
        return x if math.isfinite(x) else None
    return None


# -- constraints --------------------------------------------------------------


@dataclass(frozen=True)
class IntervalConstraint:
    """Either a discrete set of allowed values or a continuous range.

    Either bound of a continuous range may be ``None`` (unbounded on that side).
    """

    allowed: frozenset | None = None
    lower: float | None = None
    upper: float | None = None
    lower_inclusive: bool = True
    upper_inclusive: bool = True

    @classmethod
    def discrete(cls, values: Iterable[Any]) -> IntervalConstraint:
        return cls(allowed=frozenset(values))

    @classmethod
    def continuous(
        cls,
        lower: float | None,
        upper: float | None,
        lower_inclusive: bool = True,
        upper_inclusive: bool = True,
    ) -> IntervalConstraint:
        return cls(lower=lower, upper=upper, lower_inclusive=lower_inclusive, upper_inclusive=upper_inclusive)

    @property
    def is_discrete(self) -> bool:
        return self.allowed is not None

    @property
    def is_ordinal(self) -> bool:
        """Discrete sets of numbers can be searched by distance; other sets cannot."""
        return self.allowed is not None and all(
            isinstance(a, (int, float)) and not isinstance(a, bool) for a in self.allowed
        )

    def contains(self, value: Any) -> bool:
        if self.allowed is not None:
            return value in self.allowed
        x = as_number(value)
        if x is None:
            return False
        if self.lower is not None:
            if x < self.lower or (x == self.lower and not self.lower_inclusive):
                return False
        if self.upper is not None:
            if x > self.upper or (x == self.upper and not self.upper_inclusive):
                return False
        return True

    def faults(self) -> list[str]:
        out = []
        if self.allowed is not None:
            if not self.allowed:
                out.append("discrete interval has no allowed values")
            if self.lower is not None or self.upper is not None:
                out.append("interval is both discrete and continuous")
        elif self.lower is not None and self.upper is not None and self.lower > self.upper:
            out.append(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return out


@dataclass(frozen=True)
class FunctionalDependency:
    """Explicit rule: determinant values fix the permitted dependent value."""

    determinant: tuple[str, ...]
    dependent: str
    mapping: Mapping[tuple, Any] = field(default_factory=dict)
    unknown_tuple: str = "ignore"
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or f"{','.join(self.determinant)}->{self.dependent}"

    def faults(self) -> list[str]:
        out = []
        if not self.determinant:
            out.append(f"FD {self.label}: empty determinant")
        if self.dependent in self.determinant:
            out.append(f"FD {self.label}: dependent {self.dependent!r} is part of its determinant")
        if len(set(self.determinant)) != len(self.determinant):
            out.append(f"FD {self.label}: repeated determinant attribute")
        if self.unknown_tuple not in UNKNOWN_TUPLE_POLICIES:
            out.append(f"FD {self.label}: unknown-tuple policy {self.unknown_tuple!r}")
        for key in self.mapping:
            if not isinstance(key, tuple) or len(key) != len(self.determinant):
                out.append(f"FD {self.label}: mapping key {key!r} does not match determinant arity")
                break
        return out


@dataclass(frozen=True)
class SchemaAttribute:
    name: str
    declared_type: str
    nullable: bool = False
    unique: bool = False
    key_member: bool = False
    interval: IntervalConstraint | None = None
    missing_markers: frozenset = frozenset()

    @property
    def numeric(self) -> bool:
        return self.declared_type in NUMERIC_TYPES

    @property
    def categorical(self) -> bool:
        return self.interval is not None and self.interval.is_discrete


@dataclass(frozen=True)
class Schema:
    attributes: tuple[SchemaAttribute, ...]
    functional_dependencies: tuple[FunctionalDependency, ...] = ()
    expected_cadence: timedelta | None = None
    contradiction_scope: tuple[str, ...] = ()
    arrival_attribute: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "_positions", {a.name: i for i, a in enumerate(self.attributes)})

    @property
    def arity(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def position(self, name: str) -> int:
        return self._positions[name]  # type: ignore[attr-defined]

    def attribute(self, name: str) -> SchemaAttribute:
        return self.attributes[self.position(name)]

    @property
    def key(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.key_member)

    @property
    def unique_attributes(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.unique)

    @property
    def numeric_attributes(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.numeric)


def validate_schema(schema: Schema) -> list[str]:
    """Return human-readable definition faults; an empty list means the schema is sound."""
    faults: list[str] = []
    seen: set[str] = set()
    for attr in schema.attributes:
        if attr.name in seen:
            faults.append(f"duplicate attribute name {attr.name!r}")
        seen.add(attr.name)
        if attr.declared_type not in TYPES:
            faults.append(f"attribute {attr.name!r}: unknown type {attr.declared_type!r}")
        if attr.interval is not None:
            faults.extend(f"attribute {attr.name!r}: {f}" for f in attr.interval.faults())
        for marker in attr.missing_markers:
            if not isinstance(marker, str) and not conforms(marker, attr.declared_type):
                faults.append(f"attribute {attr.name!r}: missing marker {marker!r} incompatible with {attr.declared_type}")
    for fd in schema.functional_dependencies:
        faults.extend(fd.faults())
        for name in (*fd.determinant, fd.dependent):
            if name not in seen:
                faults.append(f"FD {fd.label}: unknown attribute {name!r}")
    if schema.expected_cadence is not None and schema.expected_cadence <= timedelta(0):
        faults.append("expected_cadence must be positive")
    key = set(schema.key)
    for name in schema.contradiction_scope:
        if name not in seen:
            faults.append(f"contradiction scope: unknown attribute {name!r}")
        elif name in key:
            faults.append(f"contradiction scope: {name!r} is a key attribute")
    if schema.contradiction_scope and not key:
        faults.append("contradiction scope requires a key")
    if schema.arrival_attribute is not None:
        if schema.arrival_attribute not in seen:
            faults.append(f"arrival attribute {schema.arrival_attribute!r} is not in the schema")
        elif schema.attribute(schema.arrival_attribute).declared_type != "instant":
            faults.append(f"arrival attribute {schema.arrival_attribute!r} must be an instant")
    return faults


# -- vectors ------------------------------------------------------------------


@dataclass(frozen=True)
class DataVector:
    """One record of a stream.

    ``wrong_type`` holds positions whose raw text could not be converted to the
    declared type; those positions carry the raw text as their value until the
    schema-check stage deals with them. ``synthetic`` marks vectors created by
    the cleaning process rather than received from the source.
    """

    index: int
    arrival: datetime
    values: tuple
    wrong_type: frozenset = frozenset()
    synthetic: bool = False

    def get(self, schema: Schema, name: str) -> Any:
        return self.values[schema.position(name)]

    def replace_values(self, changes: Mapping[int, Any], clear_wrong_type: Iterable[int] = ()) -> DataVector:
        values = list(self.values)
        for pos, val in changes.items():
            values[pos] = val
        wrong = self.wrong_type - frozenset(clear_wrong_type) if clear_wrong_type else self.wrong_type
        return DataVector(self.index, self.arrival, tuple(values), wrong, self.synthetic)


def _is_marker(raw: str, attr: SchemaAttribute) -> bool:
    if not attr.missing_markers:
        return False
    s = raw.strip()
    number: float | None = None
    for marker in attr.missing_markers:
        if isinstance(marker, str):
            if s == marker.strip():
                return True
        elif isinstance(marker, (int, float)) and not isinstance(marker, bool):
            if s == format_value(marker):
                return True
            if number is None:
                try:
                    number = float(s)
                except ValueError:
                    number = math.nan
            if number == marker:
                return True
    return False


def parse_vector(raw: Sequence[str], schema: Schema, index: int, arrival: datetime) -> DataVector:
    """Convert raw field texts into a vector.

    Empty fields and missing markers become ``None``; fields that fail
    conversion are kept as text and recorded in ``wrong_type``. Only an arity
    mismatch raises :class:`ParseFault`.
    """
    if len(raw) != schema.arity:
        raise ParseFault(f"vector {index}: expected {schema.arity} fields, got {len(raw)}")
    values = []
    wrong = []
    for pos, (text, attr) in enumerate(zip(raw, schema.attributes)):
        if text is None or text.strip() == "" or _is_marker(text, attr):
            values.append(None)
            continue
        try:
            values.append(convert_text(text, attr.declared_type))
        except ValueError:
            values.append(text)
            wrong.append(pos)
    return DataVector(index, to_instant(arrival), tuple(values), frozenset(wrong))


def serialize_vector(v: DataVector) -> list[str]:
    return [format_value(x) for x in v.values]


def check_order(stream: Iterable[DataVector]) -> None:
    """Raise ``ValueError`` if indices are not consecutive or arrivals decrease."""
    prev: DataVector | None = None
    for v in stream:
        if prev is not None:
            if v.index != prev.index + 1:
                raise ValueError(f"vector {v.index} follows {prev.index}")
            if v.arrival < prev.arrival:
                raise ValueError(f"vector {v.index} arrives before vector {prev.index}")
        prev = v
