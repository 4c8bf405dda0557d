"""On-disk formats: CSV streams, YAML schemas/configs, JSON-lines run logs.

Stream CSV files have a header row, comma delimiter, period decimal point and
UTF-8 encoding. Two bookkeeping columns may precede the attributes:
``_index`` (sequence number) and ``_arrival`` (arrival instant); cleaned
streams may end with ``_synthetic``. Without ``_arrival`` the schema's
arrival attribute supplies arrival times.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from ..detectors import Finding
from ..injector import Injection, InjectionLog, InjectionSpec
from ..model import (
    DataVector,
    FunctionalDependency,
    IntervalConstraint,
    ParseFault,
    Schema,
    SchemaAttribute,
    convert_text,
    format_value,
    parse_instant,
    parse_vector,
)
from ..pipeline import ModuleConfig, RunLog, VectorResult
from ..state import WindowSpec

try:
    _Loader = yaml.CSafeLoader
    _Dumper = yaml.CSafeDumper
except AttributeError:  # pragma: no cover
    _Loader = yaml.SafeLoader
    _Dumper = yaml.SafeDumper


EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class HarnessIOError(OSError):
    """File could not be read or written; carries the path in its message."""


class ConfigError(ValueError):
    """A schema or configuration document is malformed."""


def _open(path: str | Path, mode: str):
    try:
        return open(path, mode, encoding="utf-8", newline="" if "b" not in mode else None)
    except OSError as exc:
        raise HarnessIOError(f"{path}: {exc.strerror or exc}") from exc


def read_yaml(path: str | Path) -> Any:
    with _open(path, "r") as fh:
        try:
            return yaml.load(fh, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def write_yaml(path: str | Path, doc: Any) -> None:
    with _open(path, "w") as fh:
        yaml.dump(doc, fh, Dumper=_Dumper, sort_keys=False, allow_unicode=True, width=120)


# -- schema documents -----------------------------------------------------------


def _coerce(value: Any, declared_type: str) -> Any:
    if value is None:
        return None
    if isinstance(value, str):
        return convert_text(value, declared_type)
    if declared_type == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def _export(value: Any) -> Any:
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return format_value(value)


def _duration(value: Any) -> timedelta | int | None:
    """Durations are seconds (number) or ``{seconds: n}``; counts are ``{count: n}``."""
    if value is None:
        return None
    if isinstance(value, Mapping):
        if "count" in value:
            return int(value["count"])
        if "seconds" in value:
            return timedelta(seconds=float(value["seconds"]))
        raise ConfigError(f"expected seconds or count in {value!r}")
    return timedelta(seconds=float(value))


def _duration_doc(value: timedelta | int | None) -> Any:
    if value is None:
        return None
    if isinstance(value, timedelta):
        return {"seconds": value.total_seconds()}
    return {"count": value}


def schema_from_dict(doc: Mapping[str, Any]) -> Schema:
    try:
        attrs = []
        for a in doc["attributes"]:
            declared = a["type"]
            interval = None
            iv = a.get("interval")
            if iv is not None:
                if "allowed" in iv:
                    interval = IntervalConstraint.discrete(_coerce(x, declared) for x in iv["allowed"])
                else:
                    interval = IntervalConstraint.continuous(
                        iv.get("lower"), iv.get("upper"), iv.get("lower_inclusive", True), iv.get("upper_inclusive", True)
                    )
            attrs.append(
                SchemaAttribute(
                    name=a["name"],
                    declared_type=declared,
                    nullable=bool(a.get("nullable", False)),
                    unique=bool(a.get("unique", False)),
                    key_member=bool(a.get("key", False)),
                    interval=interval,
                    missing_markers=frozenset(a.get("missing_markers", ())),
                )
            )
        types = {a.name: a.declared_type for a in attrs}
        fds = []
        for fd in doc.get("functional_dependencies", ()):
            det = tuple(fd["determinant"])
            dep = fd["dependent"]
            mapping = {}
            for key, value in fd.get("mapping", ()):
                key = tuple(_coerce(k, types[n]) for k, n in zip(key, det))
                mapping[key] = _coerce(value, types[dep])
            fds.append(FunctionalDependency(det, dep, mapping, fd.get("unknown_tuple", "ignore"), fd.get("name", "")))
        cadence = doc.get("expected_cadence")
        return Schema(
            attributes=tuple(attrs),
            functional_dependencies=tuple(fds),
            expected_cadence=None if cadence is None else timedelta(seconds=float(cadence)),
            contradiction_scope=tuple(doc.get("contradiction_scope", ())),
            arrival_attribute=doc.get("arrival_attribute"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed schema document: {exc!r}") from exc


def schema_to_dict(schema: Schema) -> dict[str, Any]:
    attrs = []
    for a in schema.attributes:
        d: dict[str, Any] = {"name": a.name, "type": a.declared_type}
        for flag in ("nullable", "unique"):
            if getattr(a, flag):
                d[flag] = True
        if a.key_member:
            d["key"] = True
        if a.interval is not None:
            iv = a.interval
            if iv.is_discrete:
                d["interval"] = {"allowed": sorted((_export(x) for x in iv.allowed), key=repr)}
            else:
                d["interval"] = {"lower": iv.lower, "upper": iv.upper}
                if not iv.lower_inclusive:
                    d["interval"]["lower_inclusive"] = False
                if not iv.upper_inclusive:
                    d["interval"]["upper_inclusive"] = False
        if a.missing_markers:
            d["missing_markers"] = sorted(a.missing_markers, key=repr)
        attrs.append(d)
    doc: dict[str, Any] = {"attributes": attrs}
    if schema.functional_dependencies:
        doc["functional_dependencies"] = [
            {
                "name": fd.name,
                "determinant": list(fd.determinant),
                "dependent": fd.dependent,
                "unknown_tuple": fd.unknown_tuple,
                "mapping": [[[_export(k) for k in key], _export(v)] for key, v in fd.mapping.items()],
            }
            for fd in schema.functional_dependencies
        ]
    if schema.expected_cadence is not None:
        doc["expected_cadence"] = schema.expected_cadence.total_seconds()
    if schema.contradiction_scope:
        doc["contradiction_scope"] = list(schema.contradiction_scope)
    if schema.arrival_attribute:
        doc["arrival_attribute"] = schema.arrival_attribute
    return doc


def load_schema(path: str | Path) -> Schema:
    return schema_from_dict(read_yaml(path))


def save_schema(path: str | Path, schema: Schema) -> None:
    write_yaml(path, schema_to_dict(schema))


# -- pipeline and injection config ----------------------------------------------


def window_from_dict(doc: Mapping[str, Any] | None) -> WindowSpec | None:
    if doc is None:
        return None
    measure = doc.get("measure", "time")
    if measure == "time":
        size = timedelta(seconds=float(doc["size"]))
        slide = timedelta(seconds=float(doc["slide"])) if doc.get("slide") is not None else None
    else:
        size = int(doc["size"])
        slide = int(doc["slide"]) if doc.get("slide") is not None else None
    try:
        return WindowSpec(doc.get("kind", "sliding"), measure, size, slide)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def module_from_dict(doc: Mapping[str, Any]) -> ModuleConfig:
    if "error_type" not in doc:
        raise ConfigError(f"module without error_type: {doc!r}")
    attrs = doc.get("attributes")
    return ModuleConfig(
        error_type=doc["error_type"],
        strategy=doc.get("strategy"),
        threshold=float(doc.get("threshold", 3.0)),
        warmup=int(doc.get("warmup", 30)),
        window=window_from_dict(doc.get("window")),
        attributes=tuple(attrs) if attrs else None,
    )


def modules_from_list(docs: Iterable[Any]) -> tuple[ModuleConfig, ...]:
    out = []
    for d in docs or ():
        out.append(module_from_dict({"error_type": d} if isinstance(d, str) else d))
    return tuple(out)


def injection_from_dict(doc: Mapping[str, Any], seed: int | None = None) -> InjectionSpec:
    if "error_type" not in doc:
        raise ConfigError("injection section needs an error_type")
    attrs = doc.get("attributes")
    return InjectionSpec(
        error_type=doc["error_type"],
        attributes=tuple(attrs) if attrs else None,
        rate=doc.get("rate"),
        count=doc.get("count"),
        seed=int(doc.get("seed", seed if seed is not None else 0)),
        params=dict(doc.get("params", {})),
    )


horizon_from_doc = _duration


# -- streams --------------------------------------------------------------------------


def read_stream(path: str | Path, schema: Schema, strict_arrival: bool = True) -> list[DataVector]:
    """Parse a stream file. With ``strict_arrival`` off, unreadable arrivals become the epoch."""
    with _open(path, "r") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HarnessIOError(f"{path}: empty file") from None
        names = list(schema.names)
        book = [h for h in header if h.startswith("_")]
        cols = [h for h in header if not h.startswith("_")]
        if cols != names:
            raise ConfigError(f"{path}: columns {cols} do not match schema {names}")
        pos = {h: i for i, h in enumerate(header)}
        attr_pos = [pos[n] for n in names]
        if "_arrival" not in pos and schema.arrival_attribute is None:
            raise ConfigError(f"{path}: no _arrival column and the schema names no arrival attribute")
        out = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseFault(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            index = int(row[pos["_index"]]) if "_index" in pos else len(out) + 1
            text = row[pos["_arrival"]] if "_arrival" in pos else row[pos[schema.arrival_attribute]]
            try:
                arrival = parse_instant(text)
            except ValueError:
                if strict_arrival:
                    raise ParseFault(f"{path}:{line}: unreadable arrival {text!r}") from None
                arrival = EPOCH
            v = parse_vector([row[p] for p in attr_pos], schema, index, arrival)
            if "_synthetic" in book and row[pos["_synthetic"]] == "true":
                v = DataVector(v.index, v.arrival, v.values, v.wrong_type, True)
            out.append(v)
        return out


def write_stream(path: str | Path, stream: Sequence[DataVector], schema: Schema, synthetic_column: bool = False) -> None:
    with _open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["_index", "_arrival", *schema.names]
        if synthetic_column:
            header.append("_synthetic")
        writer.writerow(header)
        for v in stream:
            row = [str(v.index), format_value(v.arrival), *(format_value(x) for x in v.values)]
            if synthetic_column:
                row.append("true" if v.synthetic else "false")
            writer.writerow(row)


# -- logs ------------------------------------------------------------------------------


def write_injection_log(path: str | Path, log: InjectionLog) -> None:
    with _open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["vector_index", "attribute", "error_type", "original", "injected"])
        for e in log.entries:
            writer.writerow([e.vector_index, e.attribute, e.error_type, format_value(e.original), format_value(e.injected)])


def read_injection_log(path: str | Path) -> InjectionLog:
    with _open(path, "r") as fh:
        reader = csv.DictReader(fh)
        return InjectionLog(
            [
                Injection(int(r["vector_index"]), r["attribute"], r["error_type"], r["original"], r["injected"])
                for r in reader
            ]
        )


def write_runlog(path: str | Path, run: RunLog) -> None:
    with _open(path, "w") as fh:
        fh.write(run.to_jsonl())


def read_runlog(path: str | Path, cleaned: Sequence[DataVector] = ()) -> RunLog:
    """Rebuild a run log for scoring. Decisions are not reconstructed."""
    entries = []
    with _open(path, "r") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            findings = [Finding(f["vector_index"], f["attribute"], f["error_type"], f["detail"]) for f in d["findings"]]
            entries.append(VectorResult(d["index"], d["outcome"], findings, [], d.get("synthesized", 0)))
    return RunLog(entries, list(cleaned))
