"""Scoring of a cleaning run against the injection log and the ground truth.

Matching works on (vector index, column) units. Value-level findings occupy
their own attribute; contradiction findings occupy the key columns; duplicate
and missing-vector findings occupy every column, mirroring how the injector
logs those errors.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .detectors import VECTOR_LEVEL, Finding
from .injector import InjectionLog
from .model import DataVector, Schema, as_number, conforms
from .pipeline import RunLog

ROWS = (
    ("injected", "Number of errors"),
    ("identified", "Identified errors"),
    ("correct", "Correctly identified errors"),
    ("pct_correct", "% correctly identified errors"),
    ("false_negatives", "Unidentified errors"),
    ("false_positives", "False positives"),
    ("pct_false_positives", "% false positives"),
    ("deleted", "Number of deleted vectors"),
    ("mean_ratio", "Mean value ratio"),
    ("std_ratio", "Standard deviation ratio"),
)
FORMATS = ("table", "structured")


class EvaluationFault(ValueError):
    pass


@dataclass
class ColumnMetrics:
    injected: int = 0
    identified: int = 0
    correct: int = 0
    false_negatives: int = 0
    false_positives: int = 0
    mean_ratio: float | None = None
    std_ratio: float | None = None

    @property
    def pct_correct(self) -> float | None:
        return 100.0 * self.correct / self.injected if self.injected else None

    @property
    def pct_false_positives(self) -> float | None:
        # Relative to injected errors, as in the published result tables.
        return 100.0 * self.false_positives / self.injected if self.injected else None

    def to_dict(self) -> dict:
        return {
            "injected": self.injected,
            "identified": self.identified,
            "correct": self.correct,
            "false_negatives": self.false_negatives,
            "false_positives": self.false_positives,
            "pct_correct": self.pct_correct,
            "pct_false_positives": self.pct_false_positives,
            "mean_ratio": self.mean_ratio,
            "std_ratio": self.std_ratio,
        }


@dataclass
class MetricsReport:
    columns: dict[str, ColumnMetrics] = field(default_factory=dict)
    total: ColumnMetrics = field(default_factory=ColumnMetrics)
    deleted_vectors: int = 0
    flagged_vectors: int = 0

    def to_dict(self) -> dict:
        return {
            "columns": {name: m.to_dict() for name, m in self.columns.items()},
            "total": self.total.to_dict(),
            "deleted_vectors": self.deleted_vectors,
            "flagged_vectors": self.flagged_vectors,
        }


def finding_units(f: Finding, schema: Schema) -> list[tuple[int, str]]:
    if f.error_type == "contradiction":
        return [(f.vector_index, name) for name in schema.key]
    if f.error_type in VECTOR_LEVEL or f.attribute is None:
        return [(f.vector_index, name) for name in schema.names]
    return [(f.vector_index, f.attribute)]


def _moments(values: Iterable[float]) -> tuple[float, float] | None:
    xs = list(values)
    if not xs:
        return None
    mean = math.fsum(xs) / len(xs)
    return mean, math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))


def _ratio(cleaned: float, truth: float) -> float | None:
    if truth == 0:
        return 100.0 if cleaned == 0 else None
    return 100.0 * (cleaned / truth)


def _column_values(stream: Sequence[DataVector], pos: int, declared_type: str) -> list[float]:
    out = []
    for v in stream:
        x = v.values[pos]
        if x is not None and conforms(x, declared_type):
            number = as_number(x)
            if number is not None:
                out.append(number)
    return out


def _mean_of(values: Iterable[float | None]) -> float | None:
    defined = [x for x in values if x is not None]
    return math.fsum(defined) / len(defined) if defined else None


def score(
    log: InjectionLog,
    run: RunLog,
    truth: Sequence[DataVector],
    cleaned: Sequence[DataVector],
    schema: Schema,
    error_types: Iterable[str] | None = None,
    include_synthetic: bool = False,
) -> MetricsReport:
    """Compute per-column and total metrics.

    ``error_types`` restricts which findings count (default: all). Synthetic
    vectors are excluded from the distribution ratios unless asked for.
    """
    real = [v for v in cleaned if not v.synthetic]
    if len(real) != len(run.entries) - run.deletions:
        raise EvaluationFault(
            f"cleaned stream has {len(real)} vectors; run log implies {len(run.entries) - run.deletions}"
        )
    wanted = set(error_types) if error_types is not None else None
    found: set[tuple[int, str]] = set()
    flagged: set[int] = set()
    for f in run.findings:
        if wanted is None or f.error_type in wanted:
            found.update(finding_units(f, schema))
            flagged.add(f.vector_index)
    injected = {(e.vector_index, e.attribute) for e in log.entries}

    report = MetricsReport(deleted_vectors=run.deletions, flagged_vectors=len(flagged))
    ratio_stream = list(cleaned) if include_synthetic else real
    for pos, attr in enumerate(schema.attributes):
        name = attr.name
        inj = {u for u in injected if u[1] == name}
        ide = {u for u in found if u[1] == name}
        m = ColumnMetrics(
            injected=len(inj),
            identified=len(ide),
            correct=len(inj & ide),
            false_negatives=len(inj - ide),
            false_positives=len(ide - inj),
        )
        if attr.declared_type in ("integer", "float", "instant") and not attr.categorical:
            t = _moments(_column_values(truth, pos, attr.declared_type))
            c = _moments(_column_values(ratio_stream, pos, attr.declared_type))
            if t is not None and c is not None:
                m.mean_ratio = _ratio(c[0], t[0])
                m.std_ratio = _ratio(c[1], t[1])
        report.columns[name] = m
    cols = report.columns.values()
    report.total = ColumnMetrics(
        injected=sum(m.injected for m in cols),
        identified=sum(m.identified for m in cols),
        correct=sum(m.correct for m in cols),
        false_negatives=sum(m.false_negatives for m in cols),
        false_positives=sum(m.false_positives for m in cols),
        mean_ratio=_mean_of(m.mean_ratio for m in cols),
        std_ratio=_mean_of(m.std_ratio for m in cols),
    )
    return report


def _cell(key: str, m: ColumnMetrics, deleted: int | None) -> str:
    if key == "deleted":
        return "" if deleted is None else str(deleted)
    value = getattr(m, key)
    if key.startswith("pct_") or key.endswith("_ratio"):
        return "n/a" if value is None else f"{value:.2f} %"
    return str(value)


def render_report(report: MetricsReport, format: str = "table") -> str:
    """Render as a comma-separated appendix-style table or as JSON."""
    if format == "structured":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if format != "table":
        raise ValueError(f"unknown report format {format!r}; expected one of {FORMATS}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", *report.columns, "Total"])
    if report.columns:
        for key, label in ROWS:
            row = [label]
            row += [_cell(key, m, None) for m in report.columns.values()]
            row.append(_cell(key, report.total, report.deleted_vectors))
            writer.writerow(row)
    return buf.getvalue()
