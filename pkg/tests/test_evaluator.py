from __future__ import annotations

import json

import pytest

from streamclean.detectors import Finding
from streamclean.evaluator import EvaluationFault, MetricsReport, finding_units, render_report, score
from streamclean.injector import Injection, InjectionLog
from streamclean.model import DataVector, Schema, SchemaAttribute
from streamclean.pipeline import RunLog, VectorResult

from conftest import at

SCHEMA = Schema((SchemaAttribute("id", "integer", key_member=True), SchemaAttribute("x", "float"), SchemaAttribute("label", "text")))


def stream(n=10):
    return [DataVector(i, at(i), (i, float(i), "a")) for i in range(1, n + 1)]


def run_with(findings_at, deleted=()):
    entries = []
    for v in stream():
        fs = [Finding(v.index, "x", "interval") for _ in range(findings_at.count(v.index))]
        outcome = "deleted" if v.index in deleted else ("flagged" if fs else "pass")
        entries.append(VectorResult(v.index, outcome, fs))
    return RunLog(entries, [v for v in stream() if v.index not in deleted])


def test_hand_enumerated_micro_case():
    log = InjectionLog([Injection(i, "x", "interval", float(i), 999.0) for i in (1, 2, 3, 4)])
    run = run_with([1, 2, 3, 7, 9])
    report = score(log, run, stream(), run.committed, SCHEMA)
    m = report.columns["x"]
    assert (m.injected, m.identified, m.correct, m.false_negatives, m.false_positives) == (4, 5, 3, 1, 2)
    assert m.pct_correct == 75.0 and m.pct_false_positives == 50.0
    assert report.total.identified == 5


def test_identity_experiment():
    run = run_with([])
    report = score(InjectionLog(), run, stream(), run.committed, SCHEMA)
    assert report.total.injected == report.total.identified == report.total.false_positives == 0
    assert report.columns["x"].mean_ratio == 100.0 and report.columns["x"].std_ratio == 100.0
    assert report.columns["label"].mean_ratio is None


def test_deletions_and_ratios():
    run = run_with([], deleted={10})
    report = score(InjectionLog(), run, stream(), run.committed, SCHEMA)
    assert report.deleted_vectors == 1
    assert report.columns["x"].mean_ratio == pytest.approx(100 * 5.0 / 5.5)


def test_inconsistent_bookkeeping_is_refused():
    run = run_with([], deleted={10})
    with pytest.raises(EvaluationFault):
        score(InjectionLog(), run, stream(), stream(), SCHEMA)


def test_error_type_filter():
    run = run_with([1, 2])
    report = score(InjectionLog(), run, stream(), run.committed, SCHEMA, error_types={"missing"})
    assert report.total.identified == 0


def test_units_per_finding_kind():
    assert finding_units(Finding(3, None, "duplicate"), SCHEMA) == [(3, "id"), (3, "x"), (3, "label")]
    assert finding_units(Finding(3, "x", "contradiction"), SCHEMA) == [(3, "id")]
    assert finding_units(Finding(3, "x", "outlier"), SCHEMA) == [(3, "x")]


def test_table_layout():
    log = InjectionLog([Injection(1, "x", "interval", 1.0, 999.0)])
    run = run_with([1])
    text = render_report(score(log, run, stream(), run.committed, SCHEMA))
    lines = text.splitlines()
    assert lines[0] == "metric,id,x,label,Total"
    assert lines[1] == "Number of errors,0,1,0,1"
    assert "100.00 %" in lines[4] and "n/a" in lines[4]
    assert lines[8].startswith("Number of deleted vectors,,,,0")
    assert len(lines) == 11


def test_empty_report_is_header_only():
    assert render_report(MetricsReport()) == "metric,Total\n"


def test_rendering_is_deterministic():
    run = run_with([1, 4])
    report = score(InjectionLog(), run, stream(), run.committed, SCHEMA)
    assert render_report(report) == render_report(report)
    assert render_report(report, "structured") == render_report(report, "structured")
    assert json.loads(render_report(report, "structured"))["total"]["identified"] == 2


def test_unknown_format():
    with pytest.raises(ValueError):
        render_report(MetricsReport(), "xml")
