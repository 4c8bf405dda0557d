"""Acceptance suite: one or more tests per numbered criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

from __future__ import annotations

import json
import math
import random
from datetime import timedelta
from itertools import chain

import pytest

from streamclean.detectors import Finding, is_outlier
from streamclean.evaluator import score
from streamclean.harness.experiment import run_experiment, spec_from_dict
from streamclean.injector import Injection, InjectionLog, InjectionSpec, inject
from streamclean.model import DataVector, IntervalConstraint, Schema, SchemaAttribute
from streamclean.pipeline import ModuleConfig, PipelineConfig, RunLog, VectorResult, build_pipeline
from streamclean.repairers import nearest_accepted
from streamclean.state import StreamState, WindowSpec, stats_of, update_stats, RunningStats, window_snapshot

from conftest import T0, at

criterion = pytest.mark.criterion
MEASURES = ("temperature", "humidity", "light", "voltage")


def experiment(dataset, spec: InjectionSpec, module: ModuleConfig, seed: int = 1):
    truth, schema = dataset
    corrupted, log = inject(truth, spec, schema)
    run = build_pipeline(PipelineConfig(schema, (module,), seed)).run_stream(corrupted)
    return log, run, score(log, run, truth, run.committed, schema, {spec.error_type})


# -- 1, 2: exact detection of value errors ------------------------------------------


@criterion(1, "interval violations: 100% detected at exact positions, 0 false positives")
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_interval_detection_is_exact(intel, seed):
    _, run, report = experiment(intel, InjectionSpec("interval", rate=0.025, seed=seed), ModuleConfig("interval", "clamp_nearest"))
    assert report.total.injected == 4 * 504
    for name in MEASURES:
        m = report.columns[name]
        assert m.injected == 504
        assert m.correct == m.injected and m.identified == m.injected
        assert m.false_positives == 0


@criterion(2, "missing values: 100% detected at exact positions, 0 false positives")
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_missing_detection_is_exact(intel, seed):
    spec = InjectionSpec("missing", attributes=MEASURES, rate=0.025, seed=seed)
    _, _, report = experiment(intel, spec, ModuleConfig("missing", "mean"))
    assert report.total.injected == 2016
    for m in report.columns.values():
        assert m.correct == m.injected and m.identified == m.injected
        assert m.false_positives == 0


# -- 3, 4: key-based errors ---------------------------------------------------------

KEY_SEEDS = range(20)
_key_runs: dict[str, list] = {}


def key_runs(intel, kind):
    if kind not in _key_runs:
        _key_runs[kind] = [
            experiment(intel, InjectionSpec(kind, count=1008, seed=seed), ModuleConfig(kind, "reject_vector"))[2]
            for seed in KEY_SEEDS
        ]
    return _key_runs[kind]


@criterion(3, "uniqueness/duplicate/contradiction: 1008 identified, 1008 deleted, positional match in [45%, 55%]")
@pytest.mark.parametrize("kind", ["uniqueness", "duplicate", "contradiction"])
def test_key_errors_identified_and_deleted(intel, kind):
    reports = key_runs(intel, kind)
    for report in reports:
        assert report.flagged_vectors == 1008
        assert report.deleted_vectors == 1008
        assert report.columns["timestamp"].injected == 1008
        assert report.columns["timestamp"].identified == 1008
    match = sum(r.columns["timestamp"].pct_correct for r in reports) / len(reports)
    print(f"{kind}: mean positional match {match:.2f} % over {len(reports)} seeds")
    assert 45.0 <= match <= 55.0


@criterion(4, "duplicate removal keeps mean and std ratios within [99%, 101%]")
def test_duplicate_removal_preserves_distribution(intel):
    for report in key_runs(intel, "duplicate"):
        for name, m in report.columns.items():
            assert 99.0 <= m.mean_ratio <= 101.0, name
            assert 99.0 <= m.std_ratio <= 101.0, name


# -- 5: overlapping functional dependencies -----------------------------------------


@criterion(5, "FD violations on taxi_like: 100% identified, false positives > 0 from overlapping FDs")
def test_fd_violations_with_overlap(taxi):
    _, schema = taxi
    dets = [set(fd.determinant) | {fd.dependent} for fd in schema.functional_dependencies]
    assert any(a & b for i, a in enumerate(dets) for b in dets[i + 1 :])
    spec = InjectionSpec("fd", seed=1, params={"fds": ["rate_tax", "airport_fee", "fare"]})
    log, _, report = experiment(taxi, spec, ModuleConfig("fd", "set_dependent_from_mapping"))
    assert report.total.injected == log.total > 0
    assert report.total.correct == report.total.injected
    assert report.total.false_negatives == 0
    assert report.total.false_positives > 0


# -- 6: outlier properties -----------------------------------------------------------


@criterion(6, "outliers: (a) shifts >= 4 sigma detected once warmed up")
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_large_shifts_are_detected(intel, seed):
    truth, schema = intel
    log, run, _ = experiment(intel, InjectionSpec("outlier", seed=seed), ModuleConfig("outlier", "nearest_non_outlier"))
    sigma = {}
    for name in MEASURES:
        xs = [v.get(schema, name) for v in truth]
        mean = math.fsum(xs) / len(xs)
        sigma[name] = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))
    flagged = {(f.vector_index, f.attribute) for f in run.findings}
    checked = 0
    for e in log.entries:
        pos = schema.position(e.attribute)
        seen = sum(1 for v in run.committed if v.index < e.vector_index and v.values[pos] is not None)
        if seen < 30 or abs(e.injected - e.original) < 4 * sigma[e.attribute]:
            continue
        checked += 1
        assert (e.vector_index, e.attribute) in flagged, e
    assert checked > 0.99 * log.total


@criterion(6, "outliers: (b) repaired values pass the same detector on the same snapshot")
def test_repaired_outliers_are_accepted(intel):
    truth, schema = intel
    corrupted, _ = inject(truth, InjectionSpec("outlier", seed=1), schema)
    p = build_pipeline(PipelineConfig(schema, (ModuleConfig("outlier", "nearest_non_outlier"),)))
    repaired = 0
    for v in corrupted:
        snapshot = dict(p.state.stats)
        result, _ = p.process(v)
        for d in result.decisions:
            for c in d.changes:
                assert not is_outlier(c.new, snapshot[c.attribute], 3.0, warmup=30)
                repaired += 1
    assert repaired > 0
    rng = random.Random(0)
    for _ in range(2000):
        s = stats_of(rng.gauss(rng.uniform(-100, 100), rng.uniform(0.01, 50)) for _ in range(rng.randint(30, 60)))
        x = rng.uniform(-1e4, 1e4)
        threshold = rng.uniform(0.5, 5)
        assert not is_outlier(nearest_accepted(x, s, threshold), s, threshold, warmup=0)


@criterion(6, "outliers: (c) one value, two prefixes, two verdicts")
def test_same_value_differs_by_position():
    schema = Schema((SchemaAttribute("x", "float"),))
    low = [(-1.0) ** i for i in range(40)]  # mean 0, std 1
    high = [10.0 + (-1.0) ** i for i in range(40)]  # mean 10, std 1
    verdicts = []
    for prefix in (low, low + high * 3):
        state = StreamState(schema)
        for i, x in enumerate(prefix, start=1):
            state.commit(DataVector(i, at(i), (x,)))
        verdicts.append(is_outlier(10.0, state.stats["x"], 3.0))
    assert verdicts == [True, False]


# -- 7: streaming vs offline keep-first ------------------------------------------------

ORACLE_SCHEMA = Schema(
    (
        SchemaAttribute("k1", "integer", key_member=True),
        SchemaAttribute("k2", "text", key_member=True),
        SchemaAttribute("serial", "integer", unique=True, nullable=True),
        SchemaAttribute("a", "integer"),
        SchemaAttribute("b", "float"),
    ),
    contradiction_scope=("a", "b"),
)
ORDER_MODULES = ("uniqueness", "duplicate", "contradiction")


def random_keyed_stream(seed: int, n: int = 1000) -> list[DataVector]:
    rng = random.Random(seed)
    out: list[DataVector] = []
    for i in range(n):
        if out and rng.random() < 0.1:
            values = rng.choice(out).values
        else:
            values = (
                rng.randint(0, 40),
                rng.choice("xyz"),
                None if rng.random() < 0.05 else rng.randint(0, 3000),
                rng.randint(0, 2),
                rng.choice((0.5, 1.5)),
            )
        out.append(DataVector(i + 1, at(i), values))
    return out


def offline_keep_first(stream, reject: bool):
    """Quadratic scan: every vector is compared against all earlier kept vectors."""
    kept: list[tuple] = []
    findings = []
    for v in stream:
        k1, k2, serial, a, b = v.values
        mine = []
        if serial is not None and any(p[2] == serial for p in kept):
            mine.append((v.index, "serial", "uniqueness"))
        if not (reject and mine):
            if any(p == v.values for p in kept):
                mine.append((v.index, None, "duplicate"))
        if not (reject and mine):
            first = next((p for p in kept if (p[0], p[1]) == (k1, k2)), None)
            if first is not None:
                if first[3] != a:
                    mine.append((v.index, "a", "contradiction"))
                if first[4] != b:
                    mine.append((v.index, "b", "contradiction"))
        findings.extend(mine)
        if not (reject and mine):
            kept.append(v.values)
    return findings


@criterion(7, "streaming order-conflict findings equal an offline keep-first pass (100 seeds x 1000 vectors)")
@pytest.mark.parametrize("reject", [False, True], ids=["detect", "reject"])
def test_streaming_equals_offline_oracle(reject):
    strategy = "reject_vector" if reject else None
    config = PipelineConfig(ORACLE_SCHEMA, tuple(ModuleConfig(t, strategy) for t in ORDER_MODULES))
    for seed in range(100):
        stream = random_keyed_stream(seed)
        run = build_pipeline(config).run_stream(stream)
        got = [(f.vector_index, f.attribute, f.error_type) for f in run.findings]
        assert got == offline_keep_first(stream, reject), seed


# -- 8: state correctness ------------------------------------------------------------


@criterion(8, "Welford statistics equal two-pass computation within 1e-9 relative")
def test_welford_on_ten_thousand_values():
    rng = random.Random(8)
    xs = [rng.gauss(1e3, 25.0) * rng.choice((1, 1, 1, 40)) for _ in range(10_000)]
    s = RunningStats()
    for x in xs:
        s = update_stats(s, x)
    mean = math.fsum(xs) / len(xs)
    var = math.fsum((x - mean) ** 2 for x in xs) / len(xs)
    assert math.isclose(s.mean, mean, rel_tol=1e-9)
    assert math.isclose(s.variance, var, rel_tol=1e-9)
    assert math.isclose(s.std, math.sqrt(var), rel_tol=1e-9)


WINDOWS = (
    WindowSpec("tumbling", "count", 25),
    WindowSpec("sliding", "count", 40, 15),
    WindowSpec("tumbling", "time", timedelta(seconds=90)),
    WindowSpec("sliding", "time", timedelta(seconds=120), timedelta(seconds=45)),
)


def brute_members(spec, history, now):
    """Enumerate every aligned window and take the earliest one holding the query point."""
    if spec.measure == "count":
        point = len(history) - 1
        candidates = [s for s in range(0, point + 1) if s % spec.step == 0 and s <= point < s + spec.size]
        start = min(candidates)
        return [x for i, (_, x) in enumerate(history) if start <= i < start + spec.size]
    ms = lambda t: round(t.timestamp() * 1000)
    size, step, point = ms(T0 + spec.size) - ms(T0), ms(T0 + spec.step) - ms(T0), ms(now)
    candidates = [s for s in range(point - size + 1, point + 1) if s % step == 0]
    start = min(candidates)
    return [x for t, x in history if start <= ms(t) < start + size and ms(t) <= point]


@criterion(8, "window snapshots equal brute-force membership on 1000-vector streams")
@pytest.mark.parametrize("spec", WINDOWS, ids=lambda s: f"{s.kind}-{s.measure}")
def test_windows_match_brute_force(spec):
    schema = Schema((SchemaAttribute("x", "float"),))
    for seed in range(3):
        rng = random.Random(seed)
        state = StreamState(schema, windows=[spec])
        history = []
        t = T0
        for i in range(1, 1001):
            t += timedelta(milliseconds=rng.choice((0, 250, 1000, 5000, 30_000)))
            x = rng.uniform(-50, 50)
            state.commit(DataVector(i, t, (x,)))
            history.append((t, x))
            got = window_snapshot(state, spec, t)["x"]
            want = stats_of(brute_members(spec, history, t))
            assert (got.count, got.mean, got.m2) == (want.count, want.mean, want.m2)


# -- 9: determinism --------------------------------------------------------------------


def _doc(kind, strategy, profile, size, **injection):
    return {
        "seed": 42,
        "dataset": {"profile": profile, "size": size},
        "injection": {"error_type": kind, **injection},
        "pipeline": {"modules": [{"error_type": kind, "strategy": strategy}]},
    }


@criterion(9, "repeated experiments with the same seed give byte-identical reports")
@pytest.mark.parametrize(
    "doc",
    [
        _doc("duplicate", "reject_vector", "intel_like", 20160),
        _doc("interval", "random_in_interval", "intel_like", 5000),
        _doc("fd", "set_dependent_from_mapping", "taxi_like", 10000, params={"fds": ["rate_tax", "fare"]}),
    ],
    ids=["duplicate", "interval", "fd"],
)
def test_experiments_are_reproducible(tmp_path, doc):
    first = run_experiment(spec_from_dict(doc), tmp_path / "one")
    second = run_experiment(spec_from_dict(doc), tmp_path / "two")
    for name in first.manifest["artifacts"]:
        assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes(), name
    strip = lambda m: {k: v for k, v in m.items() if k not in ("started_at", "finished_at")}
    a = json.loads((first.directory / "manifest.json").read_text())
    b = json.loads((second.directory / "manifest.json").read_text())
    assert strip(a) == strip(b)


# -- 10: evaluator identities ----------------------------------------------------------

MICRO_SCHEMA = Schema(
    (
        SchemaAttribute("id", "integer", key_member=True),
        SchemaAttribute("x", "float"),
        SchemaAttribute("y", "integer", interval=IntervalConstraint.discrete({1, 2, 3})),
    ),
    contradiction_scope=("x",),
)
MICRO_TYPES = ("interval", "missing", "outlier", "duplicate", "contradiction", "missing_vector", "fd")


def brute_score(log, findings, n):
    """Cell-by-cell count over the whole (vector, column) grid."""
    names = MICRO_SCHEMA.names
    out = {}
    for name in names:
        injected = identified = correct = 0
        for i in range(1, n + 1):
            inj = any(e.vector_index == i and e.attribute == name for e in log.entries)
            hit = False
            for f in findings:
                if f.vector_index != i:
                    continue
                if f.error_type in ("duplicate", "missing_vector"):
                    hit = True
                elif f.error_type == "contradiction":
                    hit = hit or name == "id"
                else:
                    hit = hit or f.attribute == name
            injected += inj
            identified += hit
            correct += inj and hit
        out[name] = (injected, identified, correct, injected - correct, identified - correct)
    return out


@criterion(10, "evaluator identities hold and match a brute-force scorer on 1000 micro-experiments")
def test_evaluator_against_brute_force():
    rng = random.Random(10)
    for _ in range(1000):
        n = rng.randint(1, 12)
        truth = [DataVector(i, at(i), (i, float(i), 1 + i % 3)) for i in range(1, n + 1)]
        log = InjectionLog(
            [
                Injection(rng.randint(1, n), rng.choice(MICRO_SCHEMA.names), "interval", None, None)
                for _ in range(rng.randint(0, 6))
            ]
        )
        log = InjectionLog(list({(e.vector_index, e.attribute): e for e in log.entries}.values()))
        entries = []
        all_findings = []
        for v in truth:
            fs = [
                Finding(v.index, rng.choice((None, *MICRO_SCHEMA.names)), rng.choice(MICRO_TYPES))
                for _ in range(rng.choice((0, 0, 1, 2)))
            ]
            fs = [f if f.attribute or f.error_type in ("duplicate", "missing_vector") else Finding(f.vector_index, "x", f.error_type) for f in fs]
            all_findings.extend(fs)
            entries.append(VectorResult(v.index, "flagged" if fs else "pass", fs))
        run = RunLog(entries, list(truth))
        report = score(log, run, truth, truth, MICRO_SCHEMA)
        want = brute_score(log, all_findings, n)
        for name, m in report.columns.items():
            assert (m.injected, m.identified, m.correct, m.false_negatives, m.false_positives) == want[name]
            assert m.identified == m.correct + m.false_positives
            assert m.injected == m.correct + m.false_negatives
        t = report.total
        assert t.identified == t.correct + t.false_positives
        assert t.injected == t.correct + t.false_negatives
        assert t.injected == sum(w[0] for w in want.values())


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-q"]))
