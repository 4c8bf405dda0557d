from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from streamclean.harness.datasets import synthesize_dataset
from streamclean.model import DataVector, FunctionalDependency, IntervalConstraint, Schema, SchemaAttribute

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)


def at(seconds: float) -> datetime:
    return T0 + timedelta(seconds=seconds)


def make_stream(rows, cadence: float = 1.0, start: int = 1) -> list[DataVector]:
    return [DataVector(start + i, at(i * cadence), tuple(r)) for i, r in enumerate(rows)]


@pytest.fixture(scope="session")
def sensor_schema() -> Schema:
    return Schema(
        attributes=(
            SchemaAttribute("ts", "instant", unique=True, key_member=True),
            SchemaAttribute("temp", "float", interval=IntervalConstraint.continuous(-10.0, 60.0)),
            SchemaAttribute("hum", "float", interval=IntervalConstraint.continuous(0.0, 100.0)),
        ),
        expected_cadence=timedelta(seconds=1),
        contradiction_scope=("temp", "hum"),
        arrival_attribute="ts",
    )


@pytest.fixture(scope="session")
def keyed_schema() -> Schema:
    return Schema(
        attributes=(
            SchemaAttribute("id", "integer", key_member=True),
            SchemaAttribute("zone", "integer", interval=IntervalConstraint.discrete(range(1, 6))),
            SchemaAttribute("fee", "float"),
            SchemaAttribute("note", "text", nullable=True),
        ),
        functional_dependencies=(
            FunctionalDependency(("zone",), "fee", {(z,): float(z) for z in range(1, 6)}, name="zone_fee"),
        ),
        contradiction_scope=("zone", "fee"),
    )


@pytest.fixture(scope="session")
def intel():
    return synthesize_dataset("intel_like", 20160, 1)


@pytest.fixture(scope="session")
def taxi():
    return synthesize_dataset("taxi_like", 10000, 1)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, (title, []))
            item.user_properties.append(("criterion", number))


def pytest_runtest_logreport(report):
    for key, number in report.user_properties:
        if key == "criterion" and (report.when == "call" or report.outcome != "passed"):
            _criteria[number][1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title}")
