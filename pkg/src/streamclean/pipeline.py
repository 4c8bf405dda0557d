"""Serial cleaning pipeline.

Every vector goes through the mandatory schema (type) check and then through
the configured modules in order. Each module detects, then optionally repairs;
later modules see earlier repairs. A rejected vector skips the remaining
modules and is never committed. State advances once per committed vector.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .detectors import (
    ERROR_TYPES,
    Finding,
    detect_contradiction,
    detect_duplicate,
    detect_fd,
    detect_interval,
    detect_missing,
    detect_missing_vectors,
    detect_outlier,
    detect_uniqueness,
    detect_wrong_type,
    missing_slots,
)
from .model import DataVector, Schema, format_value, validate_schema
from .repairers import (
    STRATEGIES,
    CleaningDecision,
    repair_fd,
    repair_interval,
    repair_missing,
    repair_order_conflict,
    repair_outlier,
    repair_wrong_type,
    synthesize_between,
)
from .state import Horizon, StreamState, WindowSpec, window_snapshot


class ConfigFault(ValueError):
    def __init__(self, faults: list[str]):
        super().__init__("; ".join(faults))
        self.faults = faults


class OrderingError(ValueError):
    """A vector was presented out of stream order; it is refused."""


@dataclass(frozen=True)
class ModuleConfig:
    error_type: str
    strategy: str | Mapping[str, str] | None = None
    threshold: float = 3.0
    warmup: int = 30
    window: WindowSpec | None = None
    attributes: tuple[str, ...] | None = None


@dataclass(frozen=True)
class PipelineConfig:
    schema: Schema
    modules: tuple[ModuleConfig, ...] = ()
    seed: int = 0
    horizon: Horizon = None
    type_strategy: str = "convert_with_fixups"


@dataclass
class VectorResult:
    index: int
    outcome: str  # pass | flagged | repaired | deleted
    findings: list[Finding] = field(default_factory=list)
    decisions: list[CleaningDecision] = field(default_factory=list)
    synthesized: int = 0

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "outcome": self.outcome,
            "findings": [f.to_dict() for f in self.findings],
            "decisions": [d.to_dict() for d in self.decisions],
            "synthesized": self.synthesized,
        }


@dataclass
class RunLog:
    entries: list[VectorResult] = field(default_factory=list)
    committed: list[DataVector] = field(default_factory=list)

    @property
    def deletions(self) -> int:
        return sum(1 for e in self.entries if e.outcome == "deleted")

    @property
    def findings(self) -> list[Finding]:
        return [f for e in self.entries for f in e.findings]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.entries)


def _module_faults(m: ModuleConfig, schema: Schema) -> list[str]:
    out = []
    t = m.error_type
    if t == "wrong_type":
        return ["wrong_type is the mandatory schema check and cannot be configured as an optional module"]
    if t not in ERROR_TYPES:
        return [f"unknown error type {t!r}"]
    legal = STRATEGIES[t]
    if isinstance(m.strategy, Mapping):
        if t != "missing":
            out.append(f"{t}: per-attribute strategies are only supported for missing values")
        for name, s in m.strategy.items():
            if s not in legal:
                out.append(f"{t}: strategy {s!r} not one of {legal}")
            if name != "*" and name not in schema.names:
                out.append(f"{t}: unknown attribute {name!r} in strategy map")
    elif m.strategy is not None and m.strategy not in legal:
        out.append(f"{t}: strategy {m.strategy!r} not one of {legal}")
    if m.threshold <= 0:
        out.append(f"{t}: threshold must be positive")
    if m.warmup < 0:
        out.append(f"{t}: warmup must be non-negative")
    for name in m.attributes or ():
        if name not in schema.names:
            out.append(f"{t}: unknown attribute {name!r}")
        elif t == "outlier" and not schema.attribute(name).numeric:
            out.append(f"outlier: attribute {name!r} is not numeric")
    if t == "uniqueness" and not schema.unique_attributes:
        out.append("uniqueness: schema declares no unique attribute")
    if t == "contradiction" and not (schema.key and schema.contradiction_scope):
        out.append("contradiction: schema needs a key and a contradiction scope")
    if t == "missing_vector" and schema.expected_cadence is None:
        out.append("missing_vector: schema has no expected cadence")
    if t == "fd" and not schema.functional_dependencies:
        out.append("fd: schema declares no functional dependency")
    if m.window is not None and t != "outlier":
        out.append(f"{t}: windows are only used by the outlier module")
    return out


def validate_config(config: PipelineConfig) -> list[str]:
    faults = list(validate_schema(config.schema))
    if config.type_strategy not in STRATEGIES["wrong_type"]:
        faults.append(f"type strategy {config.type_strategy!r} not one of {STRATEGIES['wrong_type']}")
    seen: set[str] = set()
    for m in config.modules:
        if m.error_type in seen:
            faults.append(f"error type {m.error_type!r} configured twice")
        seen.add(m.error_type)
        faults.extend(_module_faults(m, config.schema))
    return faults


class Pipeline:
    """A validated, ordered chain of cleaning modules bound to its own state."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.schema = config.schema
        self.modules = tuple(config.modules)
        windows = {m.window for m in self.modules if m.window is not None}
        self.state = StreamState(self.schema, config.horizon, windows)
        self.rng = random.Random(config.seed)
        self._last_seen: DataVector | None = None
        self._last_committed: DataVector | None = None

    @property
    def stages(self) -> tuple[str, ...]:
        return ("schema_check",) + tuple(m.error_type for m in self.modules)

    def _check_order(self, v: DataVector) -> None:
        last = self._last_seen
        if last is None:
            return
        if v.index != last.index + 1:
            raise OrderingError(f"vector {v.index} presented after {last.index}")
        if v.arrival < last.arrival:
            raise OrderingError(
                f"vector {v.index} arrives at {format_value(v.arrival)}, before {format_value(last.arrival)}"
            )

    def _run_module(self, m: ModuleConfig, v: DataVector, pending: list[DataVector]):
        """Detect and optionally repair; returns (vector or None, findings, decision or None)."""
        schema, state = self.schema, self.state
        t = m.error_type
        stats = None
        if t == "uniqueness":
            findings = detect_uniqueness(v, state, schema)
        elif t == "interval":
            findings = detect_interval(v, schema)
        elif t == "fd":
            findings = detect_fd(v, schema, state)
        elif t == "missing":
            findings = detect_missing(v, schema)
        elif t == "duplicate":
            found = detect_duplicate(v, state)
            findings = [found] if found else []
        elif t == "contradiction":
            findings = detect_contradiction(v, state, schema)
        elif t == "outlier":
            if m.window is not None:
                stats = window_snapshot(state, m.window, v.arrival)
            findings = detect_outlier(v, state, schema, m.threshold, m.warmup, stats, m.attributes)
        elif t == "missing_vector":
            findings = detect_missing_vectors(state, v, schema)
        else:  # pragma: no cover - rejected by validation
            raise ValueError(t)
        if m.attributes and t not in ("outlier", "missing_vector", "duplicate"):
            findings = [f for f in findings if f.attribute in m.attributes]
        if not findings or m.strategy is None:
            return v, findings, None

        if t in ("uniqueness", "duplicate", "contradiction"):
            out, decision = repair_order_conflict(v, findings, m.strategy, state, schema)
        elif t == "interval":
            out, decision = repair_interval(v, findings, state, schema, m.strategy, self.rng)
        elif t == "fd":
            out, decision = repair_fd(v, findings, schema, m.strategy, state)
        elif t == "missing":
            out, decision = repair_missing(v, findings, state, schema, m.strategy)
        elif t == "outlier":
            out, decision = repair_outlier(v, findings, state, m.strategy, m.threshold, stats)
        else:
            previous = self._last_committed
            decision = CleaningDecision(v.index, t, findings=list(findings))
            if previous is None:
                decision.notes.append("no committed vector to interpolate from")
            else:
                slots = missing_slots(state.last_arrival, v.arrival, schema.expected_cadence)
                pending.extend(synthesize_between(previous, v, slots, schema))
                decision.notes.append(f"synthesized {len(slots)} vectors")
            out = v
        return out, findings, decision

    def process(self, v: DataVector) -> tuple[VectorResult, list[DataVector]]:
        """Clean one vector; returns its result and the vectors committed for it."""
        self._check_order(v)
        self._last_seen = v
        result = VectorResult(v.index, "pass")

        findings = detect_wrong_type(v, self.schema)
        if findings:
            v, decision = repair_wrong_type(v, findings, self.schema, self.config.type_strategy)
            result.findings.extend(findings)
            result.decisions.append(decision)

        pending: list[DataVector] = []
        current: DataVector | None = v
        for m in self.modules:
            current, findings, decision = self._run_module(m, current, pending)
            result.findings.extend(findings)
            if decision is not None:
                result.decisions.append(decision)
            if current is None:
                break

        committed: list[DataVector] = []
        if current is None:
            result.outcome = "deleted"
        else:
            for synthetic in pending:
                self.state.commit(synthetic)
                committed.append(synthetic)
            self.state.commit(current)
            committed.append(current)
            self._last_committed = current
            result.synthesized = len(pending)
            if any(d.changes for d in result.decisions):
                result.outcome = "repaired"
            elif result.findings:
                result.outcome = "flagged"
        return result, committed

    def run_stream(self, source: Iterable[DataVector]) -> RunLog:
        log = RunLog()
        for v in source:
            result, committed = self.process(v)
            log.entries.append(result)
            log.committed.extend(committed)
        return log


def build_pipeline(config: PipelineConfig) -> Pipeline:
    faults = validate_config(config)
    if faults:
        raise ConfigFault(faults)
    return Pipeline(config)


def run_stream(pipeline: Pipeline, source: Iterable[DataVector]) -> RunLog:
    return pipeline.run_stream(source)
