"""End-to-end experiment: ground truth, injection, cleaning, scoring, persistence."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from .. import __version__
from ..evaluator import MetricsReport, render_report, score
from ..injector import InjectionSpec, inject, verify_ground_truth
from ..model import DataVector, Schema
from ..pipeline import ConfigFault, ModuleConfig, PipelineConfig, build_pipeline
from . import datasets
from .files import (
    ConfigError,
    HarnessIOError,
    horizon_from_doc,
    injection_from_dict,
    load_schema,
    modules_from_list,
    read_stream,
    save_schema,
    write_injection_log,
    write_runlog,
    write_stream,
)

ARTIFACTS = (
    "ground_truth.csv",
    "schema.yaml",
    "corrupted.csv",
    "injections.csv",
    "runlog.jsonl",
    "cleaned.csv",
    "report.csv",
    "report.json",
)


@dataclass(frozen=True)
class DatasetSpec:
    """Where ground truth comes from: a file plus recipe, or a synthesis profile."""

    source: str | None = None
    schema: str | None = None
    recipe: str = "none"
    profile: str | None = None
    size: int | None = None
    sampling: Mapping[str, Any] = field(default_factory=dict)

    def faults(self) -> list[str]:
        out = []
        if (self.source is None) == (self.profile is None):
            out.append("dataset needs exactly one of source or profile")
        if self.source is not None and self.schema is None:
            out.append("a dataset source needs a schema path")
        if self.recipe not in datasets.RECIPES:
            out.append(f"unknown recipe {self.recipe!r}; expected one of {datasets.RECIPES}")
        if self.profile is not None:
            if self.profile not in datasets.PROFILES:
                out.append(f"unknown profile {self.profile!r}")
            if self.size is None or self.size < 100:
                out.append("a synthesized dataset needs size >= 100")
        return out


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetSpec
    injection: InjectionSpec
    modules: tuple[ModuleConfig, ...]
    seed: int
    output: str | None = None
    horizon: Any = None
    type_strategy: str = "convert_with_fixups"
    document: Mapping[str, Any] = field(default_factory=dict)

    def faults(self) -> list[str]:
        out = self.dataset.faults()
        types = {m.error_type for m in self.modules}
        if types - {self.injection.error_type}:
            out.append(
                f"a reproduction run examines one error type; modules {sorted(types)} "
                f"differ from injected {self.injection.error_type!r}"
            )
        return out

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.document, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def spec_from_dict(doc: Mapping[str, Any], seed: int | None = None, output: str | None = None) -> ExperimentSpec:
    """Build a spec from a config document; explicit arguments override it."""
    doc = dict(doc)
    if seed is not None:
        doc["seed"] = seed
    if "seed" not in doc:
        raise ConfigError("an experiment needs a seed")
    try:
        seed = int(doc["seed"])
        d = dict(doc.get("dataset") or {})
        dataset = DatasetSpec(
            source=d.get("source"),
            schema=d.get("schema"),
            recipe=d.get("recipe", "none"),
            profile=d.get("profile"),
            size=d.get("size"),
            sampling=dict(d.get("sampling") or {}),
        )
        if "injection" not in doc:
            raise ConfigError("an experiment needs an injection section")
        injection = injection_from_dict(doc["injection"], seed)
        pipeline = dict(doc.get("pipeline") or {})
        modules = modules_from_list(pipeline.get("modules", ()))
        return ExperimentSpec(
            dataset=dataset,
            injection=injection,
            modules=modules,
            seed=seed,
            output=output or doc.get("output"),
            horizon=horizon_from_doc(pipeline.get("horizon")),
            type_strategy=pipeline.get("type_strategy", "convert_with_fixups"),
            document=doc,
        )
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed experiment document: {exc}") from exc


def load_ground_truth(spec: DatasetSpec, seed: int) -> tuple[list[DataVector], Schema, list[str]]:
    faults = spec.faults()
    if faults:
        raise ConfigFault(faults)
    log: list[str] = []
    if spec.profile is not None:
        stream, schema = datasets.synthesize_dataset(spec.profile, spec.size, seed)
    else:
        schema = load_schema(spec.schema)
        stream = read_stream(spec.source, schema, strict_arrival=spec.recipe != "taxi_prep")
        if spec.recipe == "intel_prep":
            stream, log = datasets.prep_intel(stream, schema, slots=spec.sampling.get("slots"))
        elif spec.recipe == "taxi_prep":
            stream, log = datasets.prep_taxi(stream, schema, seed)
    if spec.sampling.get("limit") is not None or spec.sampling.get("start"):
        stream = datasets.sample(stream, spec.sampling.get("limit"), int(spec.sampling.get("start", 0)))
    return stream, schema, log


@dataclass
class ExperimentResult:
    directory: Path
    report: MetricsReport
    manifest: dict[str, Any]


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run and persist one experiment.

    Outputs are assembled in a scratch directory next to the target and moved
    into place only when complete, so a failure leaves no partial artifacts.
    """
    target = Path(out_dir or spec.output or "")
    if not str(target):
        raise ConfigError("an experiment needs an output directory")
    faults = spec.faults()
    if faults:
        raise ConfigFault(faults)
    started = datetime.now(timezone.utc)

    truth, schema, prep_log = load_ground_truth(spec.dataset, spec.seed)
    config = PipelineConfig(schema, spec.modules, spec.seed, spec.horizon, spec.type_strategy)
    pipeline = build_pipeline(config)
    residual = verify_ground_truth(truth, schema)
    if residual:
        first = residual[0]
        raise ConfigFault(
            [f"ground truth is not clean: {len(residual)} findings, first {first.error_type} at vector {first.vector_index}"]
        )
    corrupted, injections = inject(truth, spec.injection, schema)
    run = pipeline.run_stream(corrupted)
    report = score(injections, run, truth, run.committed, schema, {spec.injection.error_type})

    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    except OSError as exc:
        raise HarnessIOError(f"{target}: {exc.strerror or exc}") from exc
    try:
        write_stream(scratch / "ground_truth.csv", truth, schema)
        save_schema(scratch / "schema.yaml", schema)
        write_stream(scratch / "corrupted.csv", corrupted, schema)
        write_injection_log(scratch / "injections.csv", injections)
        write_runlog(scratch / "runlog.jsonl", run)
        write_stream(scratch / "cleaned.csv", run.committed, schema, synthetic_column=True)
        (scratch / "report.csv").write_text(render_report(report, "table"), encoding="utf-8")
        (scratch / "report.json").write_text(render_report(report, "structured"), encoding="utf-8")
        manifest = {
            "version": __version__,
            "seed": spec.seed,
            "config_sha256": spec.config_hash,
            "config": spec.document,
            "error_type": spec.injection.error_type,
            "stages": list(pipeline.stages),
            "vectors": {"truth": len(truth), "corrupted": len(corrupted), "cleaned": len(run.committed)},
            "prep_log": prep_log,
            "artifacts": {name: _digest(scratch / name) for name in ARTIFACTS},
            "started_at": started.isoformat(),
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }
        (scratch / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8"
        )
        if target.exists():
            shutil.rmtree(target)
        os.replace(scratch, target)
    except OSError as exc:
        shutil.rmtree(scratch, ignore_errors=True)
        raise HarnessIOError(f"{getattr(exc, 'filename', None) or target}: {exc.strerror or exc}") from exc
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    return ExperimentResult(target, report, manifest)
