"""Command-line entry point.

Exit status: 0 on success, 1 on a configuration fault, 2 on an I/O fault.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Sequence

from ..evaluator import FORMATS, EvaluationFault, render_report, score
from ..injector import SpecFault, inject
from ..model import ParseFault
from ..pipeline import ConfigFault, ModuleConfig, OrderingError, PipelineConfig, build_pipeline
from . import datasets
from .experiment import run_experiment, spec_from_dict
from .files import (
    ConfigError,
    HarnessIOError,
    horizon_from_doc,
    injection_from_dict,
    load_schema,
    modules_from_list,
    read_injection_log,
    read_runlog,
    read_stream,
    read_yaml,
    save_schema,
    write_injection_log,
    write_runlog,
    write_stream,
)

CONFIG_FAULTS = (ConfigFault, ConfigError, SpecFault, datasets.DatasetFault, EvaluationFault, OrderingError)
IO_FAULTS = (HarnessIOError, ParseFault, OSError)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--schema", help="schema document (YAML)")
    p.add_argument("--config", help="configuration document (YAML)")
    p.add_argument("--seed", type=int, help="random seed; overrides the config")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--format", choices=FORMATS, default="table", help="report format")
    p.add_argument("--modules", help="comma-separated error types in pipeline order")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="streamclean", description="Streaming data cleaning experiments.")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("prep", parents=[common], help="prepare a raw capture as ground truth")
    p.add_argument("--recipe", choices=("intel_prep", "taxi_prep"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--slots", type=int, help="expected slot count (intel_prep)")

    p = verbs.add_parser("synth", parents=[common], help="synthesize a ground-truth stream and schema")
    p.add_argument("--profile", choices=datasets.PROFILES, required=True)
    p.add_argument("--size", type=int, required=True)

    p = verbs.add_parser("inject", parents=[common], help="inject errors into a stream")
    p.add_argument("--input", required=True)

    p = verbs.add_parser("clean", parents=[common], help="run the cleaning pipeline over a stream")
    p.add_argument("--input", required=True)

    p = verbs.add_parser("score", parents=[common], help="score a cleaning run")
    p.add_argument("--truth", required=True)
    p.add_argument("--injections", required=True)
    p.add_argument("--runlog", required=True)
    p.add_argument("--cleaned", required=True)
    p.add_argument("--error-types", help="comma-separated error types to score (default: all)")

    verbs.add_parser("experiment", parents=[common], help="run a full experiment from a config")
    return parser


def _need(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"{args.verb} needs {', '.join(missing)}")


def _config(args: argparse.Namespace) -> dict[str, Any]:
    if args.config is None:
        return {}
    doc = read_yaml(args.config)
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.config}: expected a mapping at top level")
    return doc


def _modules(args: argparse.Namespace, doc: dict[str, Any]) -> tuple[ModuleConfig, ...]:
    configured = modules_from_list((doc.get("pipeline") or {}).get("modules", ()))
    if args.modules is None:
        return configured
    by_type = {m.error_type: m for m in configured}
    names = [n.strip() for n in args.modules.split(",") if n.strip()]
    return tuple(by_type.get(n, ModuleConfig(n)) for n in names)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise HarnessIOError(f"{out}: {exc.strerror or exc}") from exc


def _outdir(path: str) -> Path:
    try:
        Path(path).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessIOError(f"{path}: {exc.strerror or exc}") from exc
    return Path(path)


def cmd_prep(args: argparse.Namespace) -> None:
    _need(args, "schema", "out")
    schema = load_schema(args.schema)
    raw = read_stream(args.input, schema, strict_arrival=args.recipe != "taxi_prep")
    if args.recipe == "intel_prep":
        stream, log = datasets.prep_intel(raw, schema, slots=args.slots)
    else:
        stream, log = datasets.prep_taxi(raw, schema, args.seed or 0)
    write_stream(args.out, stream, schema)
    for line in log:
        print(line, file=sys.stderr)


def cmd_synth(args: argparse.Namespace) -> None:
    _need(args, "out")
    stream, schema = datasets.synthesize_dataset(args.profile, args.size, args.seed or 0)
    out = _outdir(args.out)
    write_stream(out / "ground_truth.csv", stream, schema)
    save_schema(out / "schema.yaml", schema)


def cmd_inject(args: argparse.Namespace) -> None:
    _need(args, "schema", "config", "out")
    doc = _config(args)
    if "injection" not in doc:
        raise ConfigError(f"{args.config}: no injection section")
    schema = load_schema(args.schema)
    spec = injection_from_dict(doc["injection"], args.seed if args.seed is not None else doc.get("seed", 0))
    if args.seed is not None:
        spec = type(spec)(spec.error_type, spec.attributes, spec.rate, spec.count, args.seed, spec.params)
    corrupted, log = inject(read_stream(args.input, schema), spec, schema)
    out = _outdir(args.out)
    write_stream(out / "corrupted.csv", corrupted, schema)
    write_injection_log(out / "injections.csv", log)


def cmd_clean(args: argparse.Namespace) -> None:
    _need(args, "schema", "out")
    doc = _config(args)
    schema = load_schema(args.schema)
    pipeline_doc = doc.get("pipeline") or {}
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    config = PipelineConfig(
        schema,
        _modules(args, doc),
        seed,
        horizon_from_doc(pipeline_doc.get("horizon")),
        pipeline_doc.get("type_strategy", "convert_with_fixups"),
    )
    pipeline = build_pipeline(config)
    run = pipeline.run_stream(read_stream(args.input, schema))
    out = _outdir(args.out)
    write_runlog(out / "runlog.jsonl", run)
    write_stream(out / "cleaned.csv", run.committed, schema, synthetic_column=True)


def cmd_score(args: argparse.Namespace) -> None:
    _need(args, "schema")
    schema = load_schema(args.schema)
    cleaned = read_stream(args.cleaned, schema)
    run = read_runlog(args.runlog, cleaned)
    types = [t.strip() for t in args.error_types.split(",")] if args.error_types else None
    report = score(read_injection_log(args.injections), run, read_stream(args.truth, schema), cleaned, schema, types)
    _emit(render_report(report, args.format), args.out)


def cmd_experiment(args: argparse.Namespace) -> None:
    _need(args, "config")
    doc = _config(args)
    if args.modules is not None:
        pipeline_doc = dict(doc.get("pipeline") or {})
        by_type = {m if isinstance(m, str) else m.get("error_type"): m for m in pipeline_doc.get("modules", ())}
        names = [n.strip() for n in args.modules.split(",") if n.strip()]
        doc["pipeline"] = dict(pipeline_doc, modules=[by_type.get(n, n) for n in names])
    spec = spec_from_dict(doc, args.seed, args.out)
    result = run_experiment(spec)
    sys.stdout.write(render_report(result.report, args.format))


COMMANDS = {
    "prep": cmd_prep,
    "synth": cmd_synth,
    "inject": cmd_inject,
    "clean": cmd_clean,
    "score": cmd_score,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.verb](args)
    except CONFIG_FAULTS as exc:
        print(f"config fault: {exc}", file=sys.stderr)
        return 1
    except IO_FAULTS as exc:
        print(f"I/O fault: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
