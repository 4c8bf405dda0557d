"""Controlled error injection into a verified ground-truth stream.

``inject`` returns the corrupted stream and an exact log of what it changed,
which the evaluator scores the pipeline against. All randomness comes from a
``random.Random`` seeded from the ``InjectionSpec``, so identical inputs give identical output.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Mapping, Sequence

from .detectors import Finding
from .model import DataVector, Schema, SchemaAttribute, as_number
from .pipeline import ModuleConfig, PipelineConfig, build_pipeline

INJECTABLE = ("missing", "interval", "outlier", "wrong_type", "fd", "uniqueness", "contradiction", "duplicate")
KEY_BASED = ("uniqueness", "contradiction", "duplicate")

# Defaults: 5 % of vectors for key-based errors, 2.5 % per column for value errors.
DEFAULT_RATES = {"uniqueness": 0.05, "contradiction": 0.05, "duplicate": 0.05}
DEFAULT_VALUE_RATE = 0.025


class SpecFault(ValueError):
    pass


@dataclass(frozen=True)
class InjectionSpec:
    error_type: str
    attributes: tuple[str, ...] | None = None
    rate: float | None = None
    count: int | None = None
    seed: int = 0
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Injection:
    vector_index: int
    attribute: str
    error_type: str
    original: Any
    injected: Any


@dataclass
class InjectionLog:
    entries: list[Injection] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.attribute] = out.get(e.attribute, 0) + 1
        return out

    @property
    def total(self) -> int:
        return len(self.entries)

    def vector_indices(self) -> set[int]:
        return {e.vector_index for e in self.entries}


def _how_many(spec: InjectionSpec, n: int) -> int:
    if spec.count is not None:
        k = spec.count
    else:
        rate = spec.rate
        if rate is None:
            rate = DEFAULT_RATES.get(spec.error_type, DEFAULT_VALUE_RATE)
        if not 0 <= rate <= 1:
            raise SpecFault(f"rate {rate} outside [0, 1]")
        k = round(rate * n)
    if k < 0 or k > n:
        raise SpecFault(f"cannot inject {k} errors into {n} vectors")
    return k


def _sample(rng: random.Random, population: Sequence[int], k: int, what: str) -> list[int]:
    if k > len(population):
        raise SpecFault(f"{what}: {k} injections requested, only {len(population)} eligible positions")
    return sorted(rng.sample(list(population), k))


def _column_sigma(dataset: Sequence[DataVector], pos: int) -> tuple[float, float]:
    xs = [as_number(v.values[pos]) for v in dataset]
    xs = [x for x in xs if x is not None]
    if not xs:
        return 0.0, 0.0
    mean = math.fsum(xs) / len(xs)
    return mean, math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))


def _out_of_interval(x: Any, attr: SchemaAttribute, rng: random.Random, params: Mapping[str, Any]) -> Any:
    iv = attr.interval
    if iv.is_discrete:
        if iv.is_ordinal:
            step = rng.randint(1, 10)
            return max(iv.allowed) + step if rng.random() < 0.5 else min(iv.allowed) - step
        return f"{x}_invalid"
    sides = [s for s, b in (("lower", iv.lower), ("upper", iv.upper)) if b is not None]
    side = rng.choice(sides)
    if iv.lower is not None and iv.upper is not None:
        width = iv.upper - iv.lower
    else:
        width = float(params.get("width", abs(iv.lower if side == "lower" else iv.upper) or 1.0))
    magnitude = (1.0 - rng.random()) * float(params.get("max_fraction", 0.5)) * width
    if attr.declared_type == "integer":
        magnitude = max(1, math.ceil(magnitude))
        return int(iv.lower - magnitude) if side == "lower" else int(iv.upper + magnitude)
    new = iv.lower - magnitude if side == "lower" else iv.upper + magnitude
    while iv.contains(new):
        new = math.nextafter(new, -math.inf if side == "lower" else math.inf)
    return new


def corrupt_surface(x: Any, attr: SchemaAttribute) -> str | None:
    """Render *x* in a form the strict parser rejects but fix-ups can recover."""
    t = attr.declared_type
    if t == "float":
        text = repr(float(x))
        if "e" in text or "inf" in text or "nan" in text:
            return None
        return text.replace(".", ",")
    if t == "integer":
        return f"{x:,}" if abs(x) >= 1000 else f"{x}.0"
    if t == "instant":
        ms = x.microsecond // 1000
        base = x.strftime("%d.%m.%Y %H:%M:%S")
        return f"{base}.{ms:03d}" if ms else base
    if t == "boolean":
        return "yes" if x else "no"
    return None


def _targets(spec: InjectionSpec, schema: Schema, default: Sequence[str]) -> tuple[str, ...]:
    names = tuple(spec.attributes) if spec.attributes else tuple(default)
    for name in names:
        if name not in schema.names:
            raise SpecFault(f"unknown attribute {name!r}")
    return names


def _inject_values(dataset, spec, schema, rng, log):
    t = spec.error_type
    n = len(dataset)
    if t == "interval":
        default = [a.name for a in schema.attributes if a.interval is not None]
    elif t == "outlier":
        default = [a.name for a in schema.attributes if a.numeric and not a.unique and not a.key_member]
    elif t == "wrong_type":
        default = [a.name for a in schema.attributes if a.declared_type != "text"]
    else:
        default = [a.name for a in schema.attributes if not a.nullable]
    targets = _targets(spec, schema, default)
    rows = [list(v.values) for v in dataset]
    wrong = [set(v.wrong_type) for v in dataset]
    k = _how_many(spec, n)
    for name in targets:
        pos = schema.position(name)
        attr = schema.attributes[pos]
        if t == "interval" and attr.interval is None:
            raise SpecFault(f"interval injection: {name!r} has no interval")
        if t == "outlier" and not attr.numeric:
            raise SpecFault(f"outlier injection: {name!r} is not numeric")
        eligible = [i for i in range(n) if rows[i][pos] is not None]
        if t == "wrong_type":
            eligible = [i for i in eligible if corrupt_surface(rows[i][pos], attr) is not None]
        if t == "outlier":
            mean, sigma = _column_sigma(dataset, pos)
            lo, hi = float(spec.params.get("min_sigma", 4.0)), float(spec.params.get("max_sigma", 8.0))
            direction = spec.params.get("direction", "away")
        for i in _sample(rng, eligible, k, f"{t} on {name}"):
            old = rows[i][pos]
            if t == "missing":
                new = None
            elif t == "interval":
                new = _out_of_interval(old, attr, rng, spec.params)
            elif t == "outlier":
                shift = rng.uniform(lo, hi) * sigma
                if direction == "away":
                    sign = 1.0 if float(old) >= mean else -1.0
                else:
                    sign = rng.choice((-1.0, 1.0))
                new = float(old) + sign * shift
                if attr.declared_type == "integer":
                    new = int(round(new))
            else:
                new = corrupt_surface(old, attr)
                wrong[i].add(pos)
            rows[i][pos] = new
            log.entries.append(Injection(dataset[i].index, name, t, old, new))
    return [
        DataVector(v.index, v.arrival, tuple(rows[i]), frozenset(wrong[i]), v.synthetic)
        for i, v in enumerate(dataset)
    ]


def _inject_fd(dataset, spec, schema, rng, log):
    fds = list(enumerate(schema.functional_dependencies))
    chosen = spec.params.get("fds")
    if chosen is not None:
        chosen = {chosen} if isinstance(chosen, (str, int)) else set(chosen)
        fds = [(i, fd) for i, fd in fds if i in chosen or fd.label in chosen]
    if not fds:
        raise SpecFault("fd injection: no functional dependency selected")
    rows = [list(v.values) for v in dataset]
    n = len(dataset)
    k = _how_many(spec, n)
    used: set[tuple[int, int]] = set()
    for _, fd in fds:
        det_pos = [schema.position(a) for a in fd.determinant]
        dep_pos = schema.position(fd.dependent)
        choices = sorted(set(fd.mapping.values()), key=repr)
        eligible = []
        for i in range(n):
            det = tuple(rows[i][p] for p in det_pos)
            if (i, dep_pos) not in used and det in fd.mapping and rows[i][dep_pos] == fd.mapping[det]:
                if any(c != rows[i][dep_pos] for c in choices):
                    eligible.append(i)
        for i in _sample(rng, eligible, k, f"fd {fd.label}"):
            old = rows[i][dep_pos]
            new = rng.choice([c for c in choices if c != old])
            rows[i][dep_pos] = new
            used.add((i, dep_pos))
            log.entries.append(Injection(dataset[i].index, fd.dependent, "fd", old, new))
    return [DataVector(v.index, v.arrival, tuple(rows[i]), v.wrong_type, v.synthetic) for i, v in enumerate(dataset)]


def _inject_key_collisions(dataset, spec, schema, rng, log):
    """Pair up distinct vectors; the target takes the donor's key (or unique value).

    Whether the target sits before or after its donor is a fair coin per pair.
    """
    t = spec.error_type
    n = len(dataset)
    if t == "uniqueness":
        names = _targets(spec, schema, schema.unique_attributes[:1])
        if not names or not all(schema.attribute(a).unique for a in names):
            raise SpecFault("uniqueness injection needs a unique attribute")
    else:
        names = schema.key
        if not names or not schema.contradiction_scope:
            raise SpecFault("contradiction injection needs a key and a contradiction scope")
    positions = [schema.position(a) for a in names]
    scope = [schema.position(a) for a in schema.contradiction_scope]
    k = _how_many(spec, n)
    if 2 * k > n:
        raise SpecFault(f"{t}: {k} collisions need {2 * k} distinct vectors, stream has {n}")
    order = list(range(n))
    rng.shuffle(order)
    rows = [list(v.values) for v in dataset]
    pairs = []
    pool = iter(order)
    spare: list[int] = []
    for a in pool:
        if len(pairs) == k:
            break
        partner = None
        for j, b in enumerate(spare):
            if t == "uniqueness" or any(rows[a][p] != rows[b][p] for p in scope):
                partner = spare.pop(j)
                break
        if partner is None:
            spare.append(a)
        else:
            pairs.append((min(a, partner), max(a, partner)))
    if len(pairs) < k:
        raise SpecFault(f"{t}: only {len(pairs)} suitable pairs for {k} collisions")
    for early, late in sorted(pairs):
        before = rng.random() < 0.5
        target, donor = (early, late) if before else (late, early)
        for name, p in zip(names, positions):
            old = rows[target][p]
            rows[target][p] = rows[donor][p]
            log.entries.append(Injection(dataset[target].index, name, t, old, rows[donor][p]))
    log.entries.sort(key=lambda e: (e.vector_index, e.attribute))
    return [DataVector(v.index, v.arrival, tuple(rows[i]), v.wrong_type, v.synthetic) for i, v in enumerate(dataset)]


def _inject_duplicates(dataset, spec, schema, rng, log):
    n = len(dataset)
    k = _how_many(spec, n)
    originals = rng.sample(range(n), k)
    slots: dict[int, list[int]] = {}
    for o in originals:
        slots.setdefault(rng.randint(0, n), []).append(o)
    out: list[DataVector] = []
    base = dataset[0].index if dataset else 1

    def emit(v: DataVector, arrival: datetime, copy: bool) -> None:
        index = base + len(out)
        out.append(DataVector(index, arrival, v.values, v.wrong_type, v.synthetic))
        if copy:
            for name, x in zip(schema.names, v.values):
                log.entries.append(Injection(index, name, "duplicate", None, x))

    for i in range(n + 1):
        for o in slots.get(i, ()):
            arrival = out[-1].arrival if out else dataset[0].arrival
            emit(dataset[o], arrival, True)
        if i < n:
            emit(dataset[i], dataset[i].arrival, False)
    return out


def inject(dataset: Sequence[DataVector], spec: InjectionSpec, schema: Schema) -> tuple[list[DataVector], InjectionLog]:
    """Corrupt a copy of *dataset* according to *spec*."""
    if spec.error_type not in INJECTABLE:
        raise SpecFault(f"cannot inject error type {spec.error_type!r}")
    rng = random.Random(spec.seed)
    log = InjectionLog()
    dataset = list(dataset)
    if _how_many(spec, len(dataset)) == 0:
        return dataset, log
    t = spec.error_type
    if t == "duplicate":
        out = _inject_duplicates(dataset, spec, schema, rng, log)
    elif t in ("uniqueness", "contradiction"):
        out = _inject_key_collisions(dataset, spec, schema, rng, log)
    elif t == "fd":
        out = _inject_fd(dataset, spec, schema, rng, log)
    else:
        out = _inject_values(dataset, spec, schema, rng, log)
    log.entries.sort(key=lambda e: (e.vector_index, schema.position(e.attribute)))
    return out, log


def default_detection_modules(schema: Schema) -> tuple[ModuleConfig, ...]:
    modules = []
    if any(a.interval is not None for a in schema.attributes):
        modules.append(ModuleConfig("interval"))
    if schema.functional_dependencies:
        modules.append(ModuleConfig("fd"))
    modules.append(ModuleConfig("missing"))
    if schema.unique_attributes:
        modules.append(ModuleConfig("uniqueness"))
    modules.append(ModuleConfig("duplicate"))
    if schema.key and schema.contradiction_scope:
        modules.append(ModuleConfig("contradiction"))
    if schema.expected_cadence is not None:
        modules.append(ModuleConfig("missing_vector"))
    return tuple(modules)


def verify_ground_truth(
    dataset: Sequence[DataVector], schema: Schema, config: PipelineConfig | None = None
) -> list[Finding]:
    """Run a detection-only pipeline; an empty result certifies the dataset.

    With a config, its modules are used with repairs stripped; otherwise every
    rule the schema declares is checked (outliers excluded).
    """
    if config is None:
        modules = default_detection_modules(schema)
        config = PipelineConfig(schema, modules)
    else:
        modules = tuple(ModuleConfig(m.error_type, None, m.threshold, m.warmup, m.window, m.attributes) for m in config.modules)
        config = PipelineConfig(schema, modules, config.seed, config.horizon, config.type_strategy)
    return build_pipeline(config).run_stream(dataset).findings
