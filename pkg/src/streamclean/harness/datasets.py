"""Ground-truth streams: preparation of raw captures and seeded synthesis.

Two profiles exist. ``intel_like`` is a fixed-cadence sensor series with a
daily cycle; ``taxi_like`` is a keyed stream of trip records whose fare
components satisfy explicit functional dependencies.
"""

from __future__ import annotations

import math
import random
from datetime import datetime, timedelta, timezone
from typing import Any, Sequence

from ..model import (
    DataVector,
    FunctionalDependency,
    IntervalConstraint,
    Schema,
    SchemaAttribute,
    format_value,
    to_instant,
)

PROFILES = ("intel_like", "taxi_like")
RECIPES = ("intel_prep", "taxi_prep", "none")

INTEL_START = datetime(2004, 3, 1, tzinfo=timezone.utc)
INTEL_CADENCE = timedelta(seconds=30)
TAXI_DAY = datetime(2022, 3, 1, tzinfo=timezone.utc)

CANCEL_VALUE = "cancel_out"
PLAIN_VALUE = "none"
AIRPORT_ZONES = (1, 132, 138)
RATECODES = (1, 2, 3, 4, 5, 6)


class DatasetFault(ValueError):
    pass


# -- schemas ---------------------------------------------------------------------------


def intel_schema() -> Schema:
    def measure(name: str, lo: float, hi: float) -> SchemaAttribute:
        return SchemaAttribute(
            name, "float", interval=IntervalConstraint.continuous(lo, hi), missing_markers=frozenset({"N/A", -9999})
        )

    return Schema(
        attributes=(
            SchemaAttribute("timestamp", "instant", unique=True, key_member=True),
            measure("temperature", -10.0, 60.0),
            measure("humidity", 0.0, 100.0),
            measure("light", 0.0, 2000.0),
            measure("voltage", 2.0, 3.0),
        ),
        expected_cadence=INTEL_CADENCE,
        contradiction_scope=("temperature", "humidity", "light", "voltage"),
        arrival_attribute="timestamp",
    )


_MONEY = ("fare_amount", "extra", "mta_tax", "tip_amount", "tolls_amount", "improvement_surcharge", "congestion_surcharge", "airport_fee")


def _taxi_attributes() -> tuple[SchemaAttribute, ...]:
    def money(name: str, bound: float) -> SchemaAttribute:
        return SchemaAttribute(name, "float", interval=IntervalConstraint.continuous(-bound, bound))

    def ids(name: str, values) -> SchemaAttribute:
        return SchemaAttribute(name, "integer", interval=IntervalConstraint.discrete(values))

    return (
        SchemaAttribute("tpep_pickup_time", "instant"),
        SchemaAttribute("tpep_dropoff_time", "instant"),
        SchemaAttribute("passenger_count", "integer", interval=IntervalConstraint.continuous(0, 9)),
        SchemaAttribute("trip_distance", "float", interval=IntervalConstraint.continuous(0.0, 200.0)),
        ids("RatecodeID", (*RATECODES, 99)),
        ids("PULocationID", range(1, 266)),
        ids("DOLocationID", range(1, 266)),
        ids("payment_type", range(1, 7)),
        money("fare_amount", 500.0),
        money("extra", 10.0),
        money("mta_tax", 0.5),
        money("tip_amount", 200.0),
        money("tolls_amount", 100.0),
        money("improvement_surcharge", 0.3),
        money("total_amount", 1000.0),
        money("congestion_surcharge", 2.5),
        money("airport_fee", 1.25),
        SchemaAttribute("RideID", "integer", key_member=True),
        SchemaAttribute("timestamp", "instant"),
        SchemaAttribute("cancel_flag", "text", key_member=True, interval=IntervalConstraint.discrete((PLAIN_VALUE, CANCEL_VALUE))),
    )


def _neg(x: float) -> float:
    return -x if x else 0.0


def _mta(ratecode: int) -> float:
    return 0.5 if ratecode in (1, 2, 3, 4) else 0.0


def _airport(zone: int) -> float:
    return 1.25 if zone in AIRPORT_ZONES else 0.0


def _fare(ratecode: int, distance: float) -> float:
    if ratecode == 2:
        return 52.0
    base, per_mile = {1: (2.5, 2.5), 3: (20.0, 2.5), 4: (2.5, 5.0), 5: (10.0, 3.0), 6: (2.5, 2.0)}[ratecode]
    return round(base + per_mile * distance, 2)


def taxi_schema(stream: Sequence[DataVector] = ()) -> Schema:
    """Taxi schema; the fare and total rules are tabulated from *stream*."""
    attrs = _taxi_attributes()
    plain = Schema(attrs)
    flags = (PLAIN_VALUE, CANCEL_VALUE)
    rate_tax = {(r, f): (_mta(r) if f == PLAIN_VALUE else _neg(_mta(r))) for r in RATECODES for f in flags}
    airport = {(z, f): (_airport(z) if f == PLAIN_VALUE else _neg(_airport(z))) for z in range(1, 266) for f in flags}
    fare_det = ("RatecodeID", "trip_distance", "cancel_flag")
    total_det = _MONEY
    fare_map: dict[tuple, Any] = {}
    total_map: dict[tuple, Any] = {}
    for v in stream:
        fare_map.setdefault(tuple(v.get(plain, a) for a in fare_det), v.get(plain, "fare_amount"))
        total_map.setdefault(tuple(v.get(plain, a) for a in total_det), v.get(plain, "total_amount"))
    fds = (
        FunctionalDependency(("RatecodeID", "cancel_flag"), "mta_tax", rate_tax, "ignore", "rate_tax"),
        FunctionalDependency(("PULocationID", "cancel_flag"), "airport_fee", airport, "ignore", "airport_fee"),
        FunctionalDependency(fare_det, "fare_amount", fare_map, "ignore", "fare"),
        FunctionalDependency(total_det, "total_amount", total_map, "reject", "total"),
    )
    return Schema(
        attributes=attrs,
        functional_dependencies=fds,
        contradiction_scope=("trip_distance", "PULocationID", "DOLocationID", "fare_amount", "total_amount"),
        arrival_attribute="timestamp",
    )


# -- preparation ----------------------------------------------------------------------


def prep_intel(
    raw: Sequence[DataVector],
    schema: Schema,
    start: datetime | None = None,
    slots: int | None = None,
) -> tuple[list[DataVector], list[str]]:
    """Place a gappy fixed-cadence capture on its full slot grid.

    Present vectors are kept unchanged. Interior gaps are filled by linear
    interpolation between the neighbouring present slots; leading and trailing
    gaps take the nearest present value. Returns the stream and a prep log.
    """
    cadence = schema.expected_cadence
    if cadence is None:
        raise DatasetFault("intel preparation needs a schema with an expected cadence")
    if not raw:
        raise DatasetFault("intel preparation needs at least one present vector")
    start = to_instant(start) if start is not None else raw[0].arrival
    if slots is None:
        slots = round((raw[-1].arrival - start) / cadence) + 1
    log: list[str] = []
    grid: list[DataVector | None] = [None] * slots
    for v in raw:
        slot = round((v.arrival - start) / cadence)
        if not 0 <= slot < slots:
            log.append(f"vector {v.index} at {format_value(v.arrival)} lies outside the slot grid; dropped")
        elif grid[slot] is not None:
            log.append(f"vector {v.index} shares slot {slot} with an earlier vector; dropped")
        else:
            grid[slot] = v
    present = [i for i, v in enumerate(grid) if v is not None]
    if not present:
        raise DatasetFault("no present vector falls on the slot grid")
    arrival_pos = schema.position(schema.arrival_attribute) if schema.arrival_attribute else None

    out: list[DataVector] = []
    p = 0  # index into present of the first present slot >= current slot
    for slot in range(slots):
        while p < len(present) and present[p] < slot:
            p += 1
        v = grid[slot]
        time = start + cadence * slot
        if v is not None:
            out.append(DataVector(slot + 1, v.arrival, v.values, v.wrong_type))
            continue
        left = grid[present[p - 1]] if p > 0 else None
        right = grid[present[p]] if p < len(present) else None
        if left is None or right is None:
            near = right if left is None else left
            log.append(f"slot {slot} at {format_value(time)}: edge gap filled from nearest present vector")
            values = list(near.values)
        else:
            a, b = present[p - 1], present[p]
            w = (slot - a) / (b - a)
            values = []
            for attr, x, y in zip(schema.attributes, left.values, right.values):
                if attr.numeric and x is not None and y is not None:
                    z = x + (y - x) * w
                    values.append(round(z) if attr.declared_type == "integer" else z)
                else:
                    values.append(x)
        if arrival_pos is not None:
            values[arrival_pos] = time
        out.append(DataVector(slot + 1, time, tuple(values)))
    filled = slots - len(present)
    log.append(f"{len(present)} of {slots} slots present; {filled} filled")
    return out, log


def stream_time(dropoff: datetime, draw: timedelta, canceled: bool) -> datetime:
    """Synthetic stream time of a trip record; canceled records come 60 s later."""
    return dropoff + draw + (timedelta(seconds=60) if canceled else timedelta(0))


def prep_taxi(
    raw: Sequence[DataVector],
    schema: Schema,
    seed: int,
    dropoff: str = "tpep_dropoff_time",
    time: str = "timestamp",
    cancel: str = "cancel_flag",
) -> tuple[list[DataVector], list[str]]:
    """Assign stream timestamps to trip records and order them by that time.

    Each record gets dropoff + Uniform[5 s, 60 s] (ms resolution), plus 60 s
    for canceled records. Records without a dropoff are excluded.
    """
    rng = random.Random(seed)
    d_pos, t_pos, c_pos = schema.position(dropoff), schema.position(time), schema.position(cancel)
    log: list[str] = []
    timed: list[tuple[datetime, DataVector]] = []
    for v in raw:
        drop = v.values[d_pos]
        if not isinstance(drop, datetime):
            log.append(f"vector {v.index}: no dropoff time; excluded")
            continue
        draw = timedelta(milliseconds=rng.randint(5000, 60000))
        at = stream_time(drop, draw, v.values[c_pos] == CANCEL_VALUE)
        values = list(v.values)
        values[t_pos] = at
        timed.append((at, DataVector(v.index, at, tuple(values), v.wrong_type)))
    timed.sort(key=lambda pair: pair[0])
    out = [DataVector(i + 1, v.arrival, v.values, v.wrong_type) for i, (_, v) in enumerate(timed)]
    log.append(f"{len(out)} records timed, {len(raw) - len(out)} excluded")
    return out, log


# -- synthesis -----------------------------------------------------------------------------


def _synth_intel(size: int, rng: random.Random) -> list[DataVector]:
    day = 86400.0
    out = []
    temp_noise = hum_noise = 0.0
    for i in range(size):
        t = INTEL_START + INTEL_CADENCE * i
        phase = (i * INTEL_CADENCE.total_seconds() % day) / day
        cycle = math.sin(2 * math.pi * (phase - 0.3))
        temp_noise = 0.97 * temp_noise + rng.gauss(0.0, 0.08)
        hum_noise = 0.97 * hum_noise + rng.gauss(0.0, 0.25)
        temperature = 22.0 + 3.0 * cycle + temp_noise
        humidity = min(max(40.0 - 5.0 * cycle + hum_noise, 5.0), 95.0)
        if 0.25 <= phase <= 0.75:
            light = max(0.0, 600.0 * math.sin(math.pi * (phase - 0.25) / 0.5) + rng.gauss(0.0, 15.0))
        else:
            light = max(0.0, rng.gauss(0.0, 2.0))
        voltage = 2.7 - 0.2 * i / max(size - 1, 1) + rng.gauss(0.0, 0.004)
        values = (t, round(temperature, 4), round(humidity, 4), round(light, 2), round(voltage, 5))
        out.append(DataVector(i + 1, t, values))
    return out


def _trip(rng: random.Random, ride_id: int) -> dict[str, Any]:
    pickup = TAXI_DAY + timedelta(milliseconds=rng.randint(0, 86_399_000) // 1000 * 1000)
    ratecode = rng.choices(RATECODES, weights=(90, 4, 1, 1, 3, 1))[0]
    distance = round(min(max(rng.lognormvariate(0.7, 0.8), 0.1), 60.0), 2)
    minutes = max(2.0, distance * rng.uniform(2.0, 5.0))
    pu = rng.choice(AIRPORT_ZONES) if rng.random() < 0.08 else rng.randint(1, 265)
    payment = rng.choices((1, 2, 3, 4), weights=(70, 25, 3, 2))[0]
    fare = _fare(ratecode, distance)
    extra = rng.choice((0.0, 0.5, 1.0, 2.5))
    mta = _mta(ratecode)
    tip = round(fare * rng.uniform(0.1, 0.25), 2) if payment == 1 else 0.0
    tolls = 6.55 if rng.random() < 0.1 else 0.0
    surcharge = 0.3
    congestion = 2.5 if rng.random() < 0.8 else 0.0
    airport = _airport(pu)
    total = round(fare + extra + mta + tip + tolls + surcharge + congestion + airport, 2)
    return {
        "tpep_pickup_time": pickup,
        "tpep_dropoff_time": pickup + timedelta(seconds=round(minutes * 60)),
        "passenger_count": rng.choices((1, 2, 3, 4, 5, 6), weights=(70, 15, 5, 4, 4, 2))[0],
        "trip_distance": distance,
        "RatecodeID": ratecode,
        "PULocationID": pu,
        "DOLocationID": rng.randint(1, 265),
        "payment_type": payment,
        "fare_amount": fare,
        "extra": extra,
        "mta_tax": mta,
        "tip_amount": tip,
        "tolls_amount": tolls,
        "improvement_surcharge": surcharge,
        "total_amount": total,
        "congestion_surcharge": congestion,
        "airport_fee": airport,
        "RideID": ride_id,
        "timestamp": None,
        "cancel_flag": PLAIN_VALUE,
    }


def _synth_taxi(size: int, rng: random.Random) -> tuple[list[DataVector], Schema]:
    attrs = _taxi_attributes()
    names = [a.name for a in attrs]
    trips = round(size / 1.02)
    records = []
    for ride in range(1, trips + 1):
        records.append(_trip(rng, ride))
    for ride in sorted(rng.sample(range(1, trips + 1), size - trips)):
        canceled = dict(records[ride - 1])
        for name in (*_MONEY, "total_amount"):
            canceled[name] = _neg(canceled[name])
        canceled["cancel_flag"] = CANCEL_VALUE
        records.append(canceled)
    raw = [DataVector(i + 1, TAXI_DAY, tuple(r[n] for n in names)) for i, r in enumerate(records)]
    stream, _ = prep_taxi(raw, Schema(attrs), rng.randrange(2**32))
    return stream, taxi_schema(stream)


def synthesize_dataset(profile: str, size: int, seed: int) -> tuple[list[DataVector], Schema]:
    """Seeded ground-truth stream of exactly *size* vectors plus its schema."""
    if profile not in PROFILES:
        raise DatasetFault(f"unknown profile {profile!r}; expected one of {PROFILES}")
    if size < 100:
        raise DatasetFault("synthesized datasets need at least 100 vectors")
    rng = random.Random(seed)
    if profile == "intel_like":
        return _synth_intel(size, rng), intel_schema()
    return _synth_taxi(size, rng)


def drop_vectors(stream: Sequence[DataVector], count: int, seed: int) -> list[DataVector]:
    """Remove *count* interior vectors at random to mimic an incomplete capture."""
    if count > len(stream) - 2:
        raise DatasetFault(f"cannot drop {count} interior vectors from {len(stream)}")
    rng = random.Random(seed)
    gone = set(rng.sample(range(1, len(stream) - 1), count))
    kept = [v for i, v in enumerate(stream) if i not in gone]
    return [DataVector(i + 1, v.arrival, v.values, v.wrong_type) for i, v in enumerate(kept)]


def sample(stream: Sequence[DataVector], limit: int | None = None, start: int = 0) -> list[DataVector]:
    """Contiguous sub-stream, re-indexed from 1."""
    end = None if limit is None else start + limit
    return [DataVector(i + 1, v.arrival, v.values, v.wrong_type) for i, v in enumerate(stream[start:end])]


def fd_violations(stream: Sequence[DataVector], schema: Schema) -> list[tuple[int, str]]:
    """Exhaustive scan of explicit FD rules; used to certify synthesized data."""
    out = []
    for fd in schema.functional_dependencies:
        det = [schema.position(a) for a in fd.determinant]
        dep = schema.position(fd.dependent)
        for v in stream:
            key = tuple(v.values[p] for p in det)
            if key in fd.mapping:
                if fd.mapping[key] != v.values[dep]:
                    out.append((v.index, fd.label))
            elif fd.unknown_tuple == "reject":
                out.append((v.index, fd.label))
    return out

