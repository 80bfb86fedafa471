"""Parsing and assembly of the hourly market table.

The system price of one hour is the locational price with congestion
and loss components removed (lmp - mcc - mlc). Sub-hourly generation
readings are integrated to hourly energy per source, and both sides are
inner-joined on the hour. Every dropped or rescaled record is counted
per cause in a machine-readable ingest report.

Timestamps are market-local civil time without zone information. The
daylight-saving fall-back hour appears twice in raw exports; parsers
keep the first occurrence and count the duplicate, while the missing
spring-forward hour is simply absent. Sources other than hydro, solar,
and wind are folded into "other" so that total generation is the true
system total.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from .exceptions import (
    DataError,
    DataIntegrityError,
    MalformedRecordError,
)

CANONICAL_SOURCES = ("hydro", "solar", "wind", "other")
VALID_INTERVALS = (5, 10, 15, 60)

PRICE_CSV_HEADER = ("timestamp", "lmp", "mcc", "mlc")
GENERATION_CSV_HEADER = ("timestamp", "source", "power_mw", "interval_min")


@dataclass(frozen=True)
class PriceRow:
    """One hub price hour: locational price and its components, $/MWh."""

    timestamp: datetime
    lmp: float
    mcc: float
    mlc: float


@dataclass(frozen=True)
class GenerationReading:
    """One sub-hourly generation observation for a single source."""

    timestamp: datetime
    source: str
    power_mw: float
    interval_min: int


@dataclass(frozen=True)
class HourlyRecord:
    """One retained market hour: system price plus per-source energy."""

    timestamp: datetime
    mec: float
    gen_by_source: dict[str, float]
    total_gen: float


def compute_mec(lmp: float, mcc: float, mlc: float, row: int | None = None) -> float:
    """System price (marginal energy cost): lmp - mcc - mlc."""
    for name, value in (("lmp", lmp), ("mcc", mcc), ("mlc", mlc)):
        if not math.isfinite(value):
            raise MalformedRecordError(f"non-finite {name}: {value}", row=row)
    return lmp - mcc - mlc


def floor_hour(ts: datetime) -> datetime:
    return ts.replace(minute=0, second=0, microsecond=0)


# ---------------------------------------------------------------------------
# readers
# ---------------------------------------------------------------------------


@dataclass
class ReaderStats:
    rows_read: int = 0
    duplicates_dropped: int = 0
    sources_remapped: int = 0


def _parse_timestamp(text: str, row: int) -> datetime:
    try:
        return datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise MalformedRecordError(f"bad timestamp {text!r}: {exc}", row=row) from exc


def _parse_float(text: str, name: str, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError) as exc:
        raise MalformedRecordError(f"bad {name} value {text!r}", row=row) from exc
    if not math.isfinite(value):
        raise MalformedRecordError(f"non-finite {name}: {value}", row=row)
    return value


def _open_rows(path: str, kind: str):
    """Yield (line_number, field dict) from a CSV or JSON-lines file."""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    header = PRICE_CSV_HEADER if kind == "prices" else GENERATION_CSV_HEADER
    if path.endswith((".jsonl", ".ndjson")):
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedRecordError(f"bad json: {exc}", row=lineno) from exc
                yield lineno, data
    else:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(header) - set(reader.fieldnames or ())
            if missing:
                raise MalformedRecordError(
                    f"{kind} file {path} is missing columns {sorted(missing)}", row=1
                )
            for lineno, rowdict in enumerate(reader, start=2):
                yield lineno, rowdict


def read_prices(path: str) -> tuple[list[PriceRow], ReaderStats]:
    """Parse a price file; duplicate hours keep their first occurrence."""
    stats = ReaderStats()
    rows: list[PriceRow] = []
    seen: set[datetime] = set()
    for lineno, data in _open_rows(path, "prices"):
        stats.rows_read += 1
        ts = _parse_timestamp(str(data["timestamp"]), lineno)
        if ts.minute or ts.second or ts.microsecond:
            raise MalformedRecordError(
                f"price timestamp {ts.isoformat()} is not top-of-hour", row=lineno
            )
        if ts in seen:
            stats.duplicates_dropped += 1
            continue
        seen.add(ts)
        rows.append(
            PriceRow(
                timestamp=ts,
                lmp=_parse_float(data["lmp"], "lmp", lineno),
                mcc=_parse_float(data["mcc"], "mcc", lineno),
                mlc=_parse_float(data["mlc"], "mlc", lineno),
            )
        )
    rows.sort(key=lambda r: r.timestamp)
    return rows, stats


def read_generation(path: str) -> tuple[list[GenerationReading], ReaderStats]:
    """Parse a generation file, folding unknown sources into "other"."""
    stats = ReaderStats()
    rows: list[GenerationReading] = []
    seen: set[tuple[datetime, str]] = set()
    for lineno, data in _open_rows(path, "generation"):
        stats.rows_read += 1
        ts = _parse_timestamp(str(data["timestamp"]), lineno)
        source = str(data["source"]).strip().lower()
        if source not in CANONICAL_SOURCES:
            source = "other"
            stats.sources_remapped += 1
        power = _parse_float(data["power_mw"], "power_mw", lineno)
        if power < 0:
            raise MalformedRecordError(f"negative power {power}", row=lineno)
        try:
            interval = int(data["interval_min"])
        except (TypeError, ValueError) as exc:
            raise MalformedRecordError(
                f"bad interval_min {data['interval_min']!r}", row=lineno
            ) from exc
        if interval not in VALID_INTERVALS:
            raise MalformedRecordError(
                f"interval_min must be one of {VALID_INTERVALS}, got {interval}",
                row=lineno,
            )
        if ts.second or ts.microsecond or ts.minute + interval > 60:
            raise MalformedRecordError(
                f"reading at {ts.isoformat()} ({interval} min) crosses the hour boundary",
                row=lineno,
            )
        key = (ts, source)
        if key in seen:
            stats.duplicates_dropped += 1
            continue
        seen.add(key)
        rows.append(GenerationReading(ts, source, power, interval))
    rows.sort(key=lambda r: (r.source, r.timestamp))
    return rows, stats


# ---------------------------------------------------------------------------
# aggregation and join
# ---------------------------------------------------------------------------


def aggregate_generation(
    readings,
) -> tuple[list[tuple[datetime, str, float]], list[tuple[datetime, str]]]:
    """Integrate readings to hourly MWh per source.

    Energy in an hour is sum(power * interval / 60). Hours covered for
    fewer than 60 minutes are rescaled by 60 / covered-minutes and
    flagged. Overlapping intervals within one source-hour raise
    :class:`DataIntegrityError`.

    Returns (sorted (hour, source, mwh) rows, partial-coverage flags).
    """
    buckets: dict[tuple[datetime, str], list[GenerationReading]] = {}
    for reading in readings:
        buckets.setdefault((floor_hour(reading.timestamp), reading.source), []).append(
            reading
        )
    rows: list[tuple[datetime, str, float]] = []
    partial: list[tuple[datetime, str]] = []
    for (hour, source), group in buckets.items():
        group = sorted(group, key=lambda r: r.timestamp)
        covered = 0
        energy = 0.0
        prev_end: datetime | None = None
        for reading in group:
            if prev_end is not None and reading.timestamp < prev_end:
                raise DataIntegrityError(
                    f"overlapping {source} readings in hour {hour.isoformat()} "
                    f"at {reading.timestamp.isoformat()}"
                )
            prev_end = reading.timestamp + timedelta(minutes=reading.interval_min)
            covered += reading.interval_min
            energy += reading.power_mw * (reading.interval_min / 60.0)
        if covered > 60:
            raise DataIntegrityError(
                f"{source} readings in hour {hour.isoformat()} cover {covered} minutes"
            )
        if covered < 60:
            energy *= 60.0 / covered
            partial.append((hour, source))
        rows.append((hour, source, energy))
    rows.sort(key=lambda r: (r[0], r[1]))
    partial.sort()
    return rows, partial


@dataclass
class JoinCounts:
    hours_joined: int = 0
    price_hours_unmatched: int = 0
    generation_hours_unmatched: int = 0
    zero_generation_dropped: int = 0


def join_hourly(
    prices: list[PriceRow],
    gen_rows: list[tuple[datetime, str, float]],
) -> tuple[list[HourlyRecord], JoinCounts]:
    """Inner join of price hours and aggregated generation hours.

    Hours present on only one side are dropped and counted; hours whose
    total generation is zero are dropped and counted. Duplicate hours on
    either side raise :class:`DataIntegrityError`.
    """
    counts = JoinCounts()
    price_by_hour: dict[datetime, PriceRow] = {}
    for row in prices:
        if row.timestamp in price_by_hour:
            raise DataIntegrityError(
                f"duplicate price hour {row.timestamp.isoformat()}"
            )
        price_by_hour[row.timestamp] = row
    gen_by_hour: dict[datetime, dict[str, float]] = {}
    for hour, source, mwh in gen_rows:
        per_source = gen_by_hour.setdefault(hour, {})
        if source in per_source:
            raise DataIntegrityError(
                f"duplicate generation entry for {source} in hour {hour.isoformat()}"
            )
        per_source[source] = mwh

    records: list[HourlyRecord] = []
    for hour in sorted(price_by_hour):
        if hour not in gen_by_hour:
            counts.price_hours_unmatched += 1
            continue
        gen = {s: gen_by_hour[hour].get(s, 0.0) for s in CANONICAL_SOURCES}
        total = sum(gen.values())
        if total <= 0.0:
            counts.zero_generation_dropped += 1
            continue
        price = price_by_hour[hour]
        records.append(
            HourlyRecord(
                timestamp=hour,
                mec=compute_mec(price.lmp, price.mcc, price.mlc),
                gen_by_source=gen,
                total_gen=total,
            )
        )
    counts.generation_hours_unmatched = sum(
        1 for hour in gen_by_hour if hour not in price_by_hour
    )
    counts.hours_joined = len(records)
    return records, counts


@dataclass
class IngestReport:
    """Counts per drop/flag cause, written alongside every ingest."""

    prices: dict = field(default_factory=dict)
    generation: dict = field(default_factory=dict)
    join: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"prices": self.prices, "generation": self.generation, "join": self.join}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


HOURLY_CSV_HEADER = (
    "timestamp,mec,hydro_mwh,solar_mwh,wind_mwh,other_mwh,total_mwh"
)


def write_hourly_csv(records: list[HourlyRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(HOURLY_CSV_HEADER + "\n")
        for r in records:
            gen = ",".join(repr(float(r.gen_by_source[s])) for s in CANONICAL_SOURCES)
            fh.write(
                f"{r.timestamp.isoformat()},{repr(float(r.mec))},{gen},"
                f"{repr(float(r.total_gen))}\n"
            )


def read_hourly_csv(path: str) -> list[HourlyRecord]:
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    records: list[HourlyRecord] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(HOURLY_CSV_HEADER.split(",")) - set(reader.fieldnames or ())
        if missing:
            raise MalformedRecordError(
                f"hourly file {path} is missing columns {sorted(missing)}", row=1
            )
        for lineno, row in enumerate(reader, start=2):
            gen = {
                s: _parse_float(row[f"{s}_mwh"], f"{s}_mwh", lineno)
                for s in CANONICAL_SOURCES
            }
            records.append(
                HourlyRecord(
                    timestamp=_parse_timestamp(row["timestamp"], lineno),
                    mec=_parse_float(row["mec"], "mec", lineno),
                    gen_by_source=gen,
                    total_gen=_parse_float(row["total_mwh"], "total_mwh", lineno),
                )
            )
    return records


def ingest(prices_path: str, generation_path: str) -> tuple[list[HourlyRecord], IngestReport]:
    """Full ingest: parse, aggregate, join; returns records and the report."""
    prices, price_stats = read_prices(prices_path)
    readings, gen_stats = read_generation(generation_path)
    gen_rows, partial = aggregate_generation(readings)
    records, join_counts = join_hourly(prices, gen_rows)
    report = IngestReport(
        prices={
            "rows_read": price_stats.rows_read,
            "duplicate_hours_dropped": price_stats.duplicates_dropped,
        },
        generation={
            "readings_read": gen_stats.rows_read,
            "duplicate_readings_dropped": gen_stats.duplicates_dropped,
            "sources_remapped_to_other": gen_stats.sources_remapped,
            "partial_coverage_hours": len(partial),
        },
        join={
            "hours_joined": join_counts.hours_joined,
            "price_hours_unmatched": join_counts.price_hours_unmatched,
            "generation_hours_unmatched": join_counts.generation_hours_unmatched,
            "zero_generation_dropped": join_counts.zero_generation_dropped,
        },
    )
    return records, report
