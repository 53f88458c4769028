"""Review corpus ingestion, canonical serialization and dataset characterization."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone

DEFAULT_FIELDS = {
    "id": "id",
    "text": "text",
    "entity_id": "entity_id",
    "timestamp": "timestamp",
    "rating": "rating",
}

VOLUME_CLASSES = ("High", "Low")
PRESENCE_BUCKETS = ("100", "51-99", "0-50")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class DataPoint:
    id: str
    text: str
    entity_id: str
    timestamp: date
    rating: int | None = None


@dataclass
class IngestReport:
    total: int = 0
    kept: int = 0
    dropped: int = 0
    duplicate_errors: int = 0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "dropped": self.dropped,
            "duplicate_errors": self.duplicate_errors,
        }


@dataclass(frozen=True)
class Corpus:
    points: tuple[DataPoint, ...]

    def __post_init__(self) -> None:
        ids = [p.id for p in self.points]
        if any(a >= b for a, b in zip(ids, ids[1:])):
            raise CorpusError("corpus points must be strictly ascending by id")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def date_range(self) -> tuple[date, date] | None:
        if not self.points:
            return None
        stamps = [p.timestamp for p in self.points]
        return min(stamps), max(stamps)

    @property
    def quarter_count(self) -> int:
        rng = self.date_range
        if rng is None:
            return 0
        return quarter_index(rng[1]) - quarter_index(rng[0]) + 1

    def by_id(self) -> dict[str, DataPoint]:
        return {p.id: p for p in self.points}


def quarter_index(d: date) -> int:
    """Calendar quarter as a running integer (Jan-Mar = 0 of that year)."""
    return d.year * 4 + (d.month - 1) // 3


def parse_timestamp(value) -> date:
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        seconds = float(value)
        # Values beyond year ~5000 in seconds are taken as milliseconds.
        if abs(seconds) > 1e11:
            seconds /= 1000.0
        return datetime.fromtimestamp(seconds, tz=timezone.utc).date()
    if isinstance(value, str):
        s = value.strip()
        if s.lstrip("-").isdigit():
            return parse_timestamp(int(s))
        try:
            return date.fromisoformat(s)
        except ValueError:
            return datetime.fromisoformat(s.replace("Z", "+00:00")).date()
    raise ValueError(f"not a timestamp: {value!r}")


def _parse_rating(value) -> int | None:
    if value is None or value == "":
        return None
    rating = int(float(value))
    if not 1 <= rating <= 5:
        raise ValueError(f"rating out of range: {value!r}")
    return rating


def _records(source: bytes, fmt: str):
    try:
        text = source.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"source is not valid UTF-8: {exc}") from exc
    if fmt == "jsonl":
        # records are newline-delimited; str.splitlines would also break on U+2028 etc. inside strings
        for lineno, line in enumerate(text.split("\n"), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"line {lineno}: record is not an object")
            yield lineno, obj
    elif fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        for row in reader:
            yield reader.line_num, row
    else:
        raise CorpusError(f"unsupported format: {fmt!r}")


def ingest(
    source: bytes,
    fmt: str = "jsonl",
    fields: dict[str, str] | None = None,
    strict: bool = True,
) -> tuple[Corpus, IngestReport]:
    """Parse a JSONL or CSV byte stream into a corpus sorted by id.

    Empty-text records are dropped and counted. Duplicate ids raise unless
    ``strict`` is False, in which case later duplicates are dropped and
    counted as ``duplicate_errors``.
    """
    mapping = {**DEFAULT_FIELDS, **(fields or {})}
    report = IngestReport()
    seen: dict[str, DataPoint] = {}
    for lineno, rec in _records(source, fmt):
        report.total += 1
        try:
            raw_id = rec[mapping["id"]]
            raw_text = rec[mapping["text"]]
            raw_entity = rec[mapping["entity_id"]]
            raw_ts = rec[mapping["timestamp"]]
        except KeyError as exc:
            raise CorpusError(f"line {lineno}: missing field {exc.args[0]!r}") from None
        if raw_id is None or raw_entity is None:
            raise CorpusError(f"line {lineno}: null id or entity_id")
        text = "" if raw_text is None else str(raw_text)
        if not text.strip():
            report.dropped += 1
            continue
        try:
            ts = parse_timestamp(raw_ts)
            rating = _parse_rating(rec.get(mapping["rating"]))
        except (ValueError, OverflowError, OSError) as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
        point = DataPoint(str(raw_id), text, str(raw_entity), ts, rating)
        if point.id in seen:
            if strict:
                raise CorpusError(f"duplicate id {point.id!r} (line {lineno})")
            report.duplicate_errors += 1
            continue
        seen[point.id] = point
    if not seen:
        raise CorpusError("empty corpus")
    report.kept = len(seen)
    points = tuple(sorted(seen.values(), key=lambda p: p.id))
    return Corpus(points), report


def point_to_dict(p: DataPoint) -> dict:
    return {
        "id": p.id,
        "text": p.text,
        "entity_id": p.entity_id,
        "timestamp": p.timestamp.isoformat(),
        "rating": p.rating,
    }


def dumps_corpus(corpus: Corpus) -> bytes:
    """Canonical form: UTF-8 JSONL sorted by id with LF endings."""
    lines = [json.dumps(point_to_dict(p), ensure_ascii=False) for p in corpus]
    return ("\n".join(lines) + "\n").encode("utf-8")


def loads_corpus(data: bytes) -> Corpus:
    corpus, _ = ingest(data, "jsonl")
    return corpus


@dataclass
class ProfileCell:
    entity_count: int = 0
    entity_pct: float = 0.0
    datapoint_count: int = 0
    datapoint_pct: float = 0.0


@dataclass
class DatasetProfile:
    cells: dict[tuple[str, str], ProfileCell] = field(default_factory=dict)
    total_entities: int = 0
    total_datapoints: int = 0
    quarter_count: int = 0
    mean_volume: float = 0.0
    entity_classes: dict[str, tuple[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_entities": self.total_entities,
            "total_datapoints": self.total_datapoints,
            "quarter_count": self.quarter_count,
            "mean_volume": self.mean_volume,
            "cells": [
                {"volume": v, "presence": b, **vars(self.cells[(v, b)])}
                for v in VOLUME_CLASSES
                for b in PRESENCE_BUCKETS
            ],
        }


def presence_bucket(quarters_present: int, quarter_count: int) -> str:
    if quarters_present >= quarter_count:
        return "100"
    if 2 * quarters_present > quarter_count:
        return "51-99"
    return "0-50"


def characterize(corpus: Corpus) -> DatasetProfile:
    """Split entities by review volume (vs. the mean) and quarterly presence."""
    if len(corpus) == 0:
        raise CorpusError("empty corpus")
    quarters = corpus.quarter_count
    if quarters <= 0:
        raise CorpusError("corpus spans zero quarters")

    volume: dict[str, int] = defaultdict(int)
    present: dict[str, set[int]] = defaultdict(set)
    for p in corpus:
        volume[p.entity_id] += 1
        present[p.entity_id].add(quarter_index(p.timestamp))

    n_entities = len(volume)
    n_points = len(corpus)
    mean = n_points / n_entities
    profile = DatasetProfile(
        cells={(v, b): ProfileCell() for v in VOLUME_CLASSES for b in PRESENCE_BUCKETS},
        total_entities=n_entities,
        total_datapoints=n_points,
        quarter_count=quarters,
        mean_volume=mean,
    )
    for entity in sorted(volume):
        vclass = "High" if volume[entity] > mean else "Low"
        bucket = presence_bucket(len(present[entity]), quarters)
        cell = profile.cells[(vclass, bucket)]
        cell.entity_count += 1
        cell.datapoint_count += volume[entity]
        profile.entity_classes[entity] = (vclass, bucket)
    for cell in profile.cells.values():
        cell.entity_pct = 100.0 * cell.entity_count / n_entities
        cell.datapoint_pct = 100.0 * cell.datapoint_count / n_points
    return profile

