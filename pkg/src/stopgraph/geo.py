"""Trajectory data model, great-circle math, and trajectory file ingestion.

Each trip is an ordered sequence of GPS samples carrying position, a
trip-relative timestamp, instantaneous speed, and an accumulated stay
time. Ingestion groups rows per trip, validates coordinates, and fills
in missing inter-point distances.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

EARTH_RADIUS_M = 6_371_000.0

# Speed at or below this many km/h counts as "stationary" when deriving
# the engine flag for files that do not carry one.
DEFAULT_STATIONARY_EPS_KMH = 0.5


class SchemaError(ValueError):
    """A required column is missing from the input file."""


class IngestError(ValueError):
    """A row could not be parsed and strict mode is enabled."""


@dataclass(frozen=True)
class GpsPoint:
    """One GPS sample.

    Attributes:
        lng, lat: position in decimal degrees.
        t: seconds since the first point of the trip.
        v: instantaneous speed in km/h.
        s: accumulated stay time in seconds (engine-off dwell).
        f: engine stationary flag (True = engine off), None when unknown.
        d_prev: meters from the previous point, None when not yet derived.
        d_start: meters from the trip start, None when not yet derived.
    """

    lng: float
    lat: float
    t: float
    v: float
    s: float = 0.0
    f: Optional[bool] = None
    d_prev: Optional[float] = None
    d_start: Optional[float] = None

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lng <= 180.0:
            raise ValueError(f"longitude {self.lng} outside [-180, 180]")
        if self.v < 0:
            raise ValueError(f"negative speed {self.v}")
        if self.s < 0:
            raise ValueError(f"negative stay time {self.s}")


@dataclass(frozen=True)
class Trip:
    """An ordered GPS sample sequence for one journey.

    ``max_interval`` records the nominal maximum sampling interval in
    seconds. Gaps larger than it are kept at ingest; the segmenter is
    responsible for breaking trips at oversized gaps.
    """

    id: str
    points: tuple[GpsPoint, ...]
    max_interval: float

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError(f"trip {self.id!r}: needs at least 2 points")
        for a, b in zip(self.points, self.points[1:]):
            if b.t <= a.t:
                raise ValueError(
                    f"trip {self.id!r}: timestamps not strictly increasing "
                    f"({a.t} -> {b.t})"
                )

    def __len__(self) -> int:
        return len(self.points)


def haversine_ll(lng1: float, lat1: float, lng2: float, lat2: float) -> float:
    """Great-circle distance in meters between two lng/lat coordinates.

    Haversine formula on a sphere of mean radius 6371 km. Symmetric and
    non-negative for any valid coordinates.
    """
    p1, l1, p2, l2 = map(math.radians, (lat1, lng1, lat2, lng2))
    dp = p2 - p1
    dl = l2 - l1
    h = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def haversine(a: GpsPoint, b: GpsPoint) -> float:
    """Great-circle distance in meters between two GPS points."""
    return haversine_ll(a.lng, a.lat, b.lng, b.lat)


@dataclass(frozen=True)
class ColumnMap:
    """Maps logical field names to column headers in a trajectory file.

    ``lng``, ``lat``, ``date``, ``t``, ``v`` and ``s`` are required;
    the distance columns and the engine flag are optional (missing
    distances are recomputed from coordinates).
    """

    lng: str = "lng"
    lat: str = "lat"
    date: str = "date"
    t: str = "t"
    v: str = "v"
    s: str = "s"
    d_prev: Optional[str] = "d_prev"
    d_start: Optional[str] = "d"
    f: Optional[str] = None

    def required(self) -> dict[str, str]:
        return {
            "lng": self.lng,
            "lat": self.lat,
            "date": self.date,
            "t": self.t,
            "v": self.v,
            "s": self.s,
        }


@dataclass
class IngestReport:
    """Summary of one ingestion run."""

    rows_read: int = 0
    rows_dropped: int = 0
    trips: int = 0
    reasons: list[str] = field(default_factory=list)

    def drop(self, reason: str) -> None:
        self.rows_dropped += 1
        self.reasons.append(reason)

    def to_dict(self) -> dict:
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "trips": self.trips,
            "reasons": list(self.reasons),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _opt_float(raw: Optional[str]) -> Optional[float]:
    if raw is None or raw == "":
        return None
    return float(raw)


def load_trips(
    path: str,
    schema: Optional[ColumnMap] = None,
    strict: bool = False,
    max_interval: Optional[float] = None,
    stationary_eps_kmh: float = DEFAULT_STATIONARY_EPS_KMH,
) -> tuple[list[Trip], IngestReport]:
    """Load trips from a delimited trajectory file.

    Rows are grouped per trip by the ``date`` column, sorted by time,
    deduplicated on timestamps (first kept), and normalized so ``t``
    counts seconds from the first point of each trip. Rows with
    out-of-bounds coordinates are dropped and counted in the report.
    Missing ``d_prev``/``d_start`` values are recomputed via haversine.

    Args:
        path: CSV file with a header row, one GPS sample per row.
        schema: column mapping; defaults to the standard attribute names.
        strict: abort on the first unparseable row instead of skipping it.
        max_interval: nominal maximum sampling interval in seconds; when
            None each trip records its own maximum observed gap.
        stationary_eps_kmh: speed floor used to derive the engine flag
            when the file has no engine column.

    Returns:
        (trips, report) where trips are sorted by trip id.
    """
    schema = schema or ColumnMap()
    report = IngestReport()
    groups: dict[str, list[dict]] = {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in schema.required().values() if col not in header]
        if missing:
            raise SchemaError(f"missing required column(s): {', '.join(missing)}")

        for line_no, row in enumerate(reader, start=2):
            report.rows_read += 1
            try:
                rec = {
                    "lng": float(row[schema.lng]),
                    "lat": float(row[schema.lat]),
                    "t": float(row[schema.t]),
                    "v": float(row[schema.v]),
                    "s": float(row[schema.s]),
                    "date": row[schema.date],
                }
                rec["d_prev"] = _opt_float(row.get(schema.d_prev)) if schema.d_prev else None
                rec["d_start"] = _opt_float(row.get(schema.d_start)) if schema.d_start else None
                rec["f"] = None
                if schema.f and row.get(schema.f) not in (None, ""):
                    rec["f"] = bool(int(float(row[schema.f])))
            except (ValueError, KeyError) as exc:
                if strict:
                    raise IngestError(f"line {line_no}: {exc}") from exc
                report.drop(f"line {line_no}: unparseable row ({exc})")
                continue

            if not -90.0 <= rec["lat"] <= 90.0 or not -180.0 <= rec["lng"] <= 180.0:
                report.drop(f"line {line_no}: coordinates out of bounds")
                continue
            if rec["v"] < 0 or rec["s"] < 0:
                report.drop(f"line {line_no}: negative speed or stay time")
                continue

            groups.setdefault(rec["date"], []).append(rec)

    trips: list[Trip] = []
    for trip_id in sorted(groups):
        recs = sorted(groups[trip_id], key=lambda r: r["t"])
        deduped: list[dict] = []
        for rec in recs:
            if deduped and rec["t"] == deduped[-1]["t"]:
                report.drop(f"trip {trip_id}: duplicate timestamp {rec['t']}")
                continue
            deduped.append(rec)
        if len(deduped) < 2:
            for _ in deduped:
                report.drop(f"trip {trip_id}: fewer than 2 usable points")
            continue

        t0 = deduped[0]["t"]
        points: list[GpsPoint] = []
        cumulative = 0.0
        for i, rec in enumerate(deduped):
            if i == 0:
                d_prev = rec["d_prev"] if rec["d_prev"] is not None else 0.0
            elif rec["d_prev"] is not None:
                d_prev = rec["d_prev"]
            else:
                d_prev = haversine_ll(
                    points[-1].lng, points[-1].lat, rec["lng"], rec["lat"]
                )
            cumulative += d_prev if i > 0 else 0.0
            d_start = rec["d_start"] if rec["d_start"] is not None else cumulative
            f = rec["f"]
            if f is None:
                f = rec["v"] <= stationary_eps_kmh and rec["s"] > 0
            points.append(
                GpsPoint(
                    lng=rec["lng"],
                    lat=rec["lat"],
                    t=rec["t"] - t0,
                    v=rec["v"],
                    s=rec["s"],
                    f=f,
                    d_prev=d_prev,
                    d_start=d_start,
                )
            )

        if max_interval is not None:
            nominal = max_interval
        else:
            nominal = max(b.t - a.t for a, b in zip(points, points[1:]))
        trips.append(Trip(id=trip_id, points=tuple(points), max_interval=nominal))

    report.trips = len(trips)
    return trips, report
