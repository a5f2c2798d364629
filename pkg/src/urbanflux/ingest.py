"""Parsers for POI and trip-order files, and the 16-category function table.

Input files are plain UTF-8 CSV. Categories arrive pre-mapped to the integer
indices 0..15; mapping raw provider typecodes onto these classes is the data
producer's job.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import OrderTimeError, ParseError, RangeError
from .geo_grid import GeoPoint

log = logging.getLogger(__name__)

N_CATEGORIES = 16
MAX_TRIP_HOURS = 24.0
SECONDS_PER_HOUR = 3600

CATEGORY_NAMES = (
    "automobile and motorcycle related",
    "food and beverages related",
    "shopping related place",
    "daily life service place",
    "sports and recreation place",
    "medical and health care service place",
    "accommodation service related",
    "tourist attraction related",
    "residential area",
    "enterprise",
    "governmental and social groups related",
    "science and education cultural place",
    "traffic hinge",
    "transit network",
    "finance and insurance service institution",
    "public facility",
)

POI_HEADER = ["lon", "lat", "category"]
ORDERS_HEADER = ["pickup_lon", "pickup_lat", "pickup_ts", "dropoff_ts"]


def category_name(index: int) -> str:
    """Display name of a function category index."""
    if not (0 <= index < N_CATEGORIES):
        raise RangeError(f"category index {index} outside 0..{N_CATEGORIES - 1}")
    return CATEGORY_NAMES[index]


@dataclass(frozen=True, slots=True)
class PoiRecord:
    location: GeoPoint
    category: int


@dataclass(frozen=True, slots=True)
class TripOrder:
    pickup: GeoPoint
    pickup_ts: int
    dropoff_ts: int

    @property
    def duration_hours(self) -> float:
        return (self.dropoff_ts - self.pickup_ts) / SECONDS_PER_HOUR

    @property
    def hour(self) -> int:
        """Hour-of-day bucket of the pickup timestamp (local-time epoch)."""
        return (self.pickup_ts // SECONDS_PER_HOUR) % 24


@dataclass(frozen=True)
class OrderArrays:
    """Column layout of an order table, for bulk feature building."""

    lons: np.ndarray
    lats: np.ndarray
    hours: np.ndarray
    durations: np.ndarray  # hours

    def __len__(self) -> int:
        return self.lons.size


def _check_header(row: list[str], expected: list[str], path: Path) -> None:
    if [c.strip() for c in row] != expected:
        raise ParseError(f"{path}: expected header {','.join(expected)}, got {','.join(row)}", 1)


def _geo(lon_s: str, lat_s: str, line_no: int) -> GeoPoint:
    try:
        lon, lat = float(lon_s), float(lat_s)
    except ValueError as e:
        raise ParseError(f"bad coordinate: {e}", line_no) from None
    try:
        return GeoPoint(lon, lat)
    except ValueError as e:
        raise RangeError(f"line {line_no}: {e}") from None


def parse_poi_csv(path: str | Path) -> list[PoiRecord]:
    """Parse a `lon,lat,category` file, preserving row order.

    Raises ParseError with the offending line number for malformed rows and
    RangeError for out-of-domain categories or coordinates.
    """
    path = Path(path)
    records: list[PoiRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected header", 1)
        _check_header(header, POI_HEADER, path)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line_no)
            loc = _geo(row[0], row[1], line_no)
            try:
                category = int(row[2])
            except ValueError:
                raise ParseError(f"bad category {row[2]!r}", line_no) from None
            if not (0 <= category < N_CATEGORIES):
                raise RangeError(f"line {line_no}: category {category} outside 0..15")
            records.append(PoiRecord(loc, category))
    return records


def _validate_order(pickup_ts: int, dropoff_ts: int, line_no: int) -> None:
    if dropoff_ts <= pickup_ts:
        raise OrderTimeError(f"line {line_no}: non-positive duration")
    if dropoff_ts - pickup_ts > MAX_TRIP_HOURS * SECONDS_PER_HOUR:
        raise OrderTimeError(f"line {line_no}: duration exceeds {MAX_TRIP_HOURS:.0f} h sanity cap")


def parse_orders_csv(path: str | Path, drop_invalid: bool = False) -> list[TripOrder]:
    """Parse a `pickup_lon,pickup_lat,pickup_ts,dropoff_ts` file.

    By default the first invalid row aborts the parse. With ``drop_invalid``,
    rows failing the time-validity predicates are skipped and counted (the
    count is logged); malformed rows still raise.
    """
    path = Path(path)
    orders: list[TripOrder] = []
    dropped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected header", 1)
        _check_header(header, ORDERS_HEADER, path)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line_no)
            loc = _geo(row[0], row[1], line_no)
            try:
                pickup_ts, dropoff_ts = int(row[2]), int(row[3])
            except ValueError:
                raise ParseError(f"bad timestamp in {row[2]!r},{row[3]!r}", line_no) from None
            try:
                _validate_order(pickup_ts, dropoff_ts, line_no)
            except OrderTimeError:
                if drop_invalid:
                    dropped += 1
                    continue
                raise
            orders.append(TripOrder(loc, pickup_ts, dropoff_ts))
    if dropped:
        log.info("parse_orders_csv(%s): dropped %d rows with invalid duration", path, dropped)
    return orders


def load_orders_arrays(path: str | Path, drop_invalid: bool = False) -> OrderArrays:
    """Bulk column load of an orders file; same validity rules as the record parser.

    Intended for million-row files where per-record objects are wasteful.
    """
    path = Path(path)
    df = pd.read_csv(path)
    if list(df.columns) != ORDERS_HEADER:
        raise ParseError(
            f"{path}: expected header {','.join(ORDERS_HEADER)}, got {','.join(df.columns)}", 1
        )
    lons = df["pickup_lon"].to_numpy(dtype=float)
    lats = df["pickup_lat"].to_numpy(dtype=float)
    pickup = df["pickup_ts"].to_numpy(dtype=np.int64)
    dropoff = df["dropoff_ts"].to_numpy(dtype=np.int64)
    bad_coord = (np.abs(lons) > 180.0) | (np.abs(lats) > 90.0)
    if bad_coord.any():
        raise RangeError(f"line {int(np.flatnonzero(bad_coord)[0]) + 2}: coordinate out of range")
    dur_s = dropoff - pickup
    invalid = (dur_s <= 0) | (dur_s > MAX_TRIP_HOURS * SECONDS_PER_HOUR)
    if invalid.any():
        if not drop_invalid:
            raise OrderTimeError(
                f"line {int(np.flatnonzero(invalid)[0]) + 2}: invalid trip duration"
            )
        keep = ~invalid
        log.info("load_orders_arrays(%s): dropped %d rows with invalid duration",
                 path, int(invalid.sum()))
        lons, lats, pickup, dur_s = lons[keep], lats[keep], pickup[keep], dur_s[keep]
    hours = ((pickup // SECONDS_PER_HOUR) % 24).astype(np.int64)
    return OrderArrays(lons, lats, hours, dur_s / SECONDS_PER_HOUR)


def orders_to_arrays(orders: list[TripOrder]) -> OrderArrays:
    n = len(orders)
    return OrderArrays(
        lons=np.fromiter((o.pickup.lon for o in orders), dtype=float, count=n),
        lats=np.fromiter((o.pickup.lat for o in orders), dtype=float, count=n),
        hours=np.fromiter((o.hour for o in orders), dtype=np.int64, count=n),
        durations=np.fromiter((o.duration_hours for o in orders), dtype=float, count=n),
    )


def write_poi_csv(path: str | Path, records: list[PoiRecord]) -> None:
    """Canonical writer; parse(write(records)) == records."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(POI_HEADER)
        for r in records:
            w.writerow([repr(r.location.lon), repr(r.location.lat), r.category])


def write_orders_csv(path: str | Path, orders: list[TripOrder]) -> None:
    """Canonical writer; parse(write(orders)) == orders."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ORDERS_HEADER)
        for o in orders:
            w.writerow([repr(o.pickup.lon), repr(o.pickup.lat), o.pickup_ts, o.dropoff_ts])
