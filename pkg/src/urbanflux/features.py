"""Per-buffer feature construction, cleaning, and normalization.

Each sample unit is the disk of ``buffer_radius_m`` around one grid center.
Its environment vector is 17 values: normalized function density followed by
16 category proportions. Its demand vector is 25 values: normalized daily
total VHT followed by the 24 hourly VHT proportions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, ShapeError
from .geo_grid import BufferIndex, GeoPoint, GridSpec
from .ingest import N_CATEGORIES, OrderArrays, PoiRecord, orders_to_arrays

N_HOURS = 24
ENV_WIDTH = 1 + N_CATEGORIES  # density + 16 proportions
DEMAND_WIDTH = 1 + N_HOURS  # total + 24 hourly proportions

_REL_TOL = 1e-9


@dataclass(frozen=True)
class RawSample:
    """Unnormalized per-buffer tallies.

    order_count is the raw number of orders over the whole data span; it backs
    the cleaning threshold and is None for samples reloaded from a dataset CSV
    (which does not store it).
    """

    center: GeoPoint
    poi_counts: np.ndarray  # 16 non-negative ints
    vht_by_hour: np.ndarray  # 24 daily-average hours
    order_count: int | None = None

    def __post_init__(self):
        counts = np.asarray(self.poi_counts, dtype=np.int64)
        vht = np.asarray(self.vht_by_hour, dtype=float)
        if counts.shape != (N_CATEGORIES,):
            raise ShapeError(f"poi_counts must have shape (16,), got {counts.shape}")
        if vht.shape != (N_HOURS,):
            raise ShapeError(f"vht_by_hour must have shape (24,), got {vht.shape}")
        if (counts < 0).any() or (vht < 0).any():
            raise ValueError("counts and VHT must be non-negative")
        object.__setattr__(self, "poi_counts", counts)
        object.__setattr__(self, "vht_by_hour", vht)

    @property
    def density_proxy(self) -> int:
        return int(self.poi_counts.sum())

    @property
    def vht_total(self) -> float:
        return float(self.vht_by_hour.sum())


@dataclass(frozen=True)
class EnvFeatures:
    """Normalized density plus the 16 category proportions."""

    density_norm: float
    proportions: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.density_norm], self.proportions))


@dataclass(frozen=True)
class DemandFeatures:
    """Normalized daily total VHT plus the 24 hourly proportions."""

    total_norm: float
    hourly: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.total_norm], self.hourly))


@dataclass(frozen=True)
class NormalizationInfo:
    """Dataset-level scale constants, frozen with the model that trained on them."""

    density_max: float  # max density proxy over retained samples
    vht_max: float  # max daily total VHT over retained samples
    days: int

    def __post_init__(self):
        if self.density_max < 1:
            raise ValueError("density_max must be >= 1")
        if self.vht_max <= 0:
            raise ValueError("vht_max must be positive")
        if self.days < 1:
            raise ValueError("days must be >= 1")

    def to_dict(self) -> dict:
        return {"density_max": self.density_max, "vht_max": self.vht_max, "days": self.days}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationInfo":
        return cls(float(d["density_max"]), float(d["vht_max"]), int(d["days"]))


@dataclass(frozen=True)
class DatasetRow:
    sample_id: str
    center: GeoPoint
    env: EnvFeatures
    demand: DemandFeatures
    raw: RawSample
    zero_vht: bool


@dataclass
class Dataset:
    rows: list[DatasetRow]
    norm_info: NormalizationInfo

    def __len__(self) -> int:
        return len(self.rows)

    def env_matrix(self) -> np.ndarray:
        return np.stack([r.env.as_vector() for r in self.rows])

    def total_targets(self) -> np.ndarray:
        return np.array([r.demand.total_norm for r in self.rows])

    def hourly_targets(self) -> np.ndarray:
        return np.stack([r.demand.hourly for r in self.rows])

    def bbox(self) -> tuple[GeoPoint, GeoPoint]:
        lons = [r.center.lon for r in self.rows]
        lats = [r.center.lat for r in self.rows]
        return GeoPoint(min(lons), min(lats)), GeoPoint(max(lons), max(lats))


@dataclass(frozen=True)
class CleanPolicy:
    """Retention thresholds: at least one POI and a minimum average order rate."""

    min_orders_per_hour: float = 1.0


@dataclass(frozen=True)
class CleanReport:
    kept: int
    removed_no_poi: int
    removed_low_activity: int


def build_raw_samples(
    centers: list[GeoPoint],
    pois: list[PoiRecord],
    orders: list | OrderArrays,
    spec: GridSpec,
    days: int,
) -> list[RawSample]:
    """Tally POIs and daily-average hourly VHT per buffer.

    Orders are attributed to the buffer containing their pickup point and to
    the hour-of-day bucket of their pickup timestamp; the attached weight is
    the full trip duration in hours. Result is independent of input ordering.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    poi_lons = np.fromiter((p.location.lon for p in pois), dtype=float, count=len(pois))
    poi_lats = np.fromiter((p.location.lat for p in pois), dtype=float, count=len(pois))
    poi_cats = np.fromiter((p.category for p in pois), dtype=np.int64, count=len(pois))
    oa = orders if isinstance(orders, OrderArrays) else orders_to_arrays(orders)

    poi_index = BufferIndex(poi_lons, poi_lats)
    order_index = BufferIndex(oa.lons, oa.lats)
    r = spec.buffer_radius_m

    samples = []
    for center in centers:
        pidx = poi_index.query(center, r)
        counts = np.bincount(poi_cats[pidx], minlength=N_CATEGORIES)
        oidx = order_index.query(center, r)
        vht = np.bincount(oa.hours[oidx], weights=oa.durations[oidx], minlength=N_HOURS) / days
        samples.append(
            RawSample(center=center, poi_counts=counts, vht_by_hour=vht, order_count=len(oidx))
        )
    return samples


def clean(
    samples: list[RawSample], days: int, policy: CleanPolicy = CleanPolicy()
) -> tuple[list[RawSample], CleanReport]:
    """Drop samples with no POIs or with too sparse travel activity.

    The activity threshold is the average order rate: total orders divided by
    (24 * days) must reach policy.min_orders_per_hour.
    """
    kept = []
    removed_no_poi = removed_low = 0
    for s in samples:
        if s.density_proxy < 1:
            removed_no_poi += 1
            continue
        if s.order_count is None:
            raise ValueError("cannot clean samples without order counts")
        if s.order_count / (N_HOURS * days) < policy.min_orders_per_hour:
            removed_low += 1
            continue
        kept.append(s)
    if not kept:
        raise EmptyDataset("no samples survive cleaning")
    return kept, CleanReport(len(kept), removed_no_poi, removed_low)


def normalize(samples: list[RawSample], days: int) -> Dataset:
    """Turn raw tallies into the 17-feature / 25-feature dataset.

    Scale constants come from the input samples themselves: density_max is the
    largest POI tally, vht_max the largest daily total. Samples without any
    VHT get an all-zero hourly vector and are flagged.
    """
    if not samples:
        raise EmptyDataset("cannot normalize an empty sample list")
    density_max = max(s.density_proxy for s in samples)
    vht_max = max(s.vht_total for s in samples)
    if density_max < 1:
        raise EmptyDataset("no sample contains a POI; clean first")
    if vht_max <= 0:
        raise EmptyDataset("no sample contains any travel activity")
    info = NormalizationInfo(float(density_max), float(vht_max), days)

    rows = []
    for i, s in enumerate(samples):
        rows.append(_make_row(f"ST{i}", s, info))
    return Dataset(rows, info)


def _make_row(sample_id: str, s: RawSample, info: NormalizationInfo) -> DatasetRow:
    x = s.density_proxy
    proportions = s.poi_counts / x if x > 0 else np.zeros(N_CATEGORIES)
    env = EnvFeatures(density_norm=x / info.density_max, proportions=proportions)
    c = s.vht_total
    zero_vht = c <= 0.0
    hourly = s.vht_by_hour / c if not zero_vht else np.zeros(N_HOURS)
    demand = DemandFeatures(total_norm=c / info.vht_max, hourly=hourly)
    return DatasetRow(sample_id, s.center, env, demand, s, zero_vht)


def renormalize(dataset: Dataset, info: NormalizationInfo) -> Dataset:
    """Re-express a dataset's scaled features under foreign norm constants.

    Proportions are scale-free; only density_norm and total_norm change. Used
    when scoring a region against a model trained elsewhere.
    """
    rows = [_make_row(r.sample_id, r.raw, info) for r in dataset.rows]
    return Dataset(rows, info)


def denormalize_total(total_norm: float, info: NormalizationInfo) -> float:
    """Map a normalized total back to daily VHT hours."""
    return total_norm * info.vht_max


def env_from_counts(counts: np.ndarray, info: NormalizationInfo) -> EnvFeatures:
    """Environment vector for an explicit category-count composition.

    Compositions denser than the training maximum yield density_norm > 1;
    callers probing far outside the training envelope own that extrapolation.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (N_CATEGORIES,):
        raise ShapeError(f"counts must have shape (16,), got {counts.shape}")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    total = int(counts.sum())
    if total == 0:
        raise ValueError("proportions are undefined for an all-zero composition")
    return EnvFeatures(density_norm=total / info.density_max, proportions=counts / total)


# ---------------------------------------------------------------------------
# Serialization: dataset CSV + norm-info sidecar JSON
# ---------------------------------------------------------------------------

DATASET_HEADER = (
    ["sample_id", "lon", "lat", "density_norm"]
    + [f"p{j:02d}" for j in range(N_CATEGORIES)]
    + ["total_norm"]
    + [f"q{h:02d}" for h in range(N_HOURS)]
    + ["raw_total_vht"]
)


def save_dataset(dataset: Dataset, csv_path: str | Path, sidecar_path: str | Path | None = None,
                 extra_meta: dict | None = None) -> None:
    """Write the dataset CSV and its NormalizationInfo sidecar.

    Floats are written with repr (shortest round-trip), so save/load is exact
    and two runs with identical inputs produce byte-identical files.
    """
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".norm.json")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_HEADER)
        for r in dataset.rows:
            row = [r.sample_id, repr(r.center.lon), repr(r.center.lat), repr(r.env.density_norm)]
            row += [repr(float(p)) for p in r.env.proportions]
            row.append(repr(r.demand.total_norm))
            row += [repr(float(q)) for q in r.demand.hourly]
            row.append(repr(r.raw.vht_total))
            w.writerow(row)
    meta = {"format_version": 1, "norm_info": dataset.norm_info.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    Path(sidecar_path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                                  encoding="utf-8")


def load_dataset(csv_path: str | Path, sidecar_path: str | Path | None = None) -> Dataset:
    """Reload a dataset written by :func:`save_dataset`.

    Raw POI counts are reconstructed from proportions and density_norm (exact
    integer recovery given round-trip floats); order counts are not stored.
    """
    csv_path = Path(csv_path)
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".norm.json")
    meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    info = NormalizationInfo.from_dict(meta["norm_info"])

    rows = []
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DATASET_HEADER:
            raise ShapeError(f"{csv_path}: unexpected dataset header")
        for rec in reader:
            sample_id = rec[0]
            center = GeoPoint(float(rec[1]), float(rec[2]))
            density_norm = float(rec[3])
            p = np.array([float(v) for v in rec[4 : 4 + N_CATEGORIES]])
            total_norm = float(rec[4 + N_CATEGORIES])
            q = np.array([float(v) for v in rec[5 + N_CATEGORIES : 5 + N_CATEGORIES + N_HOURS]])
            raw_total = float(rec[-1])
            x = int(round(density_norm * info.density_max))
            counts = np.rint(p * x).astype(np.int64)
            raw = RawSample(center=center, poi_counts=counts,
                            vht_by_hour=q * raw_total, order_count=None)
            env = EnvFeatures(density_norm=density_norm, proportions=p)
            demand = DemandFeatures(total_norm=total_norm, hourly=q)
            rows.append(DatasetRow(sample_id, center, env, demand, raw, raw_total <= 0))
    return Dataset(rows, info)


# ---------------------------------------------------------------------------
# Raw-sample persistence (pipeline intermediate)
# ---------------------------------------------------------------------------

RAW_HEADER = (
    ["lon", "lat"]
    + [f"c{j:02d}" for j in range(N_CATEGORIES)]
    + ["order_count"]
    + [f"vht{h:02d}" for h in range(N_HOURS)]
)


def save_raw_samples(samples: list[RawSample], days: int, spec: GridSpec,
                     csv_path: str | Path, extra_meta: dict | None = None) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_HEADER)
        for s in samples:
            row = [repr(s.center.lon), repr(s.center.lat)]
            row += [int(c) for c in s.poi_counts]
            row.append(s.order_count if s.order_count is not None else -1)
            row += [repr(float(v)) for v in s.vht_by_hour]
            w.writerow(row)
    meta = {"format_version": 1, "days": days, "grid": spec.to_dict()}
    if extra_meta:
        meta.update(extra_meta)
    csv_path.with_suffix(".meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_raw_samples(csv_path: str | Path) -> tuple[list[RawSample], int, GridSpec]:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".meta.json").read_text(encoding="utf-8"))
    spec = GridSpec.from_dict(meta["grid"])
    samples = []
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader) != RAW_HEADER:
            raise ShapeError(f"{csv_path}: unexpected raw-sample header")
        for rec in reader:
            center = GeoPoint(float(rec[0]), float(rec[1]))
            counts = np.array([int(v) for v in rec[2 : 2 + N_CATEGORIES]], dtype=np.int64)
            order_count = int(rec[2 + N_CATEGORIES])
            vht = np.array([float(v) for v in rec[3 + N_CATEGORIES :]], dtype=float)
            samples.append(RawSample(center, counts, vht,
                                     order_count if order_count >= 0 else None))
    return samples, int(meta["days"]), spec
