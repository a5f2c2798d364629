"""Experiment harness: holdout accuracy, cross-region transfer, activity splits.

Transfer scoring keeps the training region's normalization constants by
default, since rescaling features under a transferred model silently changes
the hypothesis being tested; pass use_region_norm=True to opt into the test
region's own scale. Reports always name train and test regions explicitly.
"""

from __future__ import annotations

import csv
import inspect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NormMismatch, ShapeError
from .features import Dataset, GridSpec, denormalize_total, renormalize
from .nets import per_sample_accuracy

N_HOURS = 24


@dataclass(frozen=True)
class Region:
    name: str
    spec: GridSpec
    dataset: Dataset


@dataclass
class HoldoutReport:
    kind: str
    n_train: int
    n_test: int
    train_median: float
    test_median: float
    excluded: int
    history: dict | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "n_train": self.n_train, "n_test": self.n_test,
            "train_median": self.train_median, "test_median": self.test_median,
            "excluded": self.excluded, "history": self.history,
        }


@dataclass
class TransferReport:
    train_region: str
    test_region: str
    algorithm: str
    kind: str
    median_accuracy: float
    per_sample: list[tuple[str, float]] = field(repr=False, default_factory=list)
    excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "train_region": self.train_region, "test_region": self.test_region,
            "algorithm": self.algorithm, "kind": self.kind,
            "median_accuracy": self.median_accuracy, "excluded": self.excluded,
            "n_scored": len(self.per_sample),
        }


def split_indices(n: int, train_share: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split; the test share is floored, the rest trains."""
    if not (0.0 < train_share < 1.0):
        raise ValueError("train_share must be in (0, 1)")
    n_test = int(math.floor(n * (1.0 - train_share)))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def targets_for(dataset: Dataset, kind: str) -> np.ndarray:
    if kind == "T":
        return dataset.total_targets()
    if kind == "D":
        return dataset.hourly_targets()
    raise ValueError(f"unknown kind {kind!r}")


def holdout_eval(dataset: Dataset, model, split: float = 0.8, seed: int = 0) -> HoldoutReport:
    """Train on a seeded split, report train/test median accuracy and history.

    The model is fitted in place; its norm_info_ is stamped from the dataset.
    """
    if len(dataset) < 5:
        raise ShapeError("need at least 5 samples for a holdout evaluation")
    X = dataset.env_matrix()
    Y = targets_for(dataset, model.kind)
    train_idx, test_idx = split_indices(len(dataset), split, seed)
    if _accepts_eval_set(model):
        model.fit(X[train_idx], Y[train_idx], eval_set=(X[test_idx], Y[test_idx]))
    else:
        model.fit(X[train_idx], Y[train_idx])
    model.norm_info_ = dataset.norm_info
    train_accs, exc_train = per_sample_accuracy(model, X[train_idx], Y[train_idx])
    test_accs, exc_test = per_sample_accuracy(model, X[test_idx], Y[test_idx])
    history = model.history_.to_dict() if getattr(model, "history_", None) else None
    return HoldoutReport(
        kind=model.kind, n_train=int(train_idx.size), n_test=int(test_idx.size),
        train_median=float(np.median(train_accs)), test_median=float(np.median(test_accs)),
        excluded=exc_train + exc_test, history=history,
    )


def _accepts_eval_set(model) -> bool:
    try:
        return "eval_set" in inspect.signature(model.fit).parameters
    except (TypeError, ValueError):
        return False


def dataset_median_accuracy(model, dataset: Dataset) -> float:
    """Median accuracy of a fitted model on a dataset sharing its normalization."""
    info = getattr(model, "norm_info_", None)
    if info is not None and info.to_dict() != dataset.norm_info.to_dict():
        raise NormMismatch(
            "dataset normalization differs from the model's; go through transfer_eval"
        )
    accs, _ = per_sample_accuracy(model, dataset.env_matrix(), targets_for(dataset, model.kind))
    return float(np.median(accs))


def transfer_eval(model, region: Region, train_region: str = "train",
                  use_region_norm: bool = False, algorithm: str | None = None) -> TransferReport:
    """Score a trained model on another region.

    Features and targets are re-expressed under the model's own normalization
    constants unless use_region_norm explicitly opts into the test region's.
    """
    info = getattr(model, "norm_info_", None)
    if info is None:
        raise NormMismatch("model carries no normalization info; cannot transfer")
    ds = region.dataset
    if not use_region_norm and ds.norm_info.to_dict() != info.to_dict():
        ds = renormalize(ds, info)
    X = ds.env_matrix()
    Y = targets_for(ds, model.kind)
    accs, excluded = per_sample_accuracy(model, X, Y)
    scored_ids = _scored_ids(ds, model.kind)
    return TransferReport(
        train_region=train_region, test_region=region.name,
        algorithm=algorithm or type(model).__name__, kind=model.kind,
        median_accuracy=float(np.median(accs)),
        per_sample=list(zip(scored_ids, accs.tolist())), excluded=excluded,
    )


def _scored_ids(dataset: Dataset, kind: str) -> list[str]:
    if kind == "T":
        return [r.sample_id for r in dataset.rows if r.demand.total_norm != 0]
    return [r.sample_id for r in dataset.rows if not r.zero_vht]


def split_by_activity(dataset: Dataset, threshold_hours: float = 2000.0,
                      period_days: int = 30) -> tuple[Dataset, Dataset]:
    """Partition at an accumulated-VHT threshold (inclusive on the sparse side).

    The accumulated total is the daily average scaled to the comparison
    period (a 30-day month by default; for month-long source data this equals
    the plain accumulated VHT). Both halves share the parent's
    NormalizationInfo.
    """
    low = [r for r in dataset.rows if r.raw.vht_total * period_days <= threshold_hours]
    high = [r for r in dataset.rows if r.raw.vht_total * period_days > threshold_hours]
    return Dataset(low, dataset.norm_info), Dataset(high, dataset.norm_info)


@dataclass(frozen=True)
class SurfacePoint:
    sample_id: str
    lon: float
    lat: float
    prediction: float
    ground_truth: float
    accuracy: float  # NaN where undefined (zero ground truth)


def error_surface(model, dataset: Dataset) -> list[SurfacePoint]:
    """Per-sample prediction / ground truth / accuracy, keyed by grid position.

    For the total network the scalar columns are denormalized daily VHT; for
    the distribution network they are NaN and only the accuracy is meaningful.
    """
    X = dataset.env_matrix()
    info = dataset.norm_info
    points = []
    if model.kind == "T":
        preds = np.atleast_1d(model.predict(X))
        for row, p in zip(dataset.rows, preds):
            gt_norm = row.demand.total_norm
            acc = 1.0 - abs(gt_norm - p) / gt_norm if gt_norm != 0 else float("nan")
            points.append(SurfacePoint(
                row.sample_id, row.center.lon, row.center.lat,
                denormalize_total(float(p), info), denormalize_total(gt_norm, info), acc))
    else:
        dist = model.predict_dist(X)
        for row, p in zip(dataset.rows, dist):
            if row.zero_vht:
                acc = float("nan")
            else:
                acc = 1.0 - float(np.abs(row.demand.hourly - p).sum())
            points.append(SurfacePoint(row.sample_id, row.center.lon, row.center.lat,
                                       float("nan"), float("nan"), acc))
    return points


def save_report_json(report, path: str | Path, extra: dict | None = None) -> None:
    doc = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def save_per_sample_csv(pairs: list[tuple[str, float, float, float]], path: str | Path) -> None:
    """One row per sample: id, ground truth, prediction, accuracy."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "ground_truth", "prediction", "accuracy"])
        for sample_id, gt, pred, acc in pairs:
            w.writerow([sample_id, repr(float(gt)), repr(float(pred)), repr(float(acc))])


def surface_to_csv(points: list[SurfacePoint], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "lon", "lat", "prediction", "ground_truth", "accuracy"])
        for p in points:
            w.writerow([p.sample_id, repr(p.lon), repr(p.lat), repr(p.prediction),
                        repr(p.ground_truth), repr(p.accuracy)])
