"""Read-only HTTP JSON facade over trained models and a dataset.

Prediction wraps the hybrid predictor synchronously; optimization runs as
asynchronous jobs because a GA run can take far longer than a request budget.
All numbers are serialized as doubles rounded to 12 significant digits so
responses diff stably.
"""

from __future__ import annotations

import itertools
import math
import os
import queue
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import optimizer
from .errors import Infeasible, ShapeError, UrbanFluxError
from .features import Dataset, load_dataset
from .ingest import N_CATEGORIES
from .geo_grid import GeoPoint, local_distances_m
from .model_io import load_model
from .nets import predict_hybrid
from .features import env_from_counts

ENV_MODEL_T = "URBANFLUX_MODEL_T"
ENV_MODEL_D = "URBANFLUX_MODEL_D"
ENV_DATASET = "URBANFLUX_DATASET"

# Well-known Haikou locations offered as picker presets when the loaded
# dataset contains a sample near them.
DEFAULT_PRESETS = (
    ("Nanda Overpass", 110.3303, 20.0199),
    ("Haikou People's Park", 110.3392, 20.0363),
    ("Haikou East Railway Station", 110.3382, 19.9854),
    ("Hainan Government", 110.3441, 20.0207),
)
PRESET_MATCH_RADIUS_M = 150.0


def round_sig(value, digits: int = 12):
    """Recursively round floats to a fixed number of significant digits."""
    if isinstance(value, float):
        if not math.isfinite(value):
            return value
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {k: round_sig(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_sig(v, digits) for v in value]
    return value


@dataclass
class Job:
    id: str
    scenario: dict
    status: str = "queued"  # queued -> running -> done | failed
    result: dict | None = None
    error: str | None = None


@dataclass
class ServiceState:
    model_t: object | None = None
    model_d: object | None = None
    dataset: Dataset | None = None
    jobs: dict = field(default_factory=dict)
    job_queue: "queue.Queue[str]" = field(default_factory=queue.Queue)
    lock: threading.Lock = field(default_factory=threading.Lock)
    worker: threading.Thread | None = None
    _job_counter: itertools.count = field(default_factory=lambda: itertools.count(1))

    @property
    def ready(self) -> bool:
        return self.model_t is not None and self.model_d is not None

    def load(self, model_t_path=None, model_d_path=None, dataset_path=None):
        model_t_path = model_t_path or os.environ.get(ENV_MODEL_T)
        model_d_path = model_d_path or os.environ.get(ENV_MODEL_D)
        dataset_path = dataset_path or os.environ.get(ENV_DATASET)
        if model_t_path:
            self.model_t = load_model(model_t_path)
        if model_d_path:
            self.model_d = load_model(model_d_path)
        if dataset_path:
            self.dataset = load_dataset(dataset_path)
        return self

    def submit(self, scenario: dict) -> Job:
        with self.lock:
            job = Job(id=f"job-{next(self._job_counter):06d}", scenario=scenario)
            self.jobs[job.id] = job
            self.job_queue.put(job.id)
        self.ensure_worker()
        return job

    def ensure_worker(self):
        if self.worker is None or not self.worker.is_alive():
            self.worker = threading.Thread(target=self._work, daemon=True)
            self.worker.start()

    def _work(self):
        while True:
            try:
                job_id = self.job_queue.get(timeout=1.0)
            except queue.Empty:
                return
            job = self.jobs[job_id]
            with self.lock:
                job.status = "running"
            try:
                result = optimizer.run_scenario(job.scenario, self.model_t, self.model_d)
                with self.lock:
                    job.result = round_sig(result)
                    job.status = "done"
            except Exception as e:  # surfaced through the job record
                with self.lock:
                    job.error = f"{type(e).__name__}: {e}"
                    job.status = "failed"


def _validate_counts(body) -> np.ndarray:
    if not isinstance(body, dict) or "counts" not in body:
        raise ShapeError("body must be an object with a 'counts' field")
    counts = body["counts"]
    if not isinstance(counts, list) or len(counts) != N_CATEGORIES:
        raise ShapeError(f"counts must be a list of {N_CATEGORIES} integers")
    arr = np.zeros(N_CATEGORIES, dtype=np.int64)
    for i, v in enumerate(counts):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ShapeError(f"counts[{i}] is not an integer")
        if v < 0:
            raise ShapeError(f"counts[{i}] is negative")
        arr[i] = v
    return arr


def _find_presets(dataset: Dataset) -> list[dict]:
    lons = np.array([r.center.lon for r in dataset.rows])
    lats = np.array([r.center.lat for r in dataset.rows])
    presets = []
    for name, lon, lat in DEFAULT_PRESETS:
        try:
            d = local_distances_m(GeoPoint(lon, lat), lons, lats)
        except ValueError:
            continue
        if d.size and d.min() <= PRESET_MATCH_RADIUS_M:
            row = dataset.rows[int(np.argmin(d))]
            presets.append({"id": row.sample_id, "name": name,
                            "lon": row.center.lon, "lat": row.center.lat})
    return presets


def create_app(state: ServiceState | None = None) -> FastAPI:
    state = state or ServiceState().load()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield

    app = FastAPI(title="urbanflux", lifespan=lifespan)
    app.state.service = state

    def err(status: int, message: str):
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/health")
    def health():
        if not state.ready:
            return err(503, "models not loaded")
        def version(m):
            return {"algorithm": getattr(m, "kind", "?"), "format_version": 1}
        return {"status": "ok",
                "model_versions": {"T": version(state.model_t), "D": version(state.model_d)}}

    @app.post("/predict")
    async def predict(request: Request):
        if not state.ready:
            return err(503, "models not loaded")
        try:
            body = await request.json()
        except Exception:
            return err(400, "body is not valid JSON")
        try:
            counts = _validate_counts(body)
        except ShapeError as e:
            return err(400, str(e))
        if counts.sum() == 0:
            return err(422, "proportions are undefined for all-zero counts")
        env = env_from_counts(counts, state.model_t.norm_info_).as_vector()
        pred = predict_hybrid(state.model_t, state.model_d, env)
        return round_sig(pred.to_dict())

    @app.post("/optimize", status_code=202)
    async def optimize(request: Request):
        if not state.ready:
            return err(503, "models not loaded")
        try:
            scenario = await request.json()
        except Exception:
            return err(400, "body is not valid JSON")
        try:
            optimizer.parse_scenario(scenario)
        except (Infeasible, ShapeError, ValueError, UrbanFluxError) as e:
            return err(400, f"infeasible or invalid scenario: {e}")
        job = state.submit(scenario)
        return {"job_id": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return err(404, f"unknown job {job_id}")
        with state.lock:
            return {"id": job.id, "status": job.status, "result": job.result,
                    "error": job.error}

    @app.get("/dataset/summary")
    def summary():
        ds = state.dataset
        if ds is None:
            return err(404, "no dataset loaded")
        lo, hi = ds.bbox()
        totals = np.zeros(N_CATEGORIES, dtype=np.int64)
        for r in ds.rows:
            totals += r.raw.poi_counts
        return round_sig({
            "sample_count": len(ds),
            "bbox": {"min": {"lon": lo.lon, "lat": lo.lat},
                     "max": {"lon": hi.lon, "lat": hi.lat}},
            "norm_info": ds.norm_info.to_dict(),
            "per_category_totals": totals.tolist(),
            "presets": _find_presets(ds),
            "sample_ids": [r.sample_id for r in ds.rows[:50]],
        })

    @app.get("/samples/{sample_id}")
    def sample(sample_id: str):
        ds = state.dataset
        if ds is None:
            return err(404, "no dataset loaded")
        for r in ds.rows:
            if r.sample_id == sample_id:
                return round_sig({
                    "sample_id": r.sample_id,
                    "lon": r.center.lon, "lat": r.center.lat,
                    "counts": r.raw.poi_counts.tolist(),
                    "density_norm": r.env.density_norm,
                    "proportions": r.env.proportions.tolist(),
                    "total_norm": r.demand.total_norm,
                    "hourly": r.demand.hourly.tolist(),
                    "total_vht": r.raw.vht_total,
                })
        return err(404, f"unknown sample {sample_id}")

    return app


def serve(host: str, port: int, model_t_path=None, model_d_path=None, dataset_path=None):
    import uvicorn

    state = ServiceState().load(model_t_path, model_d_path, dataset_path)
    uvicorn.run(create_app(state), host=host, port=port, log_level="info")
