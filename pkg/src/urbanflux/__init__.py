"""urbanflux: urban-function composition -> vehicle travel demand toolkit."""

from .features import (
    CleanPolicy,
    Dataset,
    DemandFeatures,
    EnvFeatures,
    NormalizationInfo,
    RawSample,
    build_raw_samples,
    clean,
    denormalize_total,
    env_from_counts,
    load_dataset,
    normalize,
    save_dataset,
)
from .geo_grid import BufferIndex, GeoPoint, GridSpec, LocalXY, generate_centers, points_in_buffer, project, unproject
from .ingest import PoiRecord, TripOrder, category_name, parse_orders_csv, parse_poi_csv
from .model_io import load_model, save_model
from .nets import (
    HybridPrediction,
    MlpRegressor,
    MlpSpec,
    accuracy_dist,
    accuracy_total,
    kfold_cv,
    median_accuracy,
    predict_hybrid,
)
from .baselines import ForestRegressor, LinearSvrRegressor
from .optimizer import ConstraintSet, GaConfig, Individual, Objective, run_ga, run_grouped_ga, what_if
from .synth import SynthSpec, gen_city

__version__ = "0.1.0"
