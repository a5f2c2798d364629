"""One JSON envelope for every trained model kind.

Floats are serialized with repr (shortest round-trip form), so save followed
by load reproduces parameters bit-exactly and identical models produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import ForestRegressor, LinearSvrRegressor, TreeNode
from .errors import ShapeError
from .features import NormalizationInfo
from .nets import MlpRegressor, MlpSpec, TrainHistory

FORMAT_VERSION = 1


def _kind_tag(model) -> str:
    if isinstance(model, MlpRegressor):
        return model.kind
    if isinstance(model, ForestRegressor):
        return "rf"
    if isinstance(model, LinearSvrRegressor):
        return "svr"
    raise ShapeError(f"cannot serialize model of type {type(model).__name__}")


def _hyper(model) -> dict:
    params = model.get_params()
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()}


def save_model(model, path: str | Path, extra_meta: dict | None = None) -> None:
    """Persist a fitted estimator with its normalization constants."""
    doc: dict = {
        "format_version": FORMAT_VERSION,
        "kind": _kind_tag(model),
        "target": model.kind,
        "hyper": _hyper(model),
        "norm_info": model.norm_info_.to_dict() if getattr(model, "norm_info_", None) else None,
    }
    if isinstance(model, MlpRegressor):
        doc["algorithm"] = "mlp"
        doc["spec"] = {
            "input_width": model.spec_.input_width,
            "hidden_widths": list(model.spec_.hidden_widths),
            "output_width": model.spec_.output_width,
            "activation": model.spec_.activation,
        }
        doc["layers"] = [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights_, model.biases_)
        ]
        if getattr(model, "history_", None) is not None:
            doc["history"] = model.history_.to_dict()
    elif isinstance(model, ForestRegressor):
        doc["algorithm"] = "forest"
        doc["n_features"] = model.n_features_
        doc["n_outputs"] = model.n_outputs_
        doc["trees"] = [[t.to_dict() for t in ensemble] for ensemble in model.trees_]
    else:
        doc["algorithm"] = "svr"
        doc["n_features"] = model.n_features_
        doc["n_outputs"] = model.n_outputs_
        doc["weights"] = model.W_.tolist()
        doc["bias"] = model.b_.tolist()
    if extra_meta:
        doc["meta"] = extra_meta
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    """Reconstruct the estimator saved by :func:`save_model`."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise ShapeError(f"unsupported model format_version {doc.get('format_version')}")
    hyper = doc["hyper"]
    algorithm = doc["algorithm"]
    if algorithm == "mlp":
        hyper["hidden_widths"] = tuple(hyper["hidden_widths"])
        model = MlpRegressor(**hyper)
        spec = doc["spec"]
        model.spec_ = MlpSpec(spec["input_width"], tuple(spec["hidden_widths"]),
                              spec["output_width"], spec["activation"])
        model.weights_ = [np.array(layer["weights"], dtype=float) for layer in doc["layers"]]
        model.biases_ = [np.array(layer["bias"], dtype=float) for layer in doc["layers"]]
        if "history" in doc:
            model.history_ = TrainHistory(**doc["history"])
    elif algorithm == "forest":
        model = ForestRegressor(**hyper)
        model.trees_ = [[TreeNode.from_dict(t) for t in ensemble] for ensemble in doc["trees"]]
        model.n_features_ = doc["n_features"]
        model.n_outputs_ = doc["n_outputs"]
    elif algorithm == "svr":
        model = LinearSvrRegressor(**hyper)
        model.W_ = np.array(doc["weights"], dtype=float)
        model.b_ = np.array(doc["bias"], dtype=float)
        model.n_features_ = doc["n_features"]
        model.n_outputs_ = doc["n_outputs"]
    else:
        raise ShapeError(f"unknown algorithm {algorithm!r}")
    if doc.get("norm_info"):
        model.norm_info_ = NormalizationInfo.from_dict(doc["norm_info"])
    return model
