"""Command-line entry point: one subcommand per pipeline stage plus `run`.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
divergence. Every failure also emits a single-line JSON object on stderr.
Pipeline stages skip themselves when their outputs already exist unless
--force is given, and every JSON artifact embeds the config hash and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import evalx, features, geo_grid, ingest, model_io, nets, optimizer, render, synth
from .baselines import ForestRegressor, LinearSvrRegressor
from .errors import (
    DegenerateExtent, DivergenceError, EmptyDataset, Infeasible, NegativeCount,
    NormMismatch, OrderTimeError, ParseError, RangeError, ShapeError, UrbanFluxError,
    ZeroGroundTruth,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (ParseError, RangeError, OrderTimeError, EmptyDataset, DegenerateExtent,
               ShapeError, NormMismatch, Infeasible, NegativeCount, ZeroGroundTruth,
               FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, stage: str | None = None) -> None:
    doc = {"error": kind, "message": message}
    if stage:
        doc["stage"] = stage
    print(json.dumps(doc), file=sys.stderr)


def _parse_bbox(text: str) -> tuple[geo_grid.GeoPoint, geo_grid.GeoPoint]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise UsageError("--bbox expects lon1,lat1,lon2,lat2")
    return geo_grid.GeoPoint(parts[0], parts[1]), geo_grid.GeoPoint(parts[2], parts[3])


def _parse_hidden(text: str) -> tuple[int, ...]:
    """Accept '7x82' shorthand or an explicit '82,82,36' list."""
    text = text.strip()
    if "x" in text:
        n, w = text.split("x")
        return (int(w),) * int(n)
    return tuple(int(v) for v in text.split(","))


def _parse_counts(text: str) -> np.ndarray:
    vals = [int(v) for v in text.split(",")]
    if len(vals) != ingest.N_CATEGORIES:
        raise UsageError(f"--counts expects {ingest.N_CATEGORIES} integers")
    return np.array(vals, dtype=np.int64)


def config_hash(config: dict) -> str:
    """Hash of the canonical config, excluding volatile path fields."""
    slim = {k: v for k, v in config.items() if k not in ("out",)}
    return hashlib.sha256(
        json.dumps(slim, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["synth", "train_t", "train_d"],
    "properties": {
        "seed": {"type": "integer"},
        "synth": {
            "type": "object",
            "required": ["bbox"],
            "properties": {
                "bbox": {"type": "array", "minItems": 4, "maxItems": 4,
                         "items": {"type": "number"}},
                "step_m": {"type": "number", "exclusiveMinimum": 0},
                "buffer_radius_m": {"type": "number", "exclusiveMinimum": 0},
                "n_poi": {"type": "integer", "minimum": 16},
                "n_days": {"type": "integer", "minimum": 1},
                "gain": {"type": "number", "exclusiveMinimum": 0},
                "noise": {"type": "number", "minimum": 0},
            },
        },
        "clean": {"type": "object",
                  "properties": {"min_orders_per_hour": {"type": "number", "minimum": 0}}},
        "train_t": {"$ref": "#/$defs/train"},
        "train_d": {"$ref": "#/$defs/train"},
        "cv": {"type": "object"},
        "transfer": {"type": "object"},
        "optimize": {"type": "object"},
        "render": {"type": "object"},
    },
    "$defs": {
        "train": {
            "type": "object",
            "properties": {
                "hidden_widths": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "activation": {"enum": list(nets.ACTIVATIONS)},
                "split": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        }
    },
}


def validate_config(config: dict) -> None:
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(config),
                    key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise UsageError(f"config field {where}: {e.message}")


def _synth_spec_from_config(cfg: dict, seed: int) -> synth.SynthSpec:
    bbox = cfg["bbox"]
    grid = geo_grid.GridSpec(
        min=geo_grid.GeoPoint(bbox[0], bbox[1]),
        max=geo_grid.GeoPoint(bbox[2], bbox[3]),
        step_m=cfg.get("step_m", 200.0),
        buffer_radius_m=cfg.get("buffer_radius_m", 90.0),
    )
    return synth.SynthSpec(
        grid=grid,
        n_poi=cfg.get("n_poi", 60_000),
        n_days=cfg.get("n_days", 2),
        gain=cfg.get("gain", 2.2),
        noise=cfg.get("noise", 0.05),
        seed=seed,
    )


def _mlp_from_config(cfg: dict, kind: str, seed: int) -> nets.MlpRegressor:
    default_widths = (36,) * 6 if kind == "T" else (82,) * 7
    return nets.MlpRegressor(
        hidden_widths=tuple(cfg.get("hidden_widths", default_widths)),
        kind=kind,
        activation=cfg.get("activation", "sigmoid"),
        epochs=cfg.get("epochs", 300),
        batch_size=cfg.get("batch_size", 100),
        learning_rate=cfg.get("learning_rate", 0.1),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Stage implementations (shared by subcommands and `run`)
# ---------------------------------------------------------------------------


def stage_sample(poi_path, orders_path, spec, days, out_csv, meta, drop_invalid=True):
    pois = ingest.parse_poi_csv(poi_path)
    orders = ingest.load_orders_arrays(orders_path, drop_invalid=drop_invalid)
    centers = geo_grid.generate_centers(spec)
    samples = features.build_raw_samples(centers, pois, orders, spec, days)
    features.save_raw_samples(samples, days, spec, out_csv, extra_meta=meta)
    return samples


def stage_clean(raw_csv, min_orders_per_hour, out_csv, meta):
    samples, days, spec = features.load_raw_samples(raw_csv)
    kept, report = features.clean(samples, days,
                                  features.CleanPolicy(min_orders_per_hour))
    dataset = features.normalize(kept, days)
    features.save_dataset(dataset, out_csv,
                          extra_meta={**meta, "clean_report": report.__dict__})
    return dataset, report


def stage_train(dataset, kind, model, split, seed, out_model, meta):
    report = evalx.holdout_eval(dataset, model, split=split, seed=seed)
    model_io.save_model(model, out_model, extra_meta=meta)
    return report


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        grid=geo_grid.GridSpec(min=_parse_bbox(args.bbox)[0], max=_parse_bbox(args.bbox)[1],
                               step_m=args.step, buffer_radius_m=args.radius),
        n_poi=args.n_poi, n_days=args.days, gain=args.gain, noise=args.noise,
        seed=args.seed,
    )
    out = Path(args.out)
    paths = synth.gen_city(spec, out)
    print(json.dumps({"poi": str(paths[0]), "orders": str(paths[1]),
                      "truth": str(paths[2])}))
    return EXIT_OK


def cmd_sample(args) -> int:
    lo, hi = _parse_bbox(args.bbox)
    spec = geo_grid.GridSpec(min=lo, max=hi, step_m=args.step, buffer_radius_m=args.radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = stage_sample(args.poi, args.orders, spec, args.days,
                           out / "raw_samples.csv", {"seed": args.seed},
                           drop_invalid=args.drop_invalid)
    print(json.dumps({"raw_samples": str(out / "raw_samples.csv"), "count": len(samples)}))
    return EXIT_OK


def cmd_clean(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, report = stage_clean(args.raw, args.min_orders_per_hour,
                                  out / "dataset.csv", {"seed": args.seed})
    print(json.dumps({"dataset": str(out / "dataset.csv"), **report.__dict__}))
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = features.load_dataset(args.dataset)
    model = nets.MlpRegressor(
        hidden_widths=_parse_hidden(args.hidden), kind=args.kind,
        activation=args.activation, epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.seed,
    )
    report = stage_train(dataset, args.kind, model, args.split, args.seed,
                         args.out_model, {"seed": args.seed})
    print(json.dumps({"model": args.out_model, "train_median": report.train_median,
                      "test_median": report.test_median}))
    return EXIT_OK


def cmd_cv(args) -> int:
    dataset = features.load_dataset(args.dataset)
    X = dataset.env_matrix()
    Y = evalx.targets_for(dataset, args.kind)
    models: dict = {}
    for spec_text in args.specs.split(";"):
        widths = _parse_hidden(spec_text)
        label = f"mlp-{len(widths)}x{widths[0]}"
        models[label] = nets.MlpRegressor(hidden_widths=widths, kind=args.kind,
                                          epochs=args.epochs, seed=args.seed,
                                          record_history=False)
    if args.include_baselines:
        models["rf"] = ForestRegressor(n_trees=args.rf_trees, kind=args.kind, seed=args.seed)
        models["svr"] = LinearSvrRegressor(epochs=400, kind=args.kind, seed=args.seed)
    table = nets.kfold_cv(X, Y, models, k=args.k, seed=args.seed)
    doc = {"kind": args.kind, "k": args.k, "results": table}
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(json.dumps(doc["results"]))
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = features.load_dataset(args.dataset)
    model = model_io.load_model(args.model)
    median = evalx.dataset_median_accuracy(model, dataset)
    doc = {"model": args.model, "dataset": args.dataset, "kind": model.kind,
           "median_accuracy": median}
    if args.surface:
        surface = evalx.error_surface(model, dataset)
        evalx.surface_to_csv(surface, args.surface)
        doc["surface"] = args.surface
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(json.dumps(doc))
    return EXIT_OK


def cmd_transfer(args) -> int:
    model = model_io.load_model(args.model)
    dataset = features.load_dataset(args.dataset)
    region = evalx.Region(name=args.region_name, spec=None, dataset=dataset)
    report = evalx.transfer_eval(model, region, train_region=args.train_region,
                                 use_region_norm=args.use_region_norm)
    if args.out:
        evalx.save_report_json(report, args.out)
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_predict(args) -> int:
    model_t = model_io.load_model(args.model_t)
    model_d = model_io.load_model(args.model_d)
    counts = _parse_counts(args.counts)
    env = features.env_from_counts(counts, model_t.norm_info_).as_vector()
    pred = nets.predict_hybrid(model_t, model_d, env)
    doc = pred.to_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    print(json.dumps(doc))
    return EXIT_OK


def cmd_optimize(args) -> int:
    model_t = model_io.load_model(args.model_t)
    model_d = model_io.load_model(args.model_d)
    scenario = optimizer.load_scenario(args.scenario)
    result = optimizer.run_scenario(scenario, model_t, model_d)
    optimizer.save_result(result, args.out)
    print(json.dumps({"best_fitness": result["best_fitness"],
                      "base_fitness": result["base_fitness"], "out": args.out}))
    return EXIT_OK


def cmd_render(args) -> int:
    ramp = render.RAMPS[args.ramp]
    dataset = features.load_dataset(args.dataset)
    _, _, spec = _dataset_grid(args, dataset)
    centers = [r.center for r in dataset.rows]
    if args.mode == "density":
        values = np.array([r.raw.density_proxy for r in dataset.rows], dtype=float)
        raster = render.raster_from_values(centers, values, spec)
        render.render_heatmap(raster, ramp, args.out, cell_px=args.cell_px)
    elif args.mode == "category":
        values = np.array([r.raw.poi_counts[args.index] for r in dataset.rows], dtype=float)
        raster = render.raster_from_values(centers, values, spec)
        render.render_heatmap(raster, ramp, args.out, cell_px=args.cell_px)
    elif args.mode == "hour":
        values = np.array([r.raw.vht_by_hour[args.index] for r in dataset.rows], dtype=float)
        raster = render.raster_from_values(centers, values, spec)
        render.render_heatmap(raster, ramp, args.out, cell_px=args.cell_px)
    elif args.mode == "error":
        model = model_io.load_model(args.model)
        surface = evalx.error_surface(model, dataset)
        render.render_error_map(surface, spec, args.out, cell_px=args.cell_px)
    elif args.mode == "curves":
        row = next((r for r in dataset.rows if r.sample_id == args.sample_id), None)
        if row is None:
            raise EmptyDataset(f"unknown sample {args.sample_id}")
        series = [render.CurveSeries("ground truth", row.demand.hourly, faded=True)]
        if args.model_t and args.model_d:
            model_t = model_io.load_model(args.model_t)
            model_d = model_io.load_model(args.model_d)
            pred = nets.predict_hybrid(model_t, model_d, row.env.as_vector())
            series.append(render.CurveSeries("prediction", pred.proportions))
        render.render_curves(series, args.out)
    print(json.dumps({"out": args.out}))
    return EXIT_OK


def _dataset_grid(args, dataset):
    """GridSpec for rendering: explicit flags win, else inferred from the data."""
    if args.bbox:
        lo, hi = _parse_bbox(args.bbox)
        return lo, hi, geo_grid.GridSpec(min=lo, max=hi, step_m=args.step,
                                         buffer_radius_m=max(args.step / 2, 1.0))
    lo, hi = dataset.bbox()
    eps = 1e-9
    hi = geo_grid.GeoPoint(hi.lon + eps, hi.lat + eps)
    return lo, hi, geo_grid.GridSpec(min=lo, max=hi, step_m=args.step,
                                     buffer_radius_m=max(args.step / 2, 1.0))


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.host, args.port, args.model_t, args.model_d, args.dataset)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


def _skip(outputs: list[Path], force: bool) -> bool:
    return not force and all(p.exists() for p in outputs)


def cmd_run(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    validate_config(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    chash = config_hash(config)
    meta = {"config_hash": chash, "seed": seed}
    stages: list[str] = []

    def log_stage(name, skipped=False):
        stages.append(f"{name}{' (skipped)' if skipped else ''}")
        print(json.dumps({"stage": name, "skipped": skipped}))

    spec = _synth_spec_from_config(config["synth"], seed)

    poi_csv, orders_csv, truth_json = out / "poi.csv", out / "orders.csv", out / "truth.json"
    if _skip([poi_csv, orders_csv, truth_json], args.force):
        log_stage("synth", skipped=True)
    else:
        synth.gen_city(spec, out)
        log_stage("synth")

    raw_csv = out / "raw_samples.csv"
    if _skip([raw_csv], args.force):
        log_stage("sample", skipped=True)
    else:
        stage_sample(poi_csv, orders_csv, spec.grid, spec.n_days, raw_csv, meta)
        log_stage("sample")

    dataset_csv = out / "dataset.csv"
    if _skip([dataset_csv], args.force):
        log_stage("clean", skipped=True)
        dataset = features.load_dataset(dataset_csv)
    else:
        dataset, _ = stage_clean(raw_csv,
                                 config.get("clean", {}).get("min_orders_per_hour", 1.0),
                                 dataset_csv, meta)
        log_stage("clean")

    model_t_path, model_d_path = out / "model_t.json", out / "model_d.json"
    train_report_path = out / "train_report.json"
    if _skip([model_t_path, model_d_path, train_report_path], args.force):
        log_stage("train", skipped=True)
        model_t = model_io.load_model(model_t_path)
        model_d = model_io.load_model(model_d_path)
    else:
        model_t = _mlp_from_config(config["train_t"], "T", seed)
        model_d = _mlp_from_config(config["train_d"], "D", seed)
        rep_t = stage_train(dataset, "T", model_t, config["train_t"].get("split", 0.8),
                            seed, model_t_path, meta)
        rep_d = stage_train(dataset, "D", model_d, config["train_d"].get("split", 0.8),
                            seed, model_d_path, meta)
        train_report_path.write_text(json.dumps(
            {"T": rep_t.to_dict(), "D": rep_d.to_dict(), **meta},
            sort_keys=True, indent=2) + "\n")
        log_stage("train")

    cv_path = out / "cv_report.json"
    if "cv" in config:
        if _skip([cv_path], args.force):
            log_stage("cv", skipped=True)
        else:
            cv_cfg = config["cv"]
            kind = cv_cfg.get("kind", "D")
            X = dataset.env_matrix()
            Y = evalx.targets_for(dataset, kind)
            models = {}
            for widths in cv_cfg.get("widths", [[82, 82], [82] * 7]):
                label = f"mlp-{len(widths)}x{widths[0]}"
                models[label] = nets.MlpRegressor(
                    hidden_widths=tuple(widths), kind=kind,
                    epochs=cv_cfg.get("epochs", 100), seed=seed, record_history=False)
            table = nets.kfold_cv(X, Y, models, k=cv_cfg.get("k", 5), seed=seed)
            cv_path.write_text(json.dumps({"results": table, **meta},
                                          sort_keys=True, indent=2) + "\n")
            log_stage("cv")

    eval_path = out / "eval_report.json"
    surface_csv = out / "surface_t.csv"
    if _skip([eval_path, surface_csv], args.force):
        log_stage("eval", skipped=True)
    else:
        surface = evalx.error_surface(model_t, dataset)
        evalx.surface_to_csv(surface, surface_csv)
        eval_path.write_text(json.dumps({
            "T_median": evalx.dataset_median_accuracy(model_t, dataset),
            "D_median": evalx.dataset_median_accuracy(model_d, dataset),
            **meta}, sort_keys=True, indent=2) + "\n")
        log_stage("eval")

    if "transfer" in config:
        transfer_path = out / "transfer_report.json"
        if _skip([transfer_path], args.force):
            log_stage("transfer", skipped=True)
        else:
            tcfg = config["transfer"]
            spec_b = spec.shifted_variant(
                gain_scale=tcfg.get("gain_scale", 1.8),
                seed_offset=tcfg.get("seed_offset", 1),
                roll_profiles=tcfg.get("roll_profiles", 3))
            region_dir = out / "region_b"
            synth.gen_city(spec_b, region_dir)
            samples_b = stage_sample(region_dir / "poi.csv", region_dir / "orders.csv",
                                     spec_b.grid, spec_b.n_days,
                                     region_dir / "raw_samples.csv", meta)
            kept_b, _ = features.clean(samples_b, spec_b.n_days)
            dataset_b = features.normalize(kept_b, spec_b.n_days)
            region = evalx.Region("region_b", spec_b.grid, dataset_b)
            rep_t = evalx.transfer_eval(model_t, region, train_region="region_a")
            rep_d = evalx.transfer_eval(model_d, region, train_region="region_a")
            transfer_path.write_text(json.dumps(
                {"T": rep_t.to_dict(), "D": rep_d.to_dict(), **meta},
                sort_keys=True, indent=2) + "\n")
            log_stage("transfer")

    predict_path = out / "predict_demo.json"
    if _skip([predict_path], args.force):
        log_stage("predict", skipped=True)
    else:
        row = dataset.rows[0]
        pred = nets.predict_hybrid(model_t, model_d, row.env.as_vector())
        predict_path.write_text(json.dumps(
            {"sample_id": row.sample_id, "prediction": pred.to_dict(), **meta},
            sort_keys=True, indent=2) + "\n")
        log_stage("predict")

    if "optimize" in config:
        opt_path = out / "optimize_result.json"
        if _skip([opt_path], args.force):
            log_stage("optimize", skipped=True)
        else:
            scenario = dict(config["optimize"])
            if "base_counts" not in scenario:
                sample_id = scenario.pop("sample_id", dataset.rows[0].sample_id)
                row = next((r for r in dataset.rows if r.sample_id == sample_id), None)
                if row is None:
                    raise EmptyDataset(f"unknown sample {sample_id}")
                scenario["base_counts"] = row.raw.poi_counts.tolist()
            result = optimizer.run_scenario(scenario, model_t, model_d)
            result.update(meta)
            optimizer.save_result(result, opt_path)
            log_stage("optimize")

    render_dir = out / "render"
    density_png = render_dir / "density.png"
    error_png = render_dir / "error_map.png"
    curves_svg = render_dir / "curves.svg"
    if _skip([density_png, error_png, curves_svg], args.force):
        log_stage("render", skipped=True)
    else:
        render_dir.mkdir(exist_ok=True)
        rcfg = config.get("render", {})
        ramp = render.RAMPS[rcfg.get("ramp", "heat")]
        cell_px = rcfg.get("cell_px", 3)
        centers = [r.center for r in dataset.rows]
        density = np.array([r.raw.density_proxy for r in dataset.rows], dtype=float)
        raster = render.raster_from_values(centers, density, spec.grid)
        render.render_heatmap(raster, ramp, density_png, cell_px=cell_px, metadata=meta)
        surface = evalx.error_surface(model_t, dataset)
        render.render_error_map(surface, spec.grid, error_png, cell_px=cell_px, metadata=meta)
        row = dataset.rows[0]
        pred = nets.predict_hybrid(model_t, model_d, row.env.as_vector())
        render.render_curves(
            [render.CurveSeries("ground truth", row.demand.hourly, faded=True),
             render.CurveSeries("prediction", pred.proportions)],
            curves_svg, metadata=meta)
        log_stage("render")

    print(json.dumps({"done": stages, "config_hash": chash}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="urbanflux", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1,
                        help="reserved; stages currently run single-threaded")

    sp = sub.add_parser("synth", help="generate a synthetic city")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bbox", default="110.0,20.0,110.21,20.10")
    sp.add_argument("--step", type=float, default=200.0)
    sp.add_argument("--radius", type=float, default=90.0)
    sp.add_argument("--n-poi", type=int, default=60_000)
    sp.add_argument("--days", type=int, default=2)
    sp.add_argument("--gain", type=float, default=2.2)
    sp.add_argument("--noise", type=float, default=0.05)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("sample", help="grid-sample POI and order files")
    common(sp)
    sp.add_argument("--poi", required=True)
    sp.add_argument("--orders", required=True)
    sp.add_argument("--bbox", required=True)
    sp.add_argument("--step", type=float, default=200.0)
    sp.add_argument("--radius", type=float, default=1000.0)
    sp.add_argument("--days", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--drop-invalid", action="store_true")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("clean", help="clean raw samples and build the dataset")
    common(sp)
    sp.add_argument("--raw", required=True)
    sp.add_argument("--min-orders-per-hour", type=float, default=1.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_clean)

    sp = sub.add_parser("train", help="train one network on a dataset")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kind", choices=["T", "D"], required=True)
    sp.add_argument("--hidden", default="6x36", help="e.g. 7x82 or 82,82,82")
    sp.add_argument("--activation", default="sigmoid", choices=list(nets.ACTIVATIONS))
    sp.add_argument("--epochs", type=int, default=300)
    sp.add_argument("--batch-size", type=int, default=100)
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--split", type=float, default=0.8)
    sp.add_argument("--out-model", required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("cv", help="k-fold comparison of architectures")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--kind", choices=["T", "D"], default="D")
    sp.add_argument("--k", type=int, default=5)
    sp.add_argument("--specs", default="2x82;7x82", help="semicolon-separated, e.g. 2x82;7x82")
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--include-baselines", action="store_true")
    sp.add_argument("--rf-trees", type=int, default=30)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_cv)

    sp = sub.add_parser("eval", help="score a model on a dataset")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--surface", default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("transfer", help="score a model on another region")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--region-name", default="test_region")
    sp.add_argument("--train-region", default="train_region")
    sp.add_argument("--use-region-norm", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_transfer)

    sp = sub.add_parser("predict", help="hybrid prediction for explicit counts")
    common(sp)
    sp.add_argument("--model-t", required=True)
    sp.add_argument("--model-d", required=True)
    sp.add_argument("--counts", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_predict)

    sp = sub.add_parser("optimize", help="run a GA scenario file")
    common(sp)
    sp.add_argument("--model-t", required=True)
    sp.add_argument("--model-d", required=True)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("render", help="render maps and curves")
    common(sp)
    sp.add_argument("--mode", choices=["density", "category", "hour", "error", "curves"],
                    required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--model", default=None, help="model file (error mode)")
    sp.add_argument("--model-t", default=None)
    sp.add_argument("--model-d", default=None)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--sample-id", default=None)
    sp.add_argument("--bbox", default=None)
    sp.add_argument("--step", type=float, default=200.0)
    sp.add_argument("--cell-px", type=int, default=4)
    sp.add_argument("--ramp", choices=list(render.RAMPS), default="heat")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("serve", help="start the HTTP service")
    common(sp)
    sp.add_argument("--model-t", default=None)
    sp.add_argument("--model-d", default=None)
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("run", help="run the full pipeline from a config file")
    common(sp)
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(fn=cmd_run)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _emit_error("UsageError", str(e))
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except UsageError as e:
        _emit_error("UsageError", str(e), stage=args.command)
        return EXIT_USAGE
    except DivergenceError as e:
        _emit_error(type(e).__name__, str(e), stage=args.command)
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        _emit_error(type(e).__name__, str(e), stage=args.command)
        return EXIT_DATA
    except UrbanFluxError as e:
        _emit_error(type(e).__name__, str(e), stage=args.command)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
