import numpy as np
import pytest

from urbanflux import evalx, features, geo_grid, ingest, nets, synth


def build_dataset(city_dir, spec):
    pois = ingest.parse_poi_csv(city_dir / "poi.csv")
    orders = ingest.load_orders_arrays(city_dir / "orders.csv")
    centers = geo_grid.generate_centers(spec.grid)
    samples = features.build_raw_samples(centers, pois, orders, spec.grid, spec.n_days)
    kept, _ = features.clean(samples, spec.n_days)
    return features.normalize(kept, spec.n_days)


@pytest.fixture(scope="session")
def small_spec():
    return synth.SynthSpec(
        grid=geo_grid.GridSpec(
            min=geo_grid.GeoPoint(110.0, 20.0),
            max=geo_grid.GeoPoint(110.05, 20.025),
            step_m=200.0,
            buffer_radius_m=90.0,
        ),
        n_poi=4000,
        n_days=2,
        gain=2.6,
        noise=0.02,
        seed=7,
    )


@pytest.fixture(scope="session")
def small_city(tmp_path_factory, small_spec):
    out = tmp_path_factory.mktemp("small_city")
    synth.gen_city(small_spec, out)
    return out


@pytest.fixture(scope="session")
def small_dataset(small_city, small_spec):
    return build_dataset(small_city, small_spec)


@pytest.fixture(scope="session")
def paper_scale_city(tmp_path_factory):
    """A dense small city sampled with the 1 km buffer geometry.

    Buffer totals here cover the published study-location compositions
    (hundreds to thousands of POIs), unlike the disjoint-buffer cities.
    """
    spec = synth.SynthSpec(
        grid=geo_grid.GridSpec(
            min=geo_grid.GeoPoint(110.30, 20.00),
            max=geo_grid.GeoPoint(110.36, 20.03),
            step_m=200.0,
            buffer_radius_m=1000.0,
        ),
        n_poi=6000,
        n_days=2,
        gain=0.05,
        noise=0.02,
        seed=11,
    )
    out = tmp_path_factory.mktemp("paper_scale_city")
    synth.gen_city(spec, out)
    return build_dataset(out, spec)


@pytest.fixture(scope="session")
def paper_scale_models(paper_scale_city):
    X = paper_scale_city.env_matrix()
    model_t = nets.MlpRegressor(hidden_widths=(24, 24), kind="T", epochs=400,
                                learning_rate=0.5, seed=3, record_history=False,
                                init_scale=4.0, center_biases=True)
    model_t.fit(X, paper_scale_city.total_targets())
    model_d = nets.MlpRegressor(hidden_widths=(32, 32), kind="D", epochs=400,
                                learning_rate=0.5, seed=3, record_history=False,
                                init_scale=4.0, center_biases=True)
    model_d.fit(X, paper_scale_city.hourly_targets())
    model_t.norm_info_ = paper_scale_city.norm_info
    model_d.norm_info_ = paper_scale_city.norm_info
    return model_t, model_d


@pytest.fixture(scope="session")
def models_td(small_dataset):
    """A quick but usable hybrid model pair trained on the small city."""
    X = small_dataset.env_matrix()
    Yt = small_dataset.total_targets()
    Yd = small_dataset.hourly_targets()
    model_t = nets.MlpRegressor(hidden_widths=(24, 24), kind="T", epochs=400,
                                learning_rate=0.5, seed=3, record_history=False,
                                init_scale=4.0, center_biases=True).fit(X, Yt)
    model_d = nets.MlpRegressor(hidden_widths=(32, 32), kind="D", epochs=400,
                                learning_rate=0.5, seed=3, record_history=False,
                                init_scale=4.0, center_biases=True).fit(X, Yd)
    model_t.norm_info_ = small_dataset.norm_info
    model_d.norm_info_ = small_dataset.norm_info
    return model_t, model_d
