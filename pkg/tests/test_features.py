import math

import numpy as np
import pytest

from urbanflux.errors import EmptyDataset, ShapeError
from urbanflux.features import (
    CleanPolicy,
    RawSample,
    build_raw_samples,
    clean,
    denormalize_total,
    env_from_counts,
    load_dataset,
    load_raw_samples,
    normalize,
    save_dataset,
    save_raw_samples,
)
from urbanflux.geo_grid import EARTH_RADIUS_M, GeoPoint, GridSpec, LocalXY, unproject
from urbanflux.ingest import OrderArrays, PoiRecord

K = EARTH_RADIUS_M * math.pi / 180.0

# Table inputs for the reference sample ST82: category percentages and the
# 24-hour VHT percentages, plus its daily total.
ST82_PROPORTIONS = [6.94, 14.30, 10.93, 17.87, 2.94, 6.87, 6.24, 0.56,
                    6.24, 8.69, 7.85, 4.48, 0.84, 1.33, 2.80, 1.12]
ST82_HOURLY = [1.09, 0.66, 0.38, 0.25, 0.33, 0.50, 1.16, 3.44, 4.87, 5.56, 6.02, 6.90,
               5.57, 4.78, 5.86, 6.71, 7.23, 9.49, 8.73, 5.67, 4.64, 4.52, 3.45, 2.20]
ST490_TOTAL = 579.24


def _spec(origin=GeoPoint(110.0, 20.0), w=800.0, h=400.0, step=200.0, radius=90.0):
    return GridSpec(min=origin, max=unproject(LocalXY(w, h), origin),
                    step_m=step, buffer_radius_m=radius)


def _orders_at(center, hour, n, duration_h, days_apart=True):
    lons = np.full(n, center.lon)
    lats = np.full(n, center.lat)
    hours = np.full(n, hour, dtype=np.int64)
    durations = np.full(n, duration_h)
    return OrderArrays(lons, lats, hours, durations)


class TestBuildRawSamples:
    def test_one_poi_one_hot(self):
        spec = _spec()
        centers = [spec.min]
        pois = [PoiRecord(spec.min, 3)]
        orders = OrderArrays(np.array([]), np.array([]), np.array([], dtype=np.int64),
                             np.array([]))
        (sample,) = build_raw_samples(centers, pois, orders, spec, days=1)
        expected = np.zeros(16, dtype=np.int64)
        expected[3] = 1
        np.testing.assert_array_equal(sample.poi_counts, expected)
        assert sample.vht_total == 0.0

    def test_daily_average_of_hourly_vht(self):
        spec = _spec()
        center = spec.min
        orders = _orders_at(center, 17, 30, 1.0)
        (sample,) = build_raw_samples([center], [PoiRecord(center, 0)], orders, spec, days=30)
        assert sample.vht_by_hour[17] == pytest.approx(1.0)
        assert np.count_nonzero(sample.vht_by_hour) == 1
        assert sample.order_count == 30

    def test_matches_all_pairs_oracle(self):
        rng = np.random.default_rng(21)
        spec = _spec(w=1200.0, h=800.0, radius=300.0)
        from urbanflux.geo_grid import generate_centers

        centers = generate_centers(spec)
        pois = [PoiRecord(GeoPoint(rng.uniform(110.0, 110.012), rng.uniform(20.0, 20.008)),
                          int(rng.integers(0, 16))) for _ in range(150)]
        n_orders = 300
        oa = OrderArrays(
            lons=rng.uniform(110.0, 110.012, n_orders),
            lats=rng.uniform(20.0, 20.008, n_orders),
            hours=rng.integers(0, 24, n_orders).astype(np.int64),
            durations=rng.uniform(0.05, 2.0, n_orders),
        )
        days = 3
        samples = build_raw_samples(centers, pois, oa, spec, days)

        # oracle: loop over every (center, point) pair with scratch-built distances
        for center, sample in zip(centers, samples):
            k_lon = K * math.cos(math.radians(center.lat))
            counts = np.zeros(16, dtype=np.int64)
            for p in pois:
                dx = (p.location.lon - center.lon) * k_lon
                dy = (p.location.lat - center.lat) * K
                if math.sqrt(dx * dx + dy * dy) <= spec.buffer_radius_m:
                    counts[p.category] += 1
            vht = np.zeros(24)
            n_in = 0
            for i in range(n_orders):
                dx = (oa.lons[i] - center.lon) * k_lon
                dy = (oa.lats[i] - center.lat) * K
                if math.sqrt(dx * dx + dy * dy) <= spec.buffer_radius_m:
                    vht[oa.hours[i]] += oa.durations[i]
                    n_in += 1
            np.testing.assert_array_equal(sample.poi_counts, counts)
            np.testing.assert_allclose(sample.vht_by_hour, vht / days, atol=1e-12)
            assert sample.order_count == n_in

    def test_independent_of_input_ordering(self):
        rng = np.random.default_rng(4)
        spec = _spec(radius=400.0)
        from urbanflux.geo_grid import generate_centers

        centers = generate_centers(spec)
        pois = [PoiRecord(GeoPoint(rng.uniform(110.0, 110.008), rng.uniform(20.0, 20.004)),
                          int(rng.integers(0, 16))) for _ in range(80)]
        perm = rng.permutation(80)
        oa = OrderArrays(rng.uniform(110.0, 110.008, 60), rng.uniform(20.0, 20.004, 60),
                         rng.integers(0, 24, 60).astype(np.int64), rng.uniform(0.1, 1.0, 60))
        operm = rng.permutation(60)
        oa2 = OrderArrays(oa.lons[operm], oa.lats[operm], oa.hours[operm],
                          oa.durations[operm])
        a = build_raw_samples(centers, pois, oa, spec, 2)
        b = build_raw_samples(centers, [pois[i] for i in perm], oa2, spec, 2)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.poi_counts, sb.poi_counts)
            np.testing.assert_allclose(sa.vht_by_hour, sb.vht_by_hour, atol=1e-12)


def _raw(counts, vht_by_hour, order_count, center=GeoPoint(110.0, 20.0)):
    return RawSample(center=center, poi_counts=np.asarray(counts, dtype=np.int64),
                     vht_by_hour=np.asarray(vht_by_hour, dtype=float),
                     order_count=order_count)


class TestClean:
    def test_zero_poi_removed(self):
        s_empty = _raw([0] * 16, [0.5] * 24, 900)
        s_ok = _raw([1] + [0] * 15, [0.5] * 24, 900)
        kept, report = clean([s_empty, s_ok], days=30)
        assert kept == [s_ok]
        assert report.removed_no_poi == 1

    def test_order_rate_threshold(self):
        # 25 orders/day over 30 days: 750 / (24*30) = 25/24 >= 1 -> retained
        s = _raw([2] + [0] * 15, [0.1] * 24, 750)
        kept, report = clean([s], days=30)
        assert kept == [s]
        # 23 orders/day -> below one per hour -> removed, and nothing survives
        s_low = _raw([2] + [0] * 15, [0.1] * 24, 23 * 30)
        with pytest.raises(EmptyDataset):
            clean([s_low], days=30)

    def test_all_empty_raises(self):
        with pytest.raises(EmptyDataset):
            clean([_raw([0] * 16, [0.0] * 24, 0)], days=1)

    def test_policy_threshold_configurable(self):
        s = _raw([1] + [0] * 15, [0.1] * 24, 100)
        kept, _ = clean([s], days=1, policy=CleanPolicy(min_orders_per_hour=4.0))
        assert kept == [s]


class TestNormalize:
    def _samples(self):
        return [
            _raw([8, 2] + [0] * 14, [1.0] * 24, 600, GeoPoint(110.0, 20.0)),
            _raw([3, 1] + [0] * 14, [0.25] * 24, 300, GeoPoint(110.01, 20.0)),
        ]

    def test_densest_sample_normalizes_to_one(self):
        ds = normalize(self._samples(), days=2)
        assert max(r.env.density_norm for r in ds.rows) == 1.0
        assert max(r.demand.total_norm for r in ds.rows) == 1.0

    def test_proportions_and_hourly_sum_to_one(self):
        ds = normalize(self._samples(), days=2)
        for r in ds.rows:
            assert r.env.proportions.sum() == pytest.approx(1.0, abs=1e-9)
            assert r.demand.hourly.sum() == pytest.approx(1.0, abs=1e-9)

    def test_zero_vht_sample_flagged(self):
        samples = self._samples() + [_raw([1] + [0] * 15, [0.0] * 24, 0,
                                          GeoPoint(110.02, 20.0))]
        ds = normalize(samples, days=2)
        flagged = [r for r in ds.rows if r.zero_vht]
        assert len(flagged) == 1
        assert flagged[0].demand.hourly.sum() == 0.0

    def test_scaling_counts_leaves_proportions_unchanged(self):
        base = _raw([7, 3, 11] + [1] * 13, [0.5] * 24, 600)
        scaled = _raw([21, 9, 33] + [3] * 13, [0.5] * 24, 600)
        ds = normalize([base, scaled], days=1)
        np.testing.assert_array_equal(ds.rows[0].env.proportions, ds.rows[1].env.proportions)

    def test_st82_reference_columns(self):
        p = np.array(ST82_PROPORTIONS) / 100.0
        assert abs(p.sum() - 1.0) < 5e-4  # table rounding
        q = np.array(ST82_HOURLY) / 100.0
        assert abs(q.sum() - 1.0) < 5e-4


class TestDenormalize:
    def test_reference_total(self):
        info = normalize([_raw([1] + [0] * 15, [ST490_TOTAL / 24] * 24, 100)], 1).norm_info
        assert denormalize_total(1.0, info) == pytest.approx(ST490_TOTAL)
        assert denormalize_total(0.0, info) == 0.0

    def test_round_trip(self):
        ds = normalize([_raw([1] + [0] * 15, [0.7] * 24, 50),
                        _raw([2] + [0] * 15, [1.4] * 24, 80)], 1)
        for r in ds.rows:
            back = denormalize_total(r.demand.total_norm, ds.norm_info)
            assert back == pytest.approx(r.raw.vht_total, abs=1e-9)


class TestEnvFromCounts:
    def test_matches_dataset_features(self):
        ds = normalize([_raw([8, 2] + [0] * 14, [1.0] * 24, 600)], 1)
        env = env_from_counts(np.array([8, 2] + [0] * 14), ds.norm_info)
        np.testing.assert_allclose(env.as_vector(), ds.rows[0].env.as_vector())

    def test_all_zero_rejected(self):
        ds = normalize([_raw([1] + [0] * 15, [1.0] * 24, 50)], 1)
        with pytest.raises(ValueError):
            env_from_counts(np.zeros(16, dtype=np.int64), ds.norm_info)

    def test_denser_than_training_allowed(self):
        ds = normalize([_raw([4] + [0] * 15, [1.0] * 24, 50)], 1)
        env = env_from_counts(np.array([8] + [0] * 15), ds.norm_info)
        assert env.density_norm == 2.0


class TestSerialization:
    def test_dataset_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        samples = []
        for i in range(20):
            counts = rng.integers(0, 40, 16)
            counts[0] += 1
            vht = rng.uniform(0, 3, 24)
            samples.append(_raw(counts, vht, int(rng.integers(50, 500)),
                                GeoPoint(110.0 + i * 0.002, 20.0)))
        ds = normalize(samples, days=2)
        path = tmp_path / "dataset.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.norm_info == ds.norm_info
        assert len(loaded) == len(ds)
        for a, b in zip(ds.rows, loaded.rows):
            assert a.sample_id == b.sample_id
            assert a.center == b.center
            assert a.env.density_norm == b.env.density_norm  # exact round-trip floats
            np.testing.assert_array_equal(a.env.proportions, b.env.proportions)
            assert a.demand.total_norm == b.demand.total_norm
            np.testing.assert_array_equal(a.demand.hourly, b.demand.hourly)
            np.testing.assert_array_equal(a.raw.poi_counts, b.raw.poi_counts)

    def test_save_is_deterministic(self, tmp_path):
        ds = normalize([_raw([5, 5] + [0] * 14, [0.3] * 24, 90)], 1)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_raw_samples_round_trip(self, tmp_path):
        spec = _spec()
        samples = [_raw([3] * 16, [0.2] * 24, 77)]
        save_raw_samples(samples, 2, spec, tmp_path / "raw.csv")
        loaded, days, spec2 = load_raw_samples(tmp_path / "raw.csv")
        assert days == 2
        assert spec2 == spec
        np.testing.assert_array_equal(loaded[0].poi_counts, samples[0].poi_counts)
        np.testing.assert_allclose(loaded[0].vht_by_hour, samples[0].vht_by_hour)
        assert loaded[0].order_count == 77


class TestRawSampleInvariants:
    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            RawSample(GeoPoint(110, 20), np.zeros(15, dtype=np.int64), np.zeros(24))
        with pytest.raises(ShapeError):
            RawSample(GeoPoint(110, 20), np.zeros(16, dtype=np.int64), np.zeros(23))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            RawSample(GeoPoint(110, 20), np.array([-1] + [0] * 15), np.zeros(24))

    def test_density_proxy_is_count_sum(self):
        s = _raw([2, 3] + [0] * 14, [0.1] * 24, 10)
        assert s.density_proxy == 5
        assert s.vht_total == pytest.approx(2.4)
