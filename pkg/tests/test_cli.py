import json

import pytest

from urbanflux.cli import main

TINY_BBOX = "110.0,20.0,110.02,20.01"


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    cfg = {
        "seed": 1,
        "synth": {"bbox": [110.0, 20.0, 110.02, 20.01], "n_poi": 600, "n_days": 2,
                  "gain": 2.6, "noise": 0.02, "buffer_radius_m": 90.0},
        "clean": {"min_orders_per_hour": 0.5},
        "train_t": {"hidden_widths": [8, 8], "epochs": 15, "learning_rate": 0.5},
        "train_d": {"hidden_widths": [8, 8], "epochs": 15, "learning_rate": 0.5},
        "optimize": {"delta_bound": 5, "ga": {"population": 8, "generations": 3}},
        "render": {"cell_px": 2},
    }
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestUsageErrors:
    def test_unknown_flag_exits_1(self, capsys):
        code, _, err = run_cli(capsys, "synth", "--no-such-flag")
        assert code == 1
        assert "usage" in err.lower() or "UsageError" in err

    def test_unknown_command_exits_1(self, capsys):
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 1

    def test_missing_config_field_named(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"synth": {"bbox": [1, 2, 3, 4]}}))
        code, _, err = run_cli(capsys, "run", "--config", str(bad), "--out", str(tmp_path))
        assert code == 1
        assert "train_t" in err

    def test_error_is_single_line_json(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "clean", "--raw", str(tmp_path / "missing.csv"),
                               "--out", str(tmp_path))
        assert code == 2
        doc = json.loads(err.strip().splitlines()[0])
        assert doc["error"] == "FileNotFoundError"


class TestDataErrors:
    def test_bad_poi_file_exits_2(self, capsys, tmp_path):
        poi = tmp_path / "poi.csv"
        poi.write_text("lon,lat,category\n110.0,20.0,99\n")
        orders = tmp_path / "orders.csv"
        orders.write_text("pickup_lon,pickup_lat,pickup_ts,dropoff_ts\n110.0,20.0,0,60\n")
        code, _, err = run_cli(capsys, "sample", "--poi", str(poi), "--orders", str(orders),
                               "--bbox", TINY_BBOX, "--days", "1",
                               "--out", str(tmp_path / "out"))
        assert code == 2
        assert json.loads(err.strip().splitlines()[0])["error"] == "RangeError"


class TestStageFlow:
    def test_synth_sample_clean_train_predict_round_trip(self, capsys, tmp_path):
        out = tmp_path / "work"
        code, _, _ = run_cli(capsys, "synth", "--out", str(out), "--bbox", TINY_BBOX,
                             "--n-poi", "600", "--days", "2", "--seed", "3")
        assert code == 0
        code, _, _ = run_cli(capsys, "sample", "--poi", str(out / "poi.csv"),
                             "--orders", str(out / "orders.csv"), "--bbox", TINY_BBOX,
                             "--radius", "90", "--days", "2", "--out", str(out))
        assert code == 0
        code, _, _ = run_cli(capsys, "clean", "--raw", str(out / "raw_samples.csv"),
                             "--min-orders-per-hour", "0.5", "--out", str(out))
        assert code == 0

        code, out_text, _ = run_cli(
            capsys, "train", "--dataset", str(out / "dataset.csv"), "--kind", "D",
            "--hidden", "2x8", "--epochs", "10", "--lr", "0.5",
            "--out-model", str(out / "model_d.json"))
        assert code == 0
        assert "test_median" in out_text
        code, _, _ = run_cli(
            capsys, "train", "--dataset", str(out / "dataset.csv"), "--kind", "T",
            "--hidden", "2x8", "--epochs", "10", "--lr", "0.5",
            "--out-model", str(out / "model_t.json"))
        assert code == 0

        counts = ",".join(["3"] * 16)
        code, out_text, _ = run_cli(capsys, "predict", "--model-t", str(out / "model_t.json"),
                                    "--model-d", str(out / "model_d.json"),
                                    "--counts", counts)
        assert code == 0
        doc = json.loads(out_text.strip().splitlines()[-1])
        assert len(doc["hourly_vht"]) == 24
        assert doc["total_vht"] > 0

    def test_cv_subcommand(self, capsys, tmp_path):
        out = tmp_path / "work"
        run_cli(capsys, "synth", "--out", str(out), "--bbox", TINY_BBOX,
                "--n-poi", "600", "--days", "2")
        run_cli(capsys, "sample", "--poi", str(out / "poi.csv"),
                "--orders", str(out / "orders.csv"), "--bbox", TINY_BBOX,
                "--radius", "90", "--days", "2", "--out", str(out))
        run_cli(capsys, "clean", "--raw", str(out / "raw_samples.csv"),
                "--min-orders-per-hour", "0.5", "--out", str(out))
        code, out_text, _ = run_cli(
            capsys, "cv", "--dataset", str(out / "dataset.csv"), "--kind", "T",
            "--k", "3", "--specs", "1x6;2x6", "--epochs", "10",
            "--out", str(out / "cv.json"))
        assert code == 0
        results = json.loads((out / "cv.json").read_text())["results"]
        assert {r["model"] for r in results} == {"mlp-1x6", "mlp-2x6"}


class TestPipeline:
    def test_run_completes_and_skips_on_rerun(self, capsys, tiny_config, tmp_path):
        out = tmp_path / "run1"
        code, out_text, _ = run_cli(capsys, "run", "--config", str(tiny_config),
                                    "--out", str(out))
        assert code == 0
        lines = [json.loads(l) for l in out_text.strip().splitlines()]
        stages = [l["stage"] for l in lines if "stage" in l]
        assert stages[:4] == ["synth", "sample", "clean", "train"]
        assert not any(l.get("skipped") for l in lines if "stage" in l)
        for name in ("dataset.csv", "model_t.json", "model_d.json",
                     "train_report.json", "predict_demo.json", "optimize_result.json"):
            assert (out / name).exists()
        assert (out / "render" / "density.png").exists()
        assert (out / "render" / "curves.svg").exists()

        # rerun without --force: every stage skips
        code, out_text, _ = run_cli(capsys, "run", "--config", str(tiny_config),
                                    "--out", str(out))
        assert code == 0
        lines = [json.loads(l) for l in out_text.strip().splitlines()]
        assert all(l.get("skipped") for l in lines if "stage" in l)

    def test_artifacts_embed_config_hash_and_seed(self, capsys, tiny_config, tmp_path):
        out = tmp_path / "run2"
        run_cli(capsys, "run", "--config", str(tiny_config), "--out", str(out))
        report = json.loads((out / "train_report.json").read_text())
        assert "config_hash" in report and "seed" in report
        model = json.loads((out / "model_t.json").read_text())
        assert model["meta"]["config_hash"] == report["config_hash"]
        sidecar = json.loads((out / "dataset.norm.json").read_text())
        assert sidecar["config_hash"] == report["config_hash"]
