import json

import pytest

from tacforce import cli
from tacforce.config import DEFAULTS, parse_config_text

TINY_MODEL_ARGS = [
    "--set", "model.input_size=112",
    "--set", "model.embed_dim=32",
    "--set", "model.depth=1",
    "--set", "model.heads=2",
    "--set", "model.decoder_depth=1",
]
TINY_SIM_ARGS = ["--set", "sim.n_frames=10", "--set", "sim.n_indenters=3"]


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def cli_world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_world")
    data_dir = root / "ds"
    out_dir = root / "run"
    assert run(["simgen", "--out", str(data_dir), "--seed", "5", *TINY_SIM_ARGS]) == 0
    assert run(["train", "--data", str(data_dir), "--out", str(out_dir),
                "--seed", "0", "--epochs", "2",
                "--set", "train.batch_size=4", *TINY_MODEL_ARGS]) == 0
    return {"root": root, "data": data_dir, "run": out_dir,
            "ckpt": out_dir / "checkpoint.tfck"}


class TestPrintConfig:
    def test_prints_all_defaults(self, capsys):
        assert run(["--print-config"]) == 0
        text = capsys.readouterr().out
        parsed = parse_config_text(text)
        assert set(parsed) == set(DEFAULTS)
        assert parsed["sim.n_frames"] == DEFAULTS["sim.n_frames"]


class TestSimgen:
    def test_layout_written(self, cli_world):
        manifest = json.loads((cli_world["data"] / "manifest.json").read_text())
        assert manifest["format_version"] == 1
        assert len(manifest["episodes"]) == 3
        ep = manifest["episodes"][0]
        meta = (cli_world["data"] / "pairs" / ep["id"] / "meta.jsonl").read_text()
        assert len(meta.strip().splitlines()) == ep["n_frames"]

    def test_rerun_same_seed_identical(self, tmp_path):
        args = ["--seed", "3", "--set", "sim.n_frames=4", "--set", "sim.n_indenters=2"]
        assert run(["simgen", "--out", str(tmp_path / "a"), *args]) == 0
        assert run(["simgen", "--out", str(tmp_path / "b"), *args]) == 0
        ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert ma["checksums"] == mb["checksums"]

    def test_bad_config_key_exits_3(self, tmp_path, capsys):
        code = run(["simgen", "--out", str(tmp_path / "x"),
                    "--set", "sim.bogus_knob=1"])
        assert code == 3
        assert "sim.bogus_knob" in capsys.readouterr().err

    def test_bad_config_file_exits_3(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sim.n_frames = not_a_number_for_int\n")
        assert run(["simgen", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 3

    def test_unwritable_out_exits_2(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run(["simgen", "--out", str(blocker / "sub"), *TINY_SIM_ARGS]) == 2


class TestTrain:
    def test_outputs(self, cli_world):
        out = cli_world["run"]
        assert (out / "checkpoint.tfck").exists()
        assert (out / "loss_curves.png").stat().st_size > 0
        assert (out / "run_config.txt").exists()
        lines = (out / "loss.csv").read_text().strip().splitlines()
        assert lines[0] == "step,recon,kl,eq,total"
        assert len(lines) > 1

    def test_lambda_eq_zero_logged_not_weighted(self, cli_world, tmp_path):
        out = tmp_path / "ablation"
        assert run(["train", "--data", str(cli_world["data"]), "--out", str(out),
                    "--seed", "0", "--epochs", "1", "--lambda-eq", "0",
                    "--set", "train.batch_size=4", *TINY_MODEL_ARGS]) == 0
        rows = [line.split(",") for line in
                (out / "loss.csv").read_text().strip().splitlines()[1:]]
        for _, recon, kl, eq, total in rows:
            assert float(eq) > 0.0
            assert float(total) == pytest.approx(
                float(recon) + 1e-3 * float(kl), rel=1e-5)

    def test_lock_file_blocks_second_run(self, cli_world, tmp_path):
        out = tmp_path / "locked"
        out.mkdir()
        (out / ".train.lock").write_text("999")
        code = run(["train", "--data", str(cli_world["data"]), "--out", str(out),
                    "--epochs", "1", *TINY_MODEL_ARGS])
        assert code == 2
        assert not (out / "checkpoint.tfck").exists()

    def test_deterministic_loss_csv(self, cli_world, tmp_path):
        csvs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(["train", "--data", str(cli_world["data"]), "--out", str(out),
                        "--seed", "7", "--epochs", "1",
                        "--set", "train.batch_size=4", *TINY_MODEL_ARGS]) == 0
            csvs.append((out / "loss.csv").read_bytes())
        assert csvs[0] == csvs[1]


class TestReconstruct:
    def test_grid_written(self, cli_world, tmp_path):
        out = tmp_path / "grid.png"
        assert run(["reconstruct", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]), "--out", str(out)]) == 0
        from PIL import Image

        with Image.open(out) as im:
            assert im.size == (4 * 112, 2 * 112)

    def test_bad_checkpoint_exits_5(self, cli_world, tmp_path):
        junk = tmp_path / "junk.tfck"
        junk.write_bytes(b"JUNKJUNKJUNK")
        assert run(["reconstruct", "--ckpt", str(junk),
                    "--data", str(cli_world["data"]),
                    "--out", str(tmp_path / "g.png")]) == 5

    def test_unknown_episode_exits_5(self, cli_world, tmp_path):
        assert run(["reconstruct", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]), "--episode", "nope",
                    "--out", str(tmp_path / "g.png")]) == 5

    def test_missing_dataset_exits_2(self, cli_world, tmp_path):
        assert run(["reconstruct", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(tmp_path / "missing"),
                    "--out", str(tmp_path / "g.png")]) == 2


class TestAnalyze:
    def test_outputs(self, cli_world, tmp_path, capsys):
        out = tmp_path / "analysis"
        assert run(["analyze", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]), "--out", str(out)]) == 0
        lines = (out / "correlation.csv").read_text().strip().splitlines()
        assert lines[0] == "latent,r_fx,r_fy,r_fz,sd_fx,sd_fy,sd_fz"
        assert len(lines) == 7  # header + 6 latent dimensions
        cells = [line.split(",")[1:] for line in lines[1:]]
        assert sum(len(row) for row in cells) == 36  # 18 r values + 18 SDs
        summary = json.loads((out / "correlation_summary.json").read_text())
        assert summary["n"] == sum(summary["counts"].values())
        assert (out / "correlation_heatmap.png").stat().st_size > 0


class TestEvalZs:
    def test_report_schema(self, cli_world, tmp_path):
        report_path = tmp_path / "report.json"
        head_path = tmp_path / "head.tfck"
        assert run(["evalzs", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]),
                    "--source", "L", "--target", "R",
                    "--head", str(head_path), "--out", str(report_path),
                    "--set", "head.window=3", "--set", "head.epochs=2",
                    "--set", "head.channels=8"]) == 0
        report = json.loads(report_path.read_text())
        assert set(report["r2"]) == {"fx", "fy", "fz"}
        assert set(report["mae"]) == {"fx", "fy", "fz"}
        assert len(report["pearson"]) == 6
        assert report["self_eval"] is False
        assert report["format_version"] == 1
        assert head_path.exists()
        assert report_path.with_suffix(".png").stat().st_size > 0

    def test_head_reuse_and_self_eval(self, cli_world, tmp_path):
        head_path = tmp_path / "head.tfck"
        report_path = tmp_path / "self.json"
        assert run(["evalzs", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]),
                    "--source", "L", "--target", "L",
                    "--head", str(head_path), "--out", str(report_path),
                    "--set", "head.window=3", "--set", "head.epochs=1",
                    "--set", "head.channels=8"]) == 0
        report = json.loads(report_path.read_text())
        assert report["self_eval"] is True
        # reuse the saved head: must not retrain (exit fast, same source id)
        report2_path = tmp_path / "cross.json"
        assert run(["evalzs", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]),
                    "--source", "L", "--target", "R",
                    "--head", str(head_path), "--out", str(report2_path),
                    "--set", "head.window=3"]) == 0
        report2 = json.loads(report2_path.read_text())
        assert report2["source"] == report["source"]

    def test_unknown_sensor_exits_3(self, cli_world, tmp_path):
        assert run(["evalzs", "--ckpt", str(cli_world["ckpt"]),
                    "--data", str(cli_world["data"]),
                    "--source", "bogus_sensor", "--target", "R",
                    "--out", str(tmp_path / "r.json")]) == 3
