"""CLI dispatch: exit codes, dry-run idempotence, config and seed handling."""

import json
import os

import numpy as np
import pytest

from bicross.cli import main
from bicross.fileio import write_lum
from bicross.spike import read_spk

from conftest import tiny_train_config


def run(argv):
    return main(argv)


class TestDispatch:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert run([]) == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert run(["frobnicate"]) == 2

    def test_unknown_flag_rejected(self):
        assert run(["gradcheck", "--not-a-flag"]) == 2

    def test_help_exits_zero(self):
        assert run(["--help"]) == 0


class TestMakeDataset:
    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "data"
        code = run(["make-dataset", "--out", str(out), "--n-source", "1", "--n-target", "1",
                    "--height", "16", "--width", "16", "--t-lum", "4", "--dry-run"])
        assert code == 0
        assert not out.exists()
        assert "resolved config" in capsys.readouterr().out

    def test_writes_dataset(self, tmp_path):
        out = tmp_path / "data"
        code = run(["make-dataset", "--out", str(out), "--n-source", "1", "--n-target", "1",
                    "--height", "16", "--width", "16", "--t-lum", "4", "--theta", "0.02"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["samples"]) == 2


class TestEncode:
    def test_encode_lum_file(self, tmp_path):
        frames = np.random.default_rng(0).random((6, 8, 8)).astype(np.float32)
        lum_path = tmp_path / "in.lum"
        write_lum(frames, lum_path)
        out = tmp_path / "out.spk"
        code = run(["encode", "--input", str(lum_path), "--output", str(out),
                    "--theta", "0.05", "--interp", "2", "--freq", "32"])
        assert code == 0
        stream = read_spk(out)
        assert stream.shape == ((6 - 1) * 2 + 1, 8, 8)

    def test_missing_input_is_runtime_error(self, tmp_path):
        code = run(["encode", "--input", str(tmp_path / "nope.lum"),
                    "--output", str(tmp_path / "o.spk")])
        assert code == 1

    def test_dry_run_writes_nothing(self, tmp_path):
        out = tmp_path / "o.spk"
        code = run(["encode", "--input", str(tmp_path / "whatever.lum"),
                    "--output", str(out), "--dry-run"])
        assert code == 0
        assert not out.exists()


class TestTrain:
    def _config_file(self, tiny_dataset, tmp_path, **overrides):
        cfg = tiny_train_config(tiny_dataset, tmp_path / "run", **overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg.to_flat()))
        return path, cfg

    def test_modality_without_pretrain_ckpt_exits_one(self, tiny_dataset, tmp_path, capsys):
        cfg_path, cfg = self._config_file(tiny_dataset, tmp_path)
        code = run(["train", "--stage", "modality", "--config", str(cfg_path)])
        assert code == 1
        assert "pretrain.ckpt" in capsys.readouterr().err

    def test_pretrain_stage_runs(self, tiny_dataset, tmp_path):
        cfg_path, cfg = self._config_file(tiny_dataset, tmp_path, epochs_pretrain=1)
        code = run(["train", "--stage", "pretrain", "--config", str(cfg_path)])
        assert code == 0
        assert os.path.exists(os.path.join(cfg.out_dir, "pretrain.ckpt"))

    def test_dry_run_writes_nothing(self, tiny_dataset, tmp_path):
        cfg_path, cfg = self._config_file(tiny_dataset, tmp_path)
        code = run(["train", "--stage", "pretrain", "--config", str(cfg_path), "--dry-run"])
        assert code == 0
        assert not os.path.exists(cfg.out_dir)

    def test_env_seed_override(self, tiny_dataset, tmp_path, capsys, monkeypatch):
        cfg_path, _ = self._config_file(tiny_dataset, tmp_path)
        monkeypatch.setenv("BICROSS_SEED", "99")
        code = run(["train", "--stage", "pretrain", "--config", str(cfg_path), "--dry-run"])
        assert code == 0
        out = capsys.readouterr().out
        assert '"seed": 99' in out

    def test_bad_config_key_is_usage_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"bogus_key": 1}))
        assert run(["train", "--stage", "pretrain", "--config", str(path)]) == 2


class TestGradcheckCommand:
    def test_fresh_checkout_table_and_exit_zero(self, capsys):
        code = run(["gradcheck", "--all"])
        assert code == 0
        out = capsys.readouterr().out
        for name in ("sig_loss", "ckd_loss", "fkd_loss", "glfa_reversal"):
            assert name in out
        assert "FAIL" not in out


class TestReportCommand:
    def test_missing_run_dir_is_runtime_error(self, tmp_path):
        assert run(["report", "--run-dir", str(tmp_path / "none")]) == 1

    def test_report_renders(self, tmp_path):
        row = {"kind": "eval", "stage": "modality", "split": "target_test", "abs_rel": 0.3,
               "sq_rel": 1.0, "rmse": 2.0, "delta1": 0.5, "delta2": 0.8, "delta3": 0.9,
               "n_valid": 10}
        (tmp_path / "metrics.jsonl").write_text(json.dumps(row) + "\n")
        assert run(["report", "--run-dir", str(tmp_path)]) == 0
