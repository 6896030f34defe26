import os
import shutil
import subprocess

import pytest

from neuralmesh import load_checkpoint, read_metrics_csv
from neuralmesh.cli import run_command


@pytest.fixture
def data_args(synthetic_idx_dir):
    return [
        "--train-images", str(synthetic_idx_dir / "train-images-idx3-ubyte"),
        "--train-labels", str(synthetic_idx_dir / "train-labels-idx1-ubyte"),
        "--test-images", str(synthetic_idx_dir / "test-images-idx3-ubyte"),
        "--test-labels", str(synthetic_idx_dir / "test-labels-idx1-ubyte"),
        "--train-limit", "120",
        "--test-limit", "60",
    ]


def small_train_args(tmp_path, data_args, model="mesh", **extra):
    args = [
        "train",
        "--model", model,
        "--height", "2",
        "--width", "3",
        "--window", "2",
        "--batch-size", "60",
        "--lr", "0.01",
        "--epochs", "2",
        "--seed", "1",
        "--csv", str(tmp_path / "metrics.csv"),
        "--checkpoint", str(tmp_path / "model.ckpt"),
    ] + data_args
    for k, v in extra.items():
        args += [k, v]
    return args


class TestUsageErrors:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert run_command(["frobnicate"]) == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_no_subcommand_is_usage_error(self, capsys):
        assert run_command([]) == 2

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run_command(["train", "--warp-speed", "9"]) == 2

    def test_missing_file_is_runtime_error(self, capsys, tmp_path):
        rc = run_command(
            [
                "eval",
                "--checkpoint", str(tmp_path / "nope.ckpt"),
                "--images", str(tmp_path / "img"),
                "--labels", str(tmp_path / "lab"),
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_train_without_data_is_runtime_error(self, capsys):
        rc = run_command(["train", "--window", "1"])
        assert rc == 1
        assert "train split" in capsys.readouterr().err


class TestTrainAndEval:
    def test_mesh_train_outputs(self, capsys, tmp_path, data_args):
        rc = run_command(small_train_args(tmp_path, data_args))
        assert rc == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if l.startswith("mesh")]
        assert len(lines) == 2
        assert "epoch=0" in lines[0] and "epoch=1" in lines[1]
        assert (tmp_path / "model.ckpt").exists()
        rows = read_metrics_csv(tmp_path / "metrics.csv")
        assert [r.epoch for r in rows] == [0, 1]

    def test_eval_round_trip(self, capsys, tmp_path, data_args, synthetic_idx_dir):
        run_command(small_train_args(tmp_path, data_args))
        rows = read_metrics_csv(tmp_path / "metrics.csv")
        capsys.readouterr()
        rc = run_command(
            [
                "eval",
                "--checkpoint", str(tmp_path / "model.ckpt"),
                "--images", str(synthetic_idx_dir / "test-images-idx3-ubyte"),
                "--labels", str(synthetic_idx_dir / "test-labels-idx1-ubyte"),
                "--limit", "60",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("test_accuracy ")
        reported = float(out.split()[1])
        assert reported == pytest.approx(rows[-1].test_accuracy, abs=1e-6)

    def test_ff_train_and_eval(self, capsys, tmp_path, data_args, synthetic_idx_dir):
        rc = run_command(small_train_args(tmp_path, data_args, model="ff"))
        assert rc == 0
        assert load_checkpoint(tmp_path / "model.ckpt").kind == "ff"
        rc = run_command(
            [
                "eval",
                "--checkpoint", str(tmp_path / "model.ckpt"),
                "--images", str(synthetic_idx_dir / "test-images-idx3-ubyte"),
                "--labels", str(synthetic_idx_dir / "test-labels-idx1-ubyte"),
            ]
        )
        assert rc == 0

    def test_config_file_with_cli_override(self, capsys, tmp_path, data_args):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("height = 2\nwidth = 3\nwindow_size = 2\nepochs = 2\nbatch_size = 60\n")
        rc = run_command(
            ["train", "--config", str(cfg), "--epochs", "1", "--seed", "0"]
            + data_args
        )
        assert rc == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if l.startswith("mesh")]
        assert len(lines) == 1  # CLI --epochs beat the file's 2
        assert "2x3" in lines[0]  # file geometry survived

    def test_bad_config_file_reports_line(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nonsense = 1\n")
        rc = run_command(["train", "--config", str(cfg)])
        assert rc == 1
        assert ":1" in capsys.readouterr().err


class TestSweep:
    def test_grid_row_count(self, capsys, tmp_path, data_args):
        rc = run_command(
            [
                "sweep",
                "--models", "mesh,ff",
                "--neurons", "4,6",
                "--windows", "1,2",
                "--seeds", "0",
                "--epochs", "1",
                "--batch-size", "60",
                "--csv", str(tmp_path / "sweep.csv"),
            ]
            + data_args
        )
        assert rc == 0
        rows = read_metrics_csv(tmp_path / "sweep.csv")
        assert len(rows) == 8
        out = capsys.readouterr().out
        assert len([l for l in out.splitlines() if " epoch=" in l]) == 8


class TestVisualize:
    def test_default_layout(self, capsys, tmp_path):
        out_dir = tmp_path / "frames"
        rc = run_command(
            [
                "visualize",
                "--height", "3",
                "--width", "3",
                "--window", "4",
                "--input-dim", "9",
                "--seed", "0",
                "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        assert "wrote 4 frames" in capsys.readouterr().out
        files = sorted(os.listdir(out_dir / "sigmoid" / "digit_000"))
        assert files == [f"step_{t:03d}.ppm" for t in range(4)]

    def test_both_modes_and_digit_count(self, capsys, tmp_path):
        out_dir = tmp_path / "frames"
        rc = run_command(
            [
                "visualize",
                "--height", "2",
                "--width", "2",
                "--window", "3",
                "--input-dim", "4",
                "--digits", "2",
                "--mode", "both",
                "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        assert "wrote 12 frames" in capsys.readouterr().out
        for mode in ("sigmoid", "clip"):
            for digit in ("digit_000", "digit_001"):
                assert len(os.listdir(out_dir / mode / digit)) == 3

    def test_scale_changes_ppm_dimensions(self, capsys, tmp_path):
        out_dir = tmp_path / "frames"
        run_command(
            [
                "visualize",
                "--height", "2",
                "--width", "2",
                "--window", "1",
                "--input-dim", "4",
                "--scale", "5",
                "--out-dir", str(out_dir),
            ]
        )
        frame = out_dir / "sigmoid" / "digit_000" / "step_000.ppm"
        assert frame.read_bytes().startswith(b"P6\n10 10\n255\n")

    def test_from_checkpoint(self, capsys, tmp_path, data_args):
        run_command(small_train_args(tmp_path, data_args))
        capsys.readouterr()
        out_dir = tmp_path / "frames"
        rc = run_command(
            [
                "visualize",
                "--checkpoint", str(tmp_path / "model.ckpt"),
                "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        assert "wrote 2 frames" in capsys.readouterr().out  # window from checkpoint
        frame = out_dir / "sigmoid" / "digit_000" / "step_000.ppm"
        assert frame.read_bytes().startswith(b"P6\n3 2\n255\n")

    def test_window_override_on_checkpoint(self, capsys, tmp_path, data_args):
        run_command(small_train_args(tmp_path, data_args))
        capsys.readouterr()
        rc = run_command(
            [
                "visualize",
                "--checkpoint", str(tmp_path / "model.ckpt"),
                "--window", "5",
                "--out-dir", str(tmp_path / "frames"),
            ]
        )
        assert rc == 0
        assert "wrote 5 frames" in capsys.readouterr().out

    def test_ff_checkpoint_rejected(self, capsys, tmp_path, data_args):
        run_command(small_train_args(tmp_path, data_args, model="ff"))
        capsys.readouterr()
        rc = run_command(
            [
                "visualize",
                "--checkpoint", str(tmp_path / "model.ckpt"),
                "--out-dir", str(tmp_path / "frames"),
            ]
        )
        assert rc == 1
        assert "mesh checkpoint" in capsys.readouterr().err

    def test_inputs_from_dataset(self, capsys, tmp_path, synthetic_idx_dir):
        out_dir = tmp_path / "frames"
        rc = run_command(
            [
                "visualize",
                "--height", "4",
                "--width", "4",
                "--window", "2",
                "--input-dim", "784",
                "--images", str(synthetic_idx_dir / "test-images-idx3-ubyte"),
                "--labels", str(synthetic_idx_dir / "test-labels-idx1-ubyte"),
                "--out-dir", str(out_dir),
            ]
        )
        assert rc == 0
        assert "wrote 2 frames" in capsys.readouterr().out

    def test_images_without_labels_rejected(self, capsys, tmp_path, synthetic_idx_dir):
        rc = run_command(
            [
                "visualize",
                "--height", "2",
                "--width", "2",
                "--window", "1",
                "--images", str(synthetic_idx_dir / "test-images-idx3-ubyte"),
                "--out-dir", str(tmp_path / "frames"),
            ]
        )
        assert rc == 1
        assert "--labels" in capsys.readouterr().err

    def test_determinism_of_generated_inputs(self, capsys, tmp_path):
        args = [
            "visualize",
            "--height", "3",
            "--width", "3",
            "--window", "2",
            "--input-dim", "9",
            "--seed", "4",
        ]
        run_command(args + ["--out-dir", str(tmp_path / "a")])
        run_command(args + ["--out-dir", str(tmp_path / "b")])
        pa = tmp_path / "a" / "sigmoid" / "digit_000" / "step_001.ppm"
        pb = tmp_path / "b" / "sigmoid" / "digit_000" / "step_001.ppm"
        assert pa.read_bytes() == pb.read_bytes()


class TestChecks:
    def test_ff_equiv_passes(self, capsys):
        rc = run_command(["ff-equiv", "--input-dim", "20", "--samples", "10"])
        assert rc == 0
        assert "max deviation" in capsys.readouterr().out

    def test_grad_check_passes(self, capsys):
        rc = run_command(
            ["grad-check", "--height", "3", "--width", "3", "--input-dim", "6"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "max relative error" in out and "checked" in out

    def test_grad_check_with_options(self, capsys):
        rc = run_command(
            [
                "grad-check",
                "--height", "2",
                "--width", "2",
                "--input-dim", "4",
                "--relu-state",
                "--input-bias",
                "--clip-state",
                "--residual-input",
            ]
        )
        assert rc == 0


class TestInstalledScript:
    def test_console_entry_point(self):
        exe = shutil.which("neuralmesh")
        if exe is None:
            pytest.skip("neuralmesh script not on PATH")
        proc = subprocess.run(
            [exe, "ff-equiv", "--input-dim", "12", "--samples", "5"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "max deviation" in proc.stdout
