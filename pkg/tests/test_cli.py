"""Operator-facing CLI: subcommands, exit codes, reproducibility."""

import numpy as np
import pytest

from faststyle import Tensor4, save_model_dir, write_image
from faststyle.cli import EXIT_ENGINE, EXIT_FILE, EXIT_MODEL, EXIT_OK, main
from builders import identity_autoencoder, random_images, synthetic_googlenet, toy_autoencoder


@pytest.fixture
def workspace(rng, tmp_path):
    """A model with dead channels, calibration images, and an autoencoder."""
    g, injected = synthetic_googlenet(rng)
    model = tmp_path / "model"
    save_model_dir(g, model)
    calib = tmp_path / "calib"
    calib.mkdir()
    for i, img in enumerate(random_images(rng, 4)):
        write_image(img, calib / f"c{i}.ppm")

    enc, dec, taps, _ = toy_autoencoder(rng)
    enc_dir, dec_dir = tmp_path / "enc", tmp_path / "dec"
    save_model_dir(enc, enc_dir)
    save_model_dir(dec, dec_dir)
    content, style = random_images(rng, 2)
    write_image(content, tmp_path / "content.ppm")
    write_image(style, tmp_path / "style.ppm")
    return tmp_path


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["explode"])
        assert exc.value.code == 2

    def test_unknown_flag_is_usage_error(self, workspace):
        with pytest.raises(SystemExit) as exc:
            main(["inspect", str(workspace / "model"), "--calib",
                  str(workspace / "calib"), "--loud"])
        assert exc.value.code == 2

    def test_missing_model_is_file_error(self, workspace, capsys):
        code = main(["inspect", str(workspace / "nope"), "--calib", str(workspace / "calib")])
        assert code == EXIT_FILE
        assert "faststyle: error:" in capsys.readouterr().err

    def test_corrupt_model_is_model_error(self, workspace, capsys):
        bad = workspace / "bad"
        bad.mkdir()
        (bad / "model.json").write_text("{}")
        (bad / "weights.bin").write_bytes(b"")
        code = main(["inspect", str(bad), "--calib", str(workspace / "calib")])
        assert code == EXIT_MODEL

    def test_empty_calib_dir_is_file_error(self, workspace):
        empty = workspace / "empty"
        empty.mkdir()
        code = main(["inspect", str(workspace / "model"), "--calib", str(empty)])
        assert code == EXIT_FILE

    def test_engine_error_on_mismatched_metric_sizes(self, workspace, rng, capsys):
        small = Tensor4(rng.random((1, 3, 16, 16), dtype=np.float32))
        write_image(small, workspace / "small.ppm")
        code = main(["metrics", "--a", str(workspace / "content.ppm"),
                     "--b", str(workspace / "small.ppm")])
        assert code == EXIT_ENGINE


class TestInspectAndPrune:
    def test_inspect_reports_zero_channels(self, workspace, capsys):
        code = main(["inspect", str(workspace / "model"), "--calib", str(workspace / "calib")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "zero channels" in out
        assert "params" in out

    def test_prune_then_inspect_shows_none_left(self, workspace, capsys):
        pruned_dir = workspace / "pruned"
        code = main(["prune", str(workspace / "model"), "--calib", str(workspace / "calib"),
                     "-o", str(pruned_dir)])
        assert code == EXIT_OK
        assert (pruned_dir / "model.json").exists()
        assert (pruned_dir / "prune_report.txt").exists()
        capsys.readouterr()
        code = main(["inspect", str(pruned_dir), "--calib", str(workspace / "calib")])
        assert code == EXIT_OK
        assert "zero channels: 0 of" in capsys.readouterr().out

    def test_prune_verify_passes_at_tau_zero(self, workspace, capsys):
        code = main(["prune", str(workspace / "model"), "--calib", str(workspace / "calib"),
                     "-o", str(workspace / "pv"), "--verify"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "max deviation" in out

    def test_prune_runs_are_byte_identical(self, workspace, capsys):
        for name in ("p1", "p2"):
            assert main(["prune", str(workspace / "model"), "--calib",
                         str(workspace / "calib"), "-o", str(workspace / name)]) == EXIT_OK
        for fname in ("model.json", "weights.bin", "prune_report.txt"):
            a = (workspace / "p1" / fname).read_bytes()
            b = (workspace / "p2" / fname).read_bytes()
            assert a == b, fname


class TestStylizeAndMetrics:
    def test_stylize_writes_image(self, workspace, capsys):
        out = workspace / "out.ppm"
        code = main(["stylize", "--content", str(workspace / "content.ppm"),
                     "--style", str(workspace / "style.ppm"),
                     "--encoder", str(workspace / "enc"), "--decoder", str(workspace / "dec"),
                     "-o", str(out), "--transform", "s2"])
        assert code == EXIT_OK
        assert out.exists()

    def test_stylize_adain_identity_matches_style_stats(self, rng, tmp_path, capsys):
        from faststyle import read_image

        enc, dec, taps = identity_autoencoder()
        save_model_dir(enc, tmp_path / "enc")
        save_model_dir(dec, tmp_path / "dec")
        content, style = random_images(rng, 2, (1, 3, 16, 16))
        write_image(content, tmp_path / "c.ppm")
        write_image(style, tmp_path / "s.ppm")
        out = tmp_path / "o.ppm"
        code = main(["stylize", "--content", str(tmp_path / "c.ppm"),
                     "--style", str(tmp_path / "s.ppm"),
                     "--encoder", str(tmp_path / "enc"), "--decoder", str(tmp_path / "dec"),
                     "-o", str(out), "--transform", "adain"])
        assert code == EXIT_OK
        got = read_image(out).data[0].reshape(3, -1)
        want = read_image(tmp_path / "s.ppm").data[0].reshape(3, -1)
        # quantized twice, so compare channel stats at 2/255 resolution
        assert np.max(np.abs(got.mean(axis=1) - want.mean(axis=1))) <= 2.0 / 255
        assert np.max(np.abs(got.std(axis=1) - want.std(axis=1))) <= 2.0 / 255

    def test_metrics_identity(self, workspace, capsys):
        code = main(["metrics", "--a", str(workspace / "content.ppm"),
                     "--b", str(workspace / "content.ppm")])
        assert code == EXIT_OK
        assert "edge-ssim (sobel): 1.0000" in capsys.readouterr().out

    def test_metrics_with_features(self, workspace, capsys):
        code = main(["metrics", "--a", str(workspace / "content.ppm"),
                     "--b", str(workspace / "style.ppm"),
                     "--features", str(workspace / "model")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "gram-distance" in out


class TestBench:
    def test_bench_prints_result(self, workspace, capsys):
        code = main(["bench", str(workspace / "model"), "--size", "32x32", "--iters", "1"])
        assert code == EXIT_OK
        assert "median" in capsys.readouterr().out

    def test_bad_size_is_usage_error(self, workspace, capsys):
        code = main(["bench", str(workspace / "model"), "--size", "banana", "--iters", "1"])
        assert code == 2

    def test_memory_error_reported_cleanly(self, workspace, capsys, monkeypatch):
        import faststyle.cli as cli

        def boom(*a, **k):
            raise MemoryError

        monkeypatch.setattr(cli, "benchmark", boom)
        code = main(["bench", str(workspace / "model"), "--size", "32x32", "--iters", "1"])
        assert code == 6
        assert "memory" in capsys.readouterr().err
