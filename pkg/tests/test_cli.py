"""Command-line interface and exit-code contract tests.

Exit codes under test: 0 success, 2 configuration problem, 3 numerical
failure inside a stage, 4 tolerance check failure on a completed run.
"""

import pytest

from spherescope.cli import main


def write_config(tmp_path, text: str) -> str:
    path = tmp_path / "scenario.ini"
    path.write_text(text)
    return str(path)


class TestSingleStage:
    def test_optics_stage_succeeds(self, tmp_path, capsys):
        code = main(["optics", "--out", str(tmp_path / "out"), "--format", "csv"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "virtual_image_depth_um" in stdout
        assert (tmp_path / "out" / "report.csv").is_file()
        assert (tmp_path / "out" / "magnification_curve.csv").is_file()

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[scan]\npixell = 30\n")
        code = main(["optics", "--config", cfg, "--out", str(tmp_path / "out")])
        assert code == 2
        assert "did you mean" in capsys.readouterr().err

    def test_stage_numerics_exit_3(self, tmp_path, capsys):
        # A 300 nm pixel undersamples every configured point-spread
        # width; the scan stage raises and the CLI maps it to 3.
        cfg = write_config(tmp_path, "[scan]\npixel = 300\n")
        code = main(["scan", "--config", cfg, "--out", str(tmp_path / "out"),
                     "--format", "csv"])
        assert code == 3
        assert "SamplingError" in capsys.readouterr().err

    def test_nanojet_with_solver_disabled_exits_2(self, tmp_path, capsys):
        code = main(["nanojet", "--no-fdtd", "--out", str(tmp_path / "out")])
        assert code == 2
        assert "nothing to do" in capsys.readouterr().err

    def test_locked_output_exits_2(self, tmp_path, capsys):
        out = tmp_path / "out"
        out.mkdir()
        (out / "run.lock").write_text("1\n")
        code = main(["optics", "--out", str(out), "--format", "csv"])
        assert code == 2
        assert "another run" in capsys.readouterr().err

    def test_seed_must_be_u64(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["optics", "--seed", "-1"])
        assert exc.value.code == 2
        assert "unsigned 64-bit" in capsys.readouterr().err


class TestPipelineCommand:
    def test_full_fast_pipeline_passes(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["pipeline", "--no-fdtd", "--out", str(out), "--format", "csv"])
        stdout = capsys.readouterr().out
        assert code == 0
        assert "check snr_ratio" in stdout
        assert (out / "report.txt").read_text().rstrip().endswith("RESULT: PASS")

    def test_tolerance_failure_exits_4(self, tmp_path, capsys):
        # delta1 = 60 MHz is a valid scenario, fits cleanly, and lands
        # outside the calibrated window, so the run completes but fails.
        cfg = write_config(tmp_path, "[odmr]\ndelta1 = 60\n")
        out = tmp_path / "out"
        code = main(["pipeline", "--no-fdtd", "--config", cfg,
                     "--out", str(out), "--format", "csv"])
        assert code == 4
        assert "check odmr_delta1_mhz" in capsys.readouterr().out
        assert (out / "report.txt").read_text().rstrip().endswith("RESULT: FAIL")

    def test_stage_failure_exits_3(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[odmr]\nfield = 30\n")
        code = main(["pipeline", "--no-fdtd", "--config", cfg,
                     "--out", str(tmp_path / "out"), "--format", "csv"])
        assert code == 3
        assert "stage 'odmr' failed" in capsys.readouterr().err

    def test_seed_override_changes_scan_outputs(self, tmp_path):
        out_a, out_b, out_c = (tmp_path / n for n in ("a", "b", "c"))
        for out, seed in ((out_a, "7"), (out_b, "7"), (out_c, "8")):
            assert main(["scan", "--seed", seed, "--out", str(out),
                         "--format", "csv"]) == 0
        scan_a = (out_a / "scan_conventional.csv").read_bytes()
        assert scan_a == (out_b / "scan_conventional.csv").read_bytes()
        assert scan_a != (out_c / "scan_conventional.csv").read_bytes()
