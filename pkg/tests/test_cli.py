import subprocess
import sys

import numpy as np

from dualcoop.chain import bundled_config_text
from dualcoop.cli import main
from dualcoop.sim import read_csv


def run(*argv):
    return main([str(a) for a in argv])


class TestPointExample:
    def test_sweep_writes_one_trace_per_gain(self, tmp_path, capsys):
        assert run("point-example", "--K", 0, 1, 4, 8, "--duration", 1, "--out", tmp_path) == 0
        for label in ("0", "1", "4", "8"):
            header, data = read_csv(tmp_path / f"point_K{label}.csv")
            assert header[:4] == ["step", "time", "p1", "p2"]
            assert data.shape[0] == 1001
        header, data = read_csv(tmp_path / "point_alpha.csv")
        assert header == ["step", "time", "alpha_K0", "alpha_K1", "alpha_K4", "alpha_K8"]
        np.testing.assert_allclose(data[:, 2], 0.5, atol=1e-12)

    def test_zero_duration(self, tmp_path):
        assert run("point-example", "--K", 2, "--duration", 0, "--out", tmp_path) == 0
        assert len((tmp_path / "point_K2.csv").read_text().splitlines()) == 2

    def test_negative_gain_is_usage_error(self, tmp_path, capsys):
        assert run("point-example", "--K", -1, "--out", tmp_path) == 2
        assert "K > 0" in capsys.readouterr().err

    def test_fractional_gain_label(self, tmp_path):
        assert run("point-example", "--K", 0.5, "--duration", 0.01, "--out", tmp_path) == 0
        assert (tmp_path / "point_K0p5.csv").exists()


class TestAlign:
    def test_summary_and_csv(self, tmp_path, capsys):
        code = run("align", "--method", "asym_relative", "--alpha", 0.8, "--task", "trans", "--duration", 0.5, "--out", tmp_path)
        assert code == 0
        out = capsys.readouterr().out
        assert "joint_path=" in out and "mean_asym=" in out and "final_pos_err=" in out
        header, data = read_csv(tmp_path / "align_asym_relative_translational.csv")
        assert len(header) == 56 and data.shape[0] == 101

    def test_alpha_out_of_range(self, tmp_path, capsys):
        assert run("align", "--alpha", 1.5, "--out", tmp_path) == 2
        assert "[0, 1]" in capsys.readouterr().err

    def test_alpha_ignored_for_cts_warns(self, tmp_path, capsys):
        assert run("align", "--method", "cts", "--alpha", 0.9, "--duration", 0.05, "--out", tmp_path) == 0
        captured = capsys.readouterr()
        assert "ignored for method cts" in captured.err
        assert "alpha=0.5" in captured.out

    def test_unknown_method(self, tmp_path):
        assert run("align", "--method", "bogus", "--out", tmp_path) == 2

    def test_missing_robot(self, tmp_path, capsys):
        assert run("align", "--robot", tmp_path / "nope.toml", "--out", tmp_path) == 2
        assert "not found" in capsys.readouterr().err

    def test_bad_robot(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[arm.left\n")
        assert run("align", "--robot", path, "--out", tmp_path) == 2
        assert "parse error" in capsys.readouterr().err

    def test_custom_robot_file(self, tmp_path):
        path = tmp_path / "robot.toml"
        path.write_text(bundled_config_text())
        assert run("align", "--robot", path, "--duration", 0.02, "--out", tmp_path) == 0

    def test_rank_abort_exit_code(self, tmp_path, capsys):
        code = run("align", "--method", "per_arm", "--rank-policy", "error_on_deficient", "--q0", *([0] * 14), "--out", tmp_path)
        assert code == 4
        assert "step 0" in capsys.readouterr().err

    def test_q0_length_checked(self, tmp_path):
        assert run("align", "--q0", 0, 0, "--out", tmp_path) == 2

    def test_io_error_exit_code(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run("align", "--duration", 0, "--out", blocker / "sub") == 3

    def test_env_default_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DUALCOOP_OUT", str(tmp_path / "envout"))
        assert run("align", "--duration", 0) == 0
        assert (tmp_path / "envout" / "align_asym_relative_translational.csv").exists()


def test_compare_equivalent_methods_at_half(tmp_path, capsys):
    code = run("compare", "--methods", "cts", "ects@0.5", "relative", "asym_relative@0.5", "--duration", 2, "--out", tmp_path)
    assert code == 0
    text = capsys.readouterr().out
    assert "joint_path" in text.splitlines()[0]
    q = {}
    for label in ("cts", "ects_a0.5", "relative", "asym_relative_a0.5"):
        header, data = read_csv(tmp_path / f"compare_{label}_translational.csv")
        q[label] = data[:, 2:16]
    np.testing.assert_allclose(q["cts"], q["ects_a0.5"], atol=1e-10)
    np.testing.assert_allclose(q["relative"], q["asym_relative_a0.5"], atol=1e-10)
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "summary.txt").exists()


def test_compare_bad_method_spec(tmp_path):
    assert run("compare", "--methods", "ects@2", "--out", tmp_path) == 2


def test_frames(tmp_path, capsys):
    assert run("frames", "--out", tmp_path) == 0
    lines = (tmp_path / "frames.csv").read_text().splitlines()
    assert lines[0] == "frame,x,y,z,qw,qx,qy,qz"
    cts_abs = [l for l in lines if l.startswith("cts_absolute,")][0].split(",")
    np.testing.assert_allclose([float(v) for v in cts_abs[1:4]], [0.405, 0.075, 0.285], atol=1e-12)
    assert "o1" in capsys.readouterr().out


def test_frames_bad_inputs(tmp_path):
    assert run("frames", "--seed", "nope", "--out", tmp_path) == 2
    assert run("frames", "--q", 0, 0, "--out", tmp_path) == 2


class TestSelfcheck:
    def test_passes(self, capsys):
        assert run("selfcheck") == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 11 and "FAIL" not in out

    def test_fault_injection_names_identity(self, capsys):
        assert run("selfcheck", "--inject-fault", "asym-absolute-invariance") == 1
        out = capsys.readouterr().out
        failing = [l for l in out.splitlines() if l.startswith("FAIL")]
        assert len(failing) == 1 and "asym-absolute-invariance" in failing[0]
        assert "La(a) pinv(Lr(a)) = 0" in failing[0]

    def test_fault_flag_is_hidden(self, capsys):
        assert main(["selfcheck", "--help"]) == 0
        assert "inject" not in capsys.readouterr().out

    def test_unknown_fault(self):
        assert run("selfcheck", "--inject-fault", "nope") == 2


def test_no_subcommand_is_usage_error():
    assert main([]) == 2


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dualcoop", "selfcheck"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "selfcheck passed" in proc.stdout
