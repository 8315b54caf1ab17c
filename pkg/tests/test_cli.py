import json

import numpy as np
import pytest

from bubblestab import cli, steklov
from bubblestab.config import load_config


@pytest.fixture
def small(tmp_path):
    conf = tmp_path / "small.cfg"
    conf.write_text("K = 8\nN_r = 32\nT = 3.0\n# comment\nlambda = 0.16\n")
    return conf


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_steklov_caches_and_is_deterministic(capsys, small, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(capsys, "steklov", "--config", small, "--out", a)
    assert code == 0 and "assembled and cached" in out
    code, out, _ = run(capsys, "steklov", "--config", small, "--out", a)
    assert code == 0 and "cache hit" in out
    run(capsys, "steklov", "--config", small, "--out", b)
    assert (a / "steklov_blocks.csv").read_bytes() == (b / "steklov_blocks.csv").read_bytes()
    rows = (a / "steklov_blocks.csv").read_text().splitlines()
    assert rows[0].startswith("# bubblestab steklov fingerprint=")
    assert len(rows) == 2 + 9
    P = steklov.assemble(load_config(small))
    vals = [float(v) for v in rows[2 + 3].split(",")[1:]]
    assert np.allclose(np.array(vals[0::2]) + 1j * np.array(vals[1::2]), P.block(3).ravel(), rtol=1e-15)


def test_spectrum_lists_rigid_tags(capsys, small, tmp_path):
    code, _, _ = run(capsys, "spectrum", "--config", small, "--out", tmp_path)
    assert code == 0
    text = (tmp_path / "spectrum.csv").read_text()
    assert "rotation" in text and "translation" in text and "volume" in text


def test_feedback_writes_law_and_report(capsys, small, tmp_path):
    code, out, _ = run(capsys, "feedback", "--config", small, "--out", tmp_path)
    assert code == 0
    law = json.loads((tmp_path / "feedback_law.json").read_text())
    assert law["format"] == "feedback-law" and law["params"]["lam"] == 0.16
    assert (tmp_path / "feedback_report.txt").read_text() == out.split("\n", 1)[1]


def test_open_loop_simulation_reports_monotone_gradient(capsys, small, tmp_path):
    code, out, _ = run(capsys, "simulate", "--config", small, "--out", tmp_path, "--open-loop",
                       "--initial", "mode(3, 0.01, 0.005)")
    assert code == 0
    assert "gradient norm monotone: True" in out
    assert "mode: open loop" in out
    assert (tmp_path / "trajectory.csv").exists()


def test_closed_loop_simulation_is_byte_stable(capsys, small, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "simulate", "--config", small, "--out", tmp_path / name)[0] == 0
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_nonlinear_run(capsys, small, tmp_path):
    code, out, _ = run(capsys, "simulate-nonlinear", "--config", small, "--out", tmp_path,
                       "--initial", "ellipse(0.002)", "--tol", "1e-10")
    assert code == 0
    assert "converged: True" in out
    assert (tmp_path / "nonlinear_report.txt").read_text() == out.split("\n", 1)[1]


def test_extension_check(capsys, small, tmp_path):
    code, out, _ = run(capsys, "extension-check", "--config", small, "--out", tmp_path,
                       "--initial", "mode(3, 0.05, 0.0)")
    assert code == 0
    assert "maximum principle: True" in out
    thr = float(out.split("folding threshold (max-coefficient scale): ")[1].split()[0])
    assert 0.1 < thr < 1 / 3


def test_foreign_operator_is_refused(capsys, small, tmp_path):
    other = tmp_path / "other.cfg"
    other.write_text("K = 8\nnu = 2.0\n")
    run(capsys, "steklov", "--config", other, "--out", tmp_path / "o")
    foreign = next((tmp_path / "o" / "cache").iterdir())
    code, _, err = run(capsys, "spectrum", "--config", small, "--out", tmp_path, "--operator", foreign)
    assert code == cli.EXIT_CACHE
    assert "refusing cached data" in err


def test_corrupted_cache_is_refused(capsys, small, tmp_path):
    run(capsys, "steklov", "--config", small, "--out", tmp_path)
    path = next((tmp_path / "cache").iterdir())
    path.write_text(path.read_text().replace("analytic", "fd", 1))
    assert run(capsys, "steklov", "--config", small, "--out", tmp_path)[0] == cli.EXIT_CACHE


@pytest.mark.parametrize("text", ["K = -3\n", "R_out = 0.5\n", "colour = blue\n", "dt = fast\n"])
def test_bad_config_is_input_error(capsys, tmp_path, text):
    bad = tmp_path / "bad.cfg"
    bad.write_text(text)
    code, _, err = run(capsys, "steklov", "--config", bad, "--out", tmp_path)
    assert code == cli.EXIT_INPUT
    assert "config error" in err


def test_missing_config_is_input_error(capsys, tmp_path):
    assert run(capsys, "steklov", "--config", tmp_path / "nope.cfg", "--out", tmp_path)[0] == cli.EXIT_INPUT


@pytest.mark.parametrize("initial", ["spiral(2)", "mode(99, 0.1, 0)", "mode(0, 0.1, 0)", "ellipse(x)"])
def test_bad_initial_condition_is_input_error(capsys, small, tmp_path, initial):
    code, _, err = run(capsys, "extension-check", "--config", small, "--out", tmp_path, "--initial", initial)
    assert code == cli.EXIT_INPUT
    assert "input error" in err


def test_oversized_nonlinear_data_is_input_error(capsys, small, tmp_path):
    code, _, _ = run(capsys, "simulate-nonlinear", "--config", small, "--out", tmp_path, "--initial", "ellipse(0.3)")
    assert code == cli.EXIT_INPUT


def test_initial_condition_from_file(capsys, small, tmp_path):
    f = tmp_path / "z.txt"
    f.write_text("# k re_n im_n re_t im_t\n2 0.002 0 0 0.002\n")
    code, out, _ = run(capsys, "simulate", "--config", small, "--out", tmp_path, "--initial", f"file({f})")
    assert code == 0 and "closed loop" in out


def test_numerical_failure_exit_code(capsys, tmp_path):
    conf = tmp_path / "collide.cfg"
    conf.write_text("K = 8\nlambda = 0.375\n")
    code, _, err = run(capsys, "feedback", "--config", conf, "--out", tmp_path)
    assert code == cli.EXIT_NUMERIC
    assert "numerical failure" in err
