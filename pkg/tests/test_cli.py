import json
import os
import subprocess
import sys

import numpy as np
import pytest

from harmlab import __version__
from harmlab.cli import EXIT_BAD_INPUT, EXIT_OK, SUBCOMMANDS, dumps, run


def _spec_file(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


SMALL_LINEAR = {"grid": {"dim": 1, "counts": [33], "extents": [[0, 1]]}, "c": 1, "h": 1}


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["solve"], ["--nope"]])
def test_bad_invocations_exit_4(argv, capsys):
    assert run(argv) == EXIT_BAD_INPUT
    assert "harmlab: error:" in capsys.readouterr().err


def test_help_and_version(capsys):
    assert run(["--help"]) == EXIT_OK
    out = capsys.readouterr().out
    assert all(cmd in out for cmd in SUBCOMMANDS)
    assert run(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_malformed_spec_names_the_key(tmp_path, capsys):
    path = _spec_file(tmp_path, {"grid": {"dim": 1, "counts": [17], "extents": [[0, 1]]}, "mu": -1})
    assert run(["solve", "--spec", path, "--out", str(tmp_path)]) == EXIT_BAD_INPUT
    assert "spec error at 'mu'" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [
        ["--protocol", "v0"],
        ["--tol", "0"],
        ["--theta", "2"],
        ["--refine", "-1"],
    ],
)
def test_bad_options_exit_4(tmp_path, extra):
    path = _spec_file(tmp_path, SMALL_LINEAR)
    assert run(["solve", "--spec", path, "--out", str(tmp_path), *extra]) == EXIT_BAD_INPUT


def test_missing_spec_file(tmp_path, capsys):
    assert run(["eigen", "--spec", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_BAD_INPUT
    assert "not found" in capsys.readouterr().err


def test_transform_check_rejects_even_k(tmp_path):
    assert run(["transform-check", "--k", "2", "--out", str(tmp_path)]) == EXIT_BAD_INPUT
    assert run(["transform-check", "--m", "0", "--out", str(tmp_path)]) == EXIT_BAD_INPUT


def test_solve_with_refinement(specs_dir, tmp_path):
    out = tmp_path / "run"
    spec = os.path.join(specs_dir, "manufactured.json")
    assert run(["solve", "--spec", spec, "--refine", "0,1", "--out", str(out)]) == EXIT_OK
    assert (out / "solution_r0.csv").exists() and (out / "solution_r1.csv").exists()
    rep = json.loads((out / "solve.json").read_text())
    assert rep["passed"] and len(rep["levels"]) == 2
    assert rep["observed_orders"][0] > 1.8


def test_picard_method(tmp_path):
    path = _spec_file(tmp_path, SMALL_LINEAR)
    assert run(["solve", "--spec", path, "--method", "picard", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["method"] == "picard" and (tmp_path / "solution.csv").exists()


def test_reruns_are_byte_identical(specs_dir, tmp_path):
    spec = os.path.join(specs_dir, "manufactured.json")
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert run(["solve", "--spec", spec, "--refine", "0,1", "--out", str(o), "--seed", "3"]) == EXIT_OK
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()


def test_eigen_and_report(tmp_path, capsys):
    path = _spec_file(tmp_path, SMALL_LINEAR)
    assert run(["eigen", "--spec", path, "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "eigen.json").read_text())
    assert rep["gamma1"] == pytest.approx(np.pi**2, rel=2e-3)
    capsys.readouterr()
    assert run(["report", "--out", str(tmp_path)]) == EXIT_OK
    assert "PASS eigen.json" in capsys.readouterr().out
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"]


def test_report_flags_failures(tmp_path, capsys):
    (tmp_path / "x.json").write_text('{"passed": false}')
    assert run(["report", "--out", str(tmp_path)]) == 3
    assert "FAIL x.json" in capsys.readouterr().out
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run(["report", "--out", str(empty)]) == EXIT_BAD_INPUT


def test_bifurcate_linear_has_no_fold(tmp_path):
    path = _spec_file(tmp_path, SMALL_LINEAR)
    assert run(["bifurcate", "--spec", path, "--out", str(tmp_path), "--probe", "1,4,8"]) == EXIT_OK
    rep = json.loads((tmp_path / "bifurcate.json").read_text())
    assert rep["lambda_bar"] is None
    assert (tmp_path / "branch.csv").read_text().startswith("index,lambda")


def test_dumps_is_deterministic():
    obj = {"b": [np.float64(0.1), np.int64(2), float("nan")], "a": {"z": float("-inf"), "y": (True, None)}}
    text = dumps(obj)
    assert text.index('"a"') < text.index('"b"')
    assert '"nan"' in text and '"-inf"' in text
    assert json.loads(text)["b"][:2] == [0.1, 2]
    assert dumps(obj) == text
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "harmlab", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout
