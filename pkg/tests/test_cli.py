"""CLI contract: commands, exit codes, artifacts, determinism."""

import os

import pytest

from femopt.cli import main
from femopt.mesh import count_dofs

SMALL = """
[problem]
dim = 1
name = "clismoke"
exact_u = "exp(-(x - 0.5)^2)"

[fem]
degrees = [2]

[run]
mode = "both"
variables = ["u"]
N_max = 1e5

[output]
directory = "{out}"
emit_plots = false
"""


def write_config(tmp_path, text=None, **fmt):
    path = tmp_path / "exp.toml"
    path.write_text((text or SMALL).format(**fmt), encoding="utf-8")
    return str(path)


def test_dofs_prints_count(capsys):
    assert main(["dofs", "quad", "3", "2"]) == 0
    assert capsys.readouterr().out.strip() == str(count_dofs("quad", 3, 2))


def test_dofs_bad_inputs(capsys):
    assert main(["dofs", "interval", "-1", "2"]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["dofs", "interval", "3", "9"]) == 2
    with pytest.raises(SystemExit) as info:
        main(["dofs", "hex", "3", "2"])        # argparse rejects the choice
    assert info.value.code == 2


def test_check_valid_and_invalid(tmp_path, capsys):
    path = write_config(tmp_path, out=str(tmp_path / "o"))
    assert main(["check", path]) == 0
    out = capsys.readouterr().out
    assert "ok: clismoke" in out and "dim 1" in out

    bad = tmp_path / "bad.toml"
    bad.write_text('[problem]\ndim = 1\nexact_u = "x+*2"\n', encoding="utf-8")
    assert main(["check", str(bad)]) == 2
    assert "exact_u" in capsys.readouterr().err


def test_run_missing_config(capsys):
    assert main(["run", "/no/such/file.toml"]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "results"
    path = write_config(tmp_path, out=str(out))
    assert main(["run", path]) == 0
    stdout = capsys.readouterr().out
    assert "CPU time reduction" in stdout
    assert (out / "series_u_p2.csv").exists()
    assert (out / "prediction.csv").exists()
    assert (out / "report.txt").exists()
    assert not (out / "plot_u.gp").exists()    # emit_plots = false


def test_run_out_flag_overrides(tmp_path, capsys):
    path = write_config(tmp_path, out=str(tmp_path / "ignored"))
    target = tmp_path / "elsewhere"
    assert main(["run", path, "--out", str(target)]) == 0
    capsys.readouterr()
    assert (target / "report.txt").exists()
    assert not (tmp_path / "ignored").exists()


def test_rerun_reproduces_numeric_columns(tmp_path, capsys):
    out = tmp_path / "o"
    path = write_config(tmp_path, out=str(out))
    assert main(["run", path]) == 0
    first = (out / "series_u_p2.csv").read_text()
    assert main(["run", path]) == 0
    second = (out / "series_u_p2.csv").read_text()
    capsys.readouterr()

    def strip_seconds(text):
        return ["," .join(line.split(",")[:4]) for line in text.splitlines()]

    assert strip_seconds(first) == strip_seconds(second)
    pred = (out / "prediction.csv").read_text()
    assert "," in pred and "e" in pred         # sane content, fully numeric


def test_run_parallel_disables_pct(tmp_path, capsys):
    out = tmp_path / "p"
    path = write_config(tmp_path, out=str(out))
    assert main(["run", path, "--parallel"]) == 0
    stdout = capsys.readouterr().out
    assert "pct: n/a (parallel run" in stdout
    assert (out / "series_u_p2.csv").exists()
    report = (out / "report.txt").read_text()
    assert "parallel run" in report


def test_run_parallel_multi_scenario(tmp_path, capsys):
    text = SMALL.replace("degrees = [2]", "degrees = [2, 3]") \
                .replace('variables = ["u"]', 'variables = ["u", "grad"]')
    out = tmp_path / "pp"
    path = write_config(tmp_path, text=text, out=str(out))
    assert main(["run", path, "--parallel"]) == 0
    capsys.readouterr()
    for name in ["series_u_p2.csv", "series_grad_p2.csv",
                 "series_u_p3.csv", "series_grad_p3.csv"]:
        assert (out / name).exists(), name


def test_runtime_error_exit_code(tmp_path, capsys):
    # budget so small the normalization cannot converge: runtime failure, not
    # a config problem
    text = SMALL + "\n"
    text = text.replace("N_max = 1e5", "N_max = 10\nc_s = 1e-12")
    path = write_config(tmp_path, text=text, out=str(tmp_path / "x"))
    assert main(["run", path]) == 1
    err = capsys.readouterr().err
    assert "NormalizationError" in err or "predictor" in err
