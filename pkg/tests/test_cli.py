from pathlib import Path

import pytest

from chemoflow.cli import main
from chemoflow.config import parse_config
from chemoflow.diagnostics import CSV_COLUMNS
from chemoflow.io import read_snapshot, read_timeseries

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, text, n=8, t_end=0.02):
    path = tmp_path / "case.cfg"
    path.write_text(f"[grid]\nn_cells = {n}\n[control]\nt_end = {t_end}\n{text}", encoding="utf-8")
    return str(path)


def test_shipped_configs_parse():
    names = sorted(p.name for p in CONFIGS.glob("*.cfg"))
    assert "default.cfg" in names
    for name in names:
        parse_config((CONFIGS / name).read_text(encoding="utf-8"))


def test_verify_default_config(capsys):
    assert main(["verify", "--config", str(CONFIGS / "default.cfg")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "regime Case1"
    assert "FAILED" not in out


def test_verify_reports_failed_hypothesis(tmp_path, capsys):
    # f decreasing somewhere breaks the monotonicity hypotheses
    code = main(["verify", "--config", write_cfg(tmp_path, "[params]\nf = s*exp(-s)\nc0 = 3\n")])
    assert code == 2
    assert "FAILED" in capsys.readouterr().out


def test_exponents_worked_example(capsys):
    assert main(["exponents", "--m", "1", "--mu", "0", "--alpha", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "regime Case1"
    assert lines[1] == "p1=5/3 p2=5/4 p3=5/4"
    assert lines[2].startswith("r=1.35 q=")


def test_exponents_inadmissible(capsys):
    assert main(["exponents", "--m", str(2 / 3), "--mu", "0", "--alpha", "2"]) == 2
    assert "Inadmissible" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["exponents", "--m", "1"], ["exponents", "--m", "x", "--mu", "0", "--alpha", "2"]])
def test_usage_errors_print_help(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_run_writes_csv_and_snapshots(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "output_interval = 0.01\n[output]\nsnapshot_every = 1\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    cols = read_timeseries(tmp_path / "o" / "timeseries.csv")
    assert list(cols) == list(CSV_COLUMNS)
    assert cols["t"] == pytest.approx([0.0, 0.01, 0.02])
    snaps = sorted((tmp_path / "o").glob("*.cnsf"))
    assert snaps
    n_cells, fields = read_snapshot(snaps[-1])
    assert n_cells == (8, 8) and fields["u_x"].shape == (9, 8)
    assert "mass_identity" in capsys.readouterr().out


def test_run_bound_violation_exit_2(tmp_path, capsys):
    # f = 0: no consumption, so the chemotactic energy is undefined (y = inf)
    assert main(["run", "--config", write_cfg(tmp_path, "[params]\nf = 0\n"), "--out", str(tmp_path / "o")]) == 2
    assert "energy_bounded             VIOLATED" in capsys.readouterr().out


def test_run_cfl_floor_exit_1(tmp_path, capsys):
    assert main(["run", "--config", write_cfg(tmp_path, "[params]\nkappa = 1e8\n"), "--out", str(tmp_path / "o")]) == 1
    assert "StabilityError" in capsys.readouterr().err


def test_bad_config_exit_1(tmp_path, capsys):
    assert main(["run", "--config", write_cfg(tmp_path, "[params]\nalpha = 1.0\n")]) == 1
    assert "alpha" in capsys.readouterr().err
    assert main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_sweep_writes_summary(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[sweep]\neps_list = 0.1, 0.05\n")
    code = main(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
    out = capsys.readouterr().out
    assert code == 0
    assert "# verdict bounded=" in out
    text = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert text[0].startswith("eps,sup_y,") and len(text) == 4
