import json
import math

import numpy as np
import pytest

from spisim.cli import EXIT_FATAL, EXIT_OK, EXIT_PARTIAL, main, run
from spisim.config import ConfigError, parse_config, parse_grid


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# --- parsing -------------------------------------------------------------------

def test_minimal_config_defaults():
    cfg = parse_config("[run]\nexperiment = qbhat\n[probe]\nkind = coherent\n")
    assert cfg.gamma == 1.0 and cfg.gamma_star == 0.0 and cfg.eta == 1.0
    assert cfg.probe.kind == "coherent" and cfg.probe.nbar == 1.0 and cfg.probe.polarization == "H"
    assert cfg.n_points == 400 and cfg.seed == 0
    echo = cfg.echo()
    assert "experiment = qbhat" in echo and "kind = coherent" in echo


def test_experiment_dependent_defaults():
    cfg = parse_config("", experiment="advantage-map")
    assert cfg.probe.bandwidth == 5e-2 and cfg.probe.polarization == "R"
    assert parse_config("", experiment="readout").probe.polarization == "R"


@pytest.mark.parametrize("text,line", [
    ("[run]\nexperiment = qbhat\n[probe]\nnbar = 1.5\n", 4),
    ("[run]\nexperiment = qbhat\ncolour = red\n", 3),
    ("[run]\nexperiment = qbhat\n[emitter]\ngamma = -1\n", 4),
    ("[run]\nexperiment = sweep\n\n[grid]\nnbar = 0.5:0.1:3\n", 5),
    ("[run]\nexperiment = sweep\n[grid]\nbandwidth = log:0:1:3\n", 4),
    ("[run]\nexperiment = qbhat\n[nonsense]\nx = 1\n", 3),
    ("[run]\nexperiment = teleport\n", 2),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_missing_experiment():
    with pytest.raises(ConfigError):
        parse_config("[probe]\nkind = coherent\n")


def test_coherent_nbar_above_one_allowed():
    assert parse_config("[probe]\nkind = coherent\nnbar = 3\n", experiment="qbhat").probe.nbar == 3.0


def test_grid_syntax():
    assert np.allclose(parse_grid("0:1:5"), np.linspace(0, 1, 5))
    assert np.allclose(parse_grid("log:0.01:10:4"), [0.01, 0.1, 1, 10])
    assert np.allclose(parse_grid("0.1, 0.2,0.5"), [0.1, 0.2, 0.5])
    for bad in ("1:2", "a,b", "log:1:2", "0.3,0.2", ""):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_digest_ignores_workers():
    a = parse_config("[execution]\nworkers = 1\n", experiment="sweep")
    b = parse_config("[execution]\nworkers = 4\n", experiment="sweep")
    c = parse_config("[probe]\nnbar = 0.5\n", experiment="sweep")
    assert a.digest == b.digest != c.digest


# --- main and exit codes ------------------------------------------------------

def test_qbhat_run(tmp_path, capsys):
    path = _write(tmp_path, "[run]\nexperiment = qbhat\n[probe]\nnbar = 0.75\nbandwidth = 0.5\n")
    out = tmp_path / "o"
    assert main(["qbhat", "--config", path, "--out", str(out)]) == EXIT_OK
    rows = (out / "qbhat.csv").read_text().splitlines()
    assert rows[0].startswith("method,qbhat")
    assert rows[1].split(",")[1] == "0.0"
    assert float(rows[2].split(",")[1]) < 2e-2
    meta = json.loads((out / "metadata.json").read_text())
    for key in ("version", "config_sha256", "fock_cutoffs", "integrator", "cell_flags", "seed"):
        assert key in meta
    assert meta["integrator"]["rtol"] > 0
    assert "experiment = qbhat" in capsys.readouterr().out


def test_bad_config_exits_fatal(tmp_path, capsys):
    path = _write(tmp_path, "[run]\nexperiment = qbhat\n[probe]\nnbar = 1.5\n")
    assert main(["qbhat", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_FATAL
    assert "line 4" in capsys.readouterr().err


def test_experiment_mismatch_and_missing_file(tmp_path):
    path = _write(tmp_path, "[run]\nexperiment = sweep\n")
    assert main(["qbhat", "--config", path]) == EXIT_FATAL
    assert main(["qbhat", "--config", str(tmp_path / "absent.ini")]) == EXIT_FATAL


def test_seed_override(tmp_path):
    out = tmp_path / "o"
    assert main(["qbhat", "--out", str(out), "--seed", "17"]) == EXIT_OK
    assert json.loads((out / "metadata.json").read_text())["seed"] == 17


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "spisim" in capsys.readouterr().out


def test_validate_table_and_partial_exit(tmp_path, capsys):
    out = tmp_path / "v"
    code = main(["validate", "--out", str(out)])
    text = capsys.readouterr().out
    assert "PASS" in text
    rows = (out / "validate.csv").read_text().splitlines()[1:]
    failed = [r for r in rows if r.split(",")[3] == "0"]
    assert code == (EXIT_PARTIAL if failed else EXIT_OK)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["flagged_cells"] == len(failed)


# --- determinism --------------------------------------------------------------

def test_quantum_sweep_identical_across_workers(tmp_path):
    text = "[run]\nexperiment = sweep\n[grid]\nnbar = 0:1:20\nbandwidth = log:0.01:10:20\n"
    cfg = parse_config(text)
    assert run(cfg, tmp_path / "a", workers=1) == EXIT_OK
    assert run(cfg, tmp_path / "b", workers=8) == EXIT_OK
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert len(a.splitlines()) == 401


def test_coherent_sweep_identical_across_workers(tmp_path):
    text = "[probe]\nkind = coherent\n[grid]\nnbar = 0.2:1:3\nbandwidth = 0.3,1,3\n"
    cfg = parse_config(text, experiment="sweep")
    run(cfg, tmp_path / "a", workers=1)
    run(cfg, tmp_path / "b", workers=3)
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


# --- other experiments --------------------------------------------------------

def test_readout_run_emits_three_curves(tmp_path):
    text = f"[run]\nexperiment = readout\nphase = {math.pi!r}\n[grid]\nbandwidth = log:0.01:10:4\n"
    out = tmp_path / "r"
    assert run(parse_config(text), out) == EXIT_OK
    lines = (out / "readout.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["Gamma_over_gamma", "B_cl_qs", "B_q_qs", "B_q_cs"]
    vals = np.array([[float(x) for x in line.split(",")[1:4]] for line in lines[1:]])
    assert vals.shape == (4, 3)
    assert np.all(vals[:, 0] >= vals[:, 1] - 5e-3)


def test_polarization_run(tmp_path):
    text = "[run]\nexperiment = polarization\nn_points = 50\n"
    out = tmp_path / "p"
    assert run(parse_config(text), out) == EXIT_OK
    lines = (out / "polarization.csv").read_text().splitlines()
    assert lines[0].startswith("spin,t,eps_x")
    assert len(lines) == 101


def test_advantage_run_small(tmp_path):
    text = f"[run]\nphase = {math.pi!r}\n[grid]\neta = 0.7,1\ngamma_star = 0,0.4\n"
    out = tmp_path / "m"
    assert run(parse_config(text, experiment="advantage-map"), out) == EXIT_OK
    lines = (out / "advantage_map.csv").read_text().splitlines()
    assert lines[0].startswith("eta,gamma_star_over_gamma,log_ratio,in_region")
    assert len(lines) == 5
    assert lines[3].split(",")[3] == "1"  # eta = 1, gamma_star = 0
