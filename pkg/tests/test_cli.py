import json
import struct

import numpy as np
import pytest

from amocbox import cli, csvio


def run_cli(argv):
    return cli.main(argv)


def test_convert_values(capsys):
    run_cli(["convert", "--mu", "-5e-3"])
    out = capsys.readouterr().out
    assert "-2.773 Sv" in out
    assert "3.974 days" in out
    run_cli(["convert", "--mu", "0"])
    out = capsys.readouterr().out
    assert "F_N = 0 Sv" in out


def test_missing_flag_usage_error():
    with pytest.raises(SystemExit) as err:
        run_cli(["simulate", "--eta", "-3.99"])
    assert err.value.code == 2


def test_grid_1x1_rejected(tmp_path):
    with pytest.raises(SystemExit) as err:
        run_cli(["sweep", "regions", "--mu-min", "-1e-4", "--mu-max", "-1e-4",
                 "--eta-min", "-4", "--eta-max", "-4", "--nx", "1", "--ny", "1",
                 "--out", str(tmp_path / "r.csv")])
    assert err.value.code == 2


def test_unknown_config_key(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("nonsense_key = 3\n")
    with pytest.raises(SystemExit) as err:
        run_cli(["--config", str(cfgfile), "convert", "--mu", "0"])
    assert err.value.code == 2


def test_config_overrides(tmp_path, capsys):
    cfgfile = tmp_path / "ok.cfg"
    # halving sigma doubles the time unit and F_N per mu halves
    cfgfile.write_text("# comment line\nsigma = 1.05e10\n")
    run_cli(["--config", str(cfgfile), "convert", "--mu", "-5e-3"])
    out = capsys.readouterr().out
    assert "7.948 days" in out
    assert "-1.387 Sv" in out


def test_simulate_deterministic_and_provenance(tmp_path, capsys):
    args = ["simulate", "--mu", "-1e-4", "--eta", "-3.99", "--t-end", "500",
            "--out", str(tmp_path / "a.csv"),
            "--events-out", str(tmp_path / "ae.csv")]
    run_cli(args)
    args2 = ["simulate", "--mu", "-1e-4", "--eta", "-3.99", "--t-end", "500",
             "--out", str(tmp_path / "b.csv"),
             "--events-out", str(tmp_path / "be.csv")]
    run_cli(args2)
    a = (tmp_path / "a.csv").read_bytes()
    b = (tmp_path / "b.csv").read_bytes()
    # identical apart from the (identical) provenance header
    assert a == b
    first = a.decode().splitlines()[0]
    assert first.startswith("# amocbox ") and "config=" in first


def test_trajectory_csv_roundtrip(tmp_path):
    run_cli(["simulate", "--mu", "-1e-4", "--eta", "-3.99", "--t-end", "200",
             "--out", str(tmp_path / "t.csv"),
             "--events-out", str(tmp_path / "e.csv")])
    header, rows = csvio.read_csv(tmp_path / "t.csv")
    assert header == csvio.TRAJECTORY_COLS
    # float fields round-trip exactly at 17 significant digits
    from amocbox import model, integrate
    p = model.default_params(mu=-1e-4, eta=-3.99)
    traj = integrate.integrate([1.0, 0.0, 0.0, 0.5], p, (0.0, 200.0))
    for i in (0, 57, 199):
        reread = float(rows[i]["x_D"])
        assert struct.pack("<d", reread) == struct.pack("<d", traj.states[i][3])


def test_equilibria_cmd(tmp_path, capsys):
    run_cli(["equilibria", "--mu", "-1e-4", "--eta", "-3.99", "--seeds", "4",
             "--out", str(tmp_path / "eq.csv")])
    out = capsys.readouterr().out
    assert "equilibria at" in out
    header, rows = csvio.read_csv(tmp_path / "eq.csv")
    assert header == csvio.BRANCH_COLS
    assert len(rows) >= 1
    assert any(int(r["stable"]) == 1 for r in rows)


def test_sweep_regions_cmd(tmp_path):
    run_cli(["sweep", "regions", "--mu-min", "-1.2e-4", "--mu-max", "-0.8e-4",
             "--eta-min", "-0.6", "--eta-max", "-0.4", "--nx", "2", "--ny", "2",
             "--seeds", "3", "--out", str(tmp_path / "r.csv")])
    header, rows = csvio.read_csv(tmp_path / "r.csv")
    assert header == csvio.REGION_COLS
    assert len(rows) == 4
    assert all(r["category"] == "1N" for r in rows)


def test_sweep_lyapunov_cmd_small(tmp_path, capsys):
    run_cli(["sweep", "lyapunov", "--mu-min", "-1.2e-4", "--mu-max", "-0.8e-4",
             "--eta-min", "-4.0", "--eta-max", "-3.9", "--nx", "2", "--ny", "2",
             "--transient", "5e3", "--measure", "2e4",
             "--out", str(tmp_path / "l.csv")])
    header, rows = csvio.read_csv(tmp_path / "l.csv")
    assert header == csvio.LYAP_COLS
    assert len(rows) == 4
    assert all(float(r["lambda_raw"]) < 0 for r in rows)
    assert all(float(r["lambda_thresholded"]) == 0.0 for r in rows)


def test_orbit_json_schema(params):
    from amocbox import cycles
    orb = cycles.PeriodicOrbit(fractions=np.array([0.0, 0.5]),
                               states=np.zeros((2, 4)), period=100.0,
                               mu=-2e-3, eta=-3.99)
    doc = json.loads(csvio.orbit_json(orb, {"k": 1}, "compiled"))
    assert doc["period"] == 100.0
    assert len(doc["mesh_times"]) == 2
    assert doc["provenance"]["backend"] == "compiled"
