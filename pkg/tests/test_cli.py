import json

import numpy as np
import pytest
from click.testing import CliRunner

from bosatom.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, dumps17, main
from bosatom.grid import read_density
from bosatom.mh import MHParams, evaluate

SMALL = ["--grid-nr", "33", "--grid-nz", "65", "--rmax", "16", "--zmax", "16"]


def run(*args):
    res = CliRunner().invoke(main, list(args))
    return res.exit_code, res.stdout


def test_hs_exact_path():
    code, out = run("hs", "--lambda", "2")
    d = json.loads(out)
    assert code == EXIT_OK and d["E_exact"] == pytest.approx(-1 / 6, abs=1e-6)
    assert d["config"]["command"] == "hs"


def test_solve_writes_reloadable_density(tmp_path):
    code, out = run("solve", "--lambda", "1", *SMALL, "--out", str(tmp_path))
    assert code == EXIT_OK
    d = json.loads(out)
    assert -0.25 <= d["solution"]["E"] <= -0.0625
    assert json.loads((tmp_path / "solve.json").read_text()) == d
    rho, meta = read_density(tmp_path / "density.csv")
    bd = evaluate(rho, MHParams(float(meta["lam"])))
    sol = d["solution"]
    for key in ("K", "A", "R", "E"):
        assert bd.__dict__[key] == pytest.approx(sol[key], rel=1e-12, abs=1e-14)


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params.lam": 0.5, "grid.n_r": 33, "grid.n_z": 65, "grid.r_max": 16.0,
                               "grid.z_max": 16.0}))
    code, out = run("solve", "--config", str(cfg), "--lambda", "0.25")
    d = json.loads(out)
    assert code == EXIT_OK and d["config"]["params.lam"] == 0.25 and d["config"]["grid.n_r"] == 33


@pytest.mark.parametrize("args", [
    ["solve", "--lambda", "-1"],
    ["solve", "--grid-nz", "64"],
    ["confined", "--beta", "0"],
])
def test_bad_configuration_exit_code(args):
    code, out = run(*args)
    assert code == EXIT_CONFIG and json.loads(out)["error"]["kind"] == "config"


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params.lamda": 1.0}))
    code, out = run("solve", "--config", str(cfg))
    assert code == EXIT_CONFIG and "params.lamda" in json.loads(out)["error"]["message"]


def test_failed_check_exit_code():
    # the virial checks fail on a grid this coarse
    code, out = run("scan-lambda", "--ladder", "0.5", "--grid-nr", "17", "--grid-nz", "33", "--rmax", "16",
                    "--zmax", "16")
    assert code == EXIT_CHECK and json.loads(out)["passed"] is False


def test_solver_failure_exit_code():
    code, out = run("solve", *SMALL, "--max-iter", "1")
    assert code == 2 and json.loads(out)["error"]["kind"] == "solver"


def test_confined_command():
    code, out = run("confined", "--lambda", "1", "--beta", "100")
    d = json.loads(out)
    assert code == EXIT_OK and d["E_over_L2"] > d["E_HS"]


def test_seventeen_digit_floats():
    text = dumps17({"x": 0.1, "y": [1 / 3], "n": float("nan"), "i": 3})
    assert '"x": 0.10000000000000001' in text and "0.33333333333333331" in text
    assert '"n": NaN' in text and '"i": 3' in text
    d = json.loads(text)
    assert d["x"] == 0.1 and d["y"][0] == 1 / 3 and np.isnan(d["n"])


def test_verify_quick_passes(tmp_path):
    code, out = run("verify", "--quick", "--out", str(tmp_path))
    d = json.loads(out)
    assert code == EXIT_OK and d["passed"] and d["config"]["quick"] is True
    assert (tmp_path / "verify.json").exists() and (tmp_path / "hs.csv").exists()
