import json

import numpy as np
import pytest

from bosatom import mh, regimes
from bosatom.flow import SolverError, SolverOptions
from bosatom.grid import build_grid
from bosatom.mh import MHParams
from bosatom.regimes import ScanResult


@pytest.fixture(scope="module")
def tiny():
    return build_grid(16.0, 16.0, 33, 65)


def test_scan_result_writers(tmp_path):
    s = ScanResult("beta", [(2.0, {"E": -0.5, "ok": True}), (1.0, {"E": -0.25, "ok": False})])
    s.sort()
    s.add("a", "some statement", True, 1.0, 2.0)
    assert [x for x, _ in s.points] == [1.0, 2.0] and s.passed
    s.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "beta,E,ok" and lines[1] == "1,-0.25,False"
    s.write_json(tmp_path / "s.json", config={"k": 1})
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["config"] == {"k": 1} and d["checks"][0]["anchor"] == "some statement"
    s.add("b", "another", False)
    assert not s.passed


def test_every_check_has_an_anchor(tiny):
    sol = mh.minimize(MHParams(0.5), tiny)
    suite = regimes.identity_suite(sol, hydrogen=regimes.hydrogen_pair(sol), critical=False)
    names = {c.name for c in suite.checks}
    assert {"repulsion_identity", "mu_negative", "virial_inequality", "sobolev", "virial_K",
            "hydrogen_lower", "hydrogen_upper", "simple_lower_bound", "simple_upper_bound"} <= names
    assert all(c.anchor for c in suite.checks)
    for name in ("repulsion_identity", "mu_negative", "sobolev", "hydrogen_lower", "simple_lower_bound"):
        assert next(c for c in suite.checks if c.name == name).passed


def test_scaling_identity_sample_is_exact(tiny):
    s = regimes.scaling_audit([MHParams(0.5)], tiny)
    assert s.checks[0].passed and s.checks[0].value == 0.0


def test_uniqueness_probe(tiny):
    s = regimes.uniqueness_probe(MHParams(0.5), tiny, seed=7)
    assert s.passed


def test_lambda_ladder_monotone_and_convex(tiny):
    s = regimes.scan_lambda([0.75, 0.25, 0.5], 0.0, tiny)
    got = {c.name: c.passed for c in s.checks}
    assert got["decreasing"] and got["convex"] and got["per_charge_increasing"]
    assert [x for x, _ in s.points] == [0.25, 0.5, 0.75]


def test_scan_is_deterministic(tmp_path, tiny):
    for name in ("a", "b"):
        regimes.scan_beta([0.0, 0.5], 0.5, tiny).write_csv(tmp_path / f"{name}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_worker_pool_keeps_order(tiny):
    ps = [MHParams(0.5, b) for b in (0.4, 0.1)]
    serial = regimes.solve_many(ps, tiny, SolverOptions(), jobs=1, warm=False)
    pooled = regimes.solve_many(ps, tiny, SolverOptions(), jobs=2)
    for a, b in zip(serial, pooled):
        assert a.params == b.params and a.energy == b.energy


def test_large_beta_records():
    s = regimes.large_beta_check(1.0, [1e3, 1e2])
    assert [x for x, _ in s.points] == [1e2, 1e3]
    assert {c.name for c in s.checks} == {"gap_decreasing", "gap_bounded"}
    assert next(c for c in s.checks if c.name == "gap_bounded").passed


def test_small_beta_ladder_validated():
    with pytest.raises(ValueError):
        regimes.small_beta_check(1.0, [0.5])


def test_solver_failures_become_records():
    def boom():
        raise SolverError("no", residual=0.5)
    s = regimes.run_checked(boom)
    assert not s.passed and s.checks[0].value == 0.5
