import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bosatom.hs1d import (HSClosedForm, HSDensity, graded_grid, hs_critical_mass, hs_energy_exact,
                          hs_energy_parts_exact, hs_exact_density, hs_linear_residual, hs_minimize,
                          sample_exact, write_energy_csv, write_profile_csv)


def closed_form_parts(lam):
    """K, A, R from antiderivatives of csch^2 coth^2 and csch^4."""
    if lam >= 2:
        return 1 / 6, 1 / 2, 1 / 6
    d = 2 - lam
    k2 = d * d / 8
    a = d / 4
    c = math.atanh(d / 2)
    ct = 1 / math.tanh(c)
    kin = 2 * k2 * a * (ct**3 - 1) / 3
    att = k2 / math.sinh(c) ** 2
    rep = k2 * k2 / a * ((ct**3 - 1) / 3 - (ct - 1))
    return kin, att, rep


def test_critical_density_at_origin():
    assert hs_exact_density(2.0, 0.0) == pytest.approx(0.5, rel=1e-15)


def test_unit_mass_profile():
    assert HSClosedForm(1.0).c == pytest.approx(math.atanh(0.5), rel=1e-15)
    m = 2 * integrate.quad(lambda z: hs_exact_density(1.0, z), 0, np.inf, epsabs=1e-13)[0]
    assert m == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("z", [0.0, 0.3, 2.0, 50.0])
def test_branches_meet_at_critical_mass(z):
    below = HSClosedForm(2 - 1e-6).psi(z)
    at = HSClosedForm(2.0).psi(z)
    assert below == pytest.approx(at, abs=1e-4)


@pytest.mark.parametrize("lam", [0.3, 1.0, 1.7, 2.0])
def test_exact_parts_against_antiderivatives(lam):
    np.testing.assert_allclose(hs_energy_parts_exact(lam), closed_form_parts(lam), rtol=1e-10)


def test_critical_energy():
    assert hs_energy_exact(2.0) == pytest.approx(-1 / 6, abs=1e-8)


def test_hydrogen_limit():
    assert hs_energy_exact(0.01) / 0.01 == pytest.approx(-0.25, abs=1e-2)


def test_plateau_above_critical():
    assert hs_energy_exact(3.0) == hs_energy_exact(2.0)
    assert hs_critical_mass() == 2.0 and hs_critical_mass(2.0, 1.0) == 4.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.9), st.floats(0.01, 0.1))
def test_exact_energy_decreasing_and_convex(lam, d):
    lo, mid, hi = (hs_energy_exact(x) for x in (lam, lam + d, min(lam + 2 * d, 2.0)))
    assert mid < lo
    if lam + 2 * d <= 2.0:
        assert hi - 2 * mid + lo >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.95))
def test_exact_energy_identity(lam):
    # lambda mu = K - A + 2R with mu = -(2 - lambda)^2 / 16
    k, a, r = hs_energy_parts_exact(lam)
    assert k - a + 2 * r == pytest.approx(-lam * (2 - lam) ** 2 / 16, rel=1e-9, abs=1e-13)


def test_grid_is_symmetric_with_zero_node():
    g = graded_grid()
    assert g.z_nodes[g.i0] == 0.0
    np.testing.assert_array_equal(g.z_nodes, -g.z_nodes[::-1])
    assert g.z_max >= 2e4


@pytest.fixture(scope="module")
def grid():
    return graded_grid()


def test_minimizer_unit_mass(grid):
    rho, bd = hs_minimize(1.0, grid)
    assert bd.E == pytest.approx(hs_energy_exact(1.0), abs=1e-4)
    assert rho.mass() == pytest.approx(1.0, rel=1e-12)
    l1 = float(grid.weights @ np.abs(rho.values - hs_exact_density(1.0, grid.z_nodes)))
    assert l1 < 2e-3


def test_minimizer_critical_ratios(grid):
    _, bd = hs_minimize(2.0, grid)
    e = abs(bd.E)
    assert bd.E == pytest.approx(-1 / 6, abs=1e-4)
    for got, want in ((bd.K / e, 1.0), (bd.A / e, 3.0), (bd.R / e, 1.0)):
        assert got == pytest.approx(want, rel=1e-3)


def test_minimizer_overcritical_equals_critical(grid):
    r2, b2 = hs_minimize(2.0, grid)
    r4, b4 = hs_minimize(4.0, grid)
    assert b4.E == pytest.approx(b2.E, abs=1e-10)
    np.testing.assert_allclose(r4.values, r2.values, atol=1e-9)


def test_charge_scaling(grid):
    # E(lam, zeta, alpha) = zeta^3/alpha E(alpha lam / zeta); finer grading near 0 absorbs the 1/zeta shrink
    _, b = hs_minimize(1.0, graded_grid(h0=0.0025), zeta=2.0, alpha=1.0)
    _, ref = hs_minimize(0.5, grid)
    assert b.E == pytest.approx(8.0 * ref.E, rel=1e-3)


def test_linear_operator_at_exact_density(grid):
    rho = sample_exact(1.0, grid)
    res, mu = hs_linear_residual(rho)
    k, a, r = hs_energy_parts_exact(1.0)
    assert res < 1e-2
    assert mu == pytest.approx((k - a + r + r) / 1.0, abs=1e-3)
    assert mu == pytest.approx(-1 / 16, abs=1e-3)


def test_linear_operator_critical_mu(grid):
    _, mu = hs_linear_residual(sample_exact(2.0, grid))
    assert mu == pytest.approx(0.0, abs=1e-3)


def test_perturbation_raises_residual(grid):
    rho = sample_exact(1.0, grid)
    base, _ = hs_linear_residual(rho)
    bumped = HSDensity(grid, rho.values * (1 + 0.1 * np.sin(grid.z_nodes)))
    assert hs_linear_residual(bumped)[0] > base


def test_csv_writers(tmp_path, grid):
    rho = sample_exact(1.0, grid)
    write_profile_csv(tmp_path / "p.csv", 1.0, rho)
    write_energy_csv(tmp_path / "e.csv", [(1.0, hs_energy_exact(1.0), hs_minimize(1.0, grid)[1])])
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "z,rho_exact,rho_numeric" and len(lines) == grid.size + 1
    assert (tmp_path / "e.csv").read_text().startswith("lambda,E_exact")
