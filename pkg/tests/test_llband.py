import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from bosatom.hs1d import HSClosedForm, graded_grid, hs_energy_exact
from bosatom.llband import (attraction_weights, build_kernels, confined_minimize, erfcx_primitive,
                            kernel_primitive, l_of_beta, repulsion_matrix, write_convergence_csv)


def test_l_of_beta_forward():
    assert l_of_beta((2 * math.sinh(1.0)) ** 2) == pytest.approx(2.0, abs=1e-6)


def test_l_of_beta_large_field():
    ref = optimize.brentq(lambda x: x * math.sinh(x / 2) - 1000.0, 1.0, 20.0, xtol=1e-14)
    assert l_of_beta(1e6) == pytest.approx(ref, rel=1e-10)
    assert l_of_beta(1e6) == pytest.approx(10.50, abs=5e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e12), st.floats(1.001, 100.0))
def test_l_of_beta_increasing(beta, factor):
    assert l_of_beta(beta * factor) > l_of_beta(beta)


def test_l_of_beta_rejects_nonpositive():
    with pytest.raises(ValueError):
        l_of_beta(0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50.0, 50.0))
def test_attraction_even(u):
    k = build_kernels(100.0, np.array([0.0]))
    assert k.attraction(u) == k.attraction(-u)


def brute_attraction(beta, u, width):
    """int over the transverse plane of a Gaussian of variance ``width`` against 1/(L sqrt(L^2 r^2/beta + u^2))."""
    L = l_of_beta(beta)

    def f(y, x):
        s2 = x * x + y * y
        return math.exp(-s2 / (2 * width)) / (2 * math.pi * width) / (L * math.sqrt(L * L * s2 / beta + u * u))

    return 4 * integrate.dblquad(f, 0, 12 * math.sqrt(width), 0, 12 * math.sqrt(width),
                                 epsabs=1e-12, epsrel=1e-10)[0]


def test_attraction_against_plane_integral():
    k = build_kernels(100.0, np.array([1.0]))
    assert k.attraction(1.0) == pytest.approx(brute_attraction(100.0, 1.0, 1.0), abs=1e-4)


def test_repulsion_against_plane_integral():
    # difference of two independent unit Gaussians has variance 2
    k = build_kernels(100.0, np.array([1.0]))
    assert k.repulsion(1.0) == pytest.approx(brute_attraction(100.0, 1.0, 2.0), abs=1e-4)


@pytest.mark.parametrize("x", [0.0, 0.05, 0.9, 3.0, 40.0, 1e4])
def test_erfcx_primitive_against_quad(x):
    from scipy import special
    ref = integrate.quad(special.erfcx, 0, x, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    assert erfcx_primitive(x) == pytest.approx(ref, rel=1e-11, abs=1e-14)


def test_erfcx_primitive_tail_beyond_table():
    # erfcx(x) ~ 1/(sqrt(pi) x): one decade adds ln(10)/sqrt(pi)
    step = erfcx_primitive(1e12) - erfcx_primitive(1e11)
    assert step == pytest.approx(math.log(10) / math.sqrt(math.pi), rel=1e-12)
    assert erfcx_primitive(1.2e9) > erfcx_primitive(0.9e9)


@settings(max_examples=20, deadline=None)
@given(st.floats(-30.0, 30.0))
def test_kernel_primitive_integrates_kernel(u):
    k = build_kernels(50.0, np.array([0.0]))
    ref = integrate.quad(k.attraction, 0, u, epsabs=1e-13, limit=200)[0]
    assert k.attraction_primitive(u) == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_attraction_tends_to_point_value():
    # L (int V_A psi^2 - psi(0)^2) stays bounded as the field grows
    g = graded_grid()
    psi2 = HSClosedForm(1.0).psi(g.z_nodes) ** 2
    scaled = []
    for beta in (1e2, 1e4, 1e6, 1e8):
        k = build_kernels(beta)
        scaled.append(k.L * (float(attraction_weights(k, g) @ psi2) - psi2[g.i0]))
    assert max(abs(s) for s in scaled) < 1.0
    assert abs(scaled[-1] - scaled[-2]) < abs(scaled[1] - scaled[0])


def test_repulsion_matrix_symmetric_positive():
    g = graded_grid(z_max=200.0, h0=0.05, ratio=1.1)
    q = repulsion_matrix(build_kernels(100.0), g)
    np.testing.assert_array_equal(q, q.T)
    assert np.all(q >= 0)
    v = np.random.default_rng(0).random(g.size)
    assert v @ q @ v > 0


def test_confined_unit_mass():
    res = confined_minimize(1.0, 100.0)
    assert res.converged and not res.overcritical
    assert res.density.mass() == pytest.approx(1.0, rel=1e-12)
    assert res.breakdown.E == pytest.approx(res.L**2 * res.scaled.E, rel=1e-14)
    # the confined energy per L^2 lies above the limit value for this mass
    assert res.energy / res.L**2 > hs_energy_exact(1.0)


def test_confined_critical_mass_is_clamped():
    res = confined_minimize(2.0, 100.0)
    assert res.overcritical and 1.0 < res.clamped_mass < 2.0
    assert abs(res.scaled.mu) < 1e-3


def test_convergence_csv(tmp_path):
    write_convergence_csv(tmp_path / "c.csv", [(100.0, 3.3, -1.0, -0.1, -0.09)])
    head, row = (tmp_path / "c.csv").read_text().splitlines()
    assert head == "beta,L,E_conf,E_conf_over_L2,E_HS" and row.startswith("100,")
