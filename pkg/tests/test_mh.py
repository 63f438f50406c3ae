import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosatom import mh
from bosatom.flow import SolverOptions
from bosatom.grid import Density2D, build_grid, kinetic_energy
from bosatom.mh import MHParams, evaluate, minimize


@pytest.fixture(scope="module")
def coarse():
    return build_grid(20.0, 20.0, 65, 129)


@pytest.fixture(scope="module")
def sol_half(coarse):
    return minimize(MHParams(0.5), coarse)


def test_params_validated():
    for bad in (dict(lam=0.0), dict(lam=1.0, beta=-1.0), dict(lam=1.0, zeta=0.0), dict(lam=1.0, alpha=-1.0)):
        with pytest.raises(ValueError):
            MHParams(**bad)


def test_hydrogen_density_energy(hydrogen_density):
    # 1/4 - 1/2 + 5/32
    bd = evaluate(hydrogen_density, MHParams(1.0))
    assert bd.E == pytest.approx(-0.09375, rel=2e-2)
    assert bd.E == bd.K - bd.A + bd.R


def test_zero_density_breakdown(coarse):
    bd = evaluate(Density2D(coarse, np.zeros(coarse.shape)), MHParams(1.0))
    assert (bd.K, bd.A, bd.R, bd.E) == (0.0, 0.0, 0.0, 0.0)


def test_zero_field_kinetic_is_pure(hydrogen_density):
    bd = evaluate(hydrogen_density, MHParams(1.0))
    assert bd.K == kinetic_energy(hydrogen_density.sqrt())


def test_converged_residual_and_perturbation(sol_half, coarse):
    assert sol_half.converged and sol_half.residual <= 1e-6
    assert mh.residual(sol_half.density, sol_half.params) <= 1e-6
    bumped = Density2D(coarse, sol_half.density.values * (1 + 0.1 * np.sin(coarse.z_nodes))[None, :])
    assert mh.residual(bumped, sol_half.params) > sol_half.residual


def test_hydrogen_nearly_solves_one_body_equation(coarse):
    rho = Density2D(coarse, np.exp(-coarse.radius) / (8 * math.pi))
    assert mh.residual(rho, MHParams(1.0, alpha=0.0)) < 0.06


def test_small_lambda_hydrogen_sandwich(coarse):
    e = minimize(MHParams(0.1), coarse).energy
    # lambda E_hyd(1) < E < lambda E_hyd(1 - lambda/2); discrete hydrogen energies on this grid
    lo = 0.1 * mh.hydrogen_energy(0.0, 1.0, coarse)
    hi = 0.1 * mh.hydrogen_energy(0.0, 0.95, coarse)
    assert lo < e < hi


def test_mu_matches_energy_derivative(coarse):
    s = minimize(MHParams(0.1), coarse)
    d = 0.01
    fd = (minimize(MHParams(0.1 + d), coarse).energy - minimize(MHParams(0.1 - d), coarse).energy) / (2 * d)
    assert mh.chemical_potential(s) == pytest.approx(fd, rel=1e-2)


def test_mu_negative_and_repulsion_identity(sol_half):
    bd = sol_half.breakdown
    assert bd.mu < 0
    assert bd.R == pytest.approx(-bd.E + sol_half.mass * bd.mu, rel=1e-6)


def test_zero_field_moment_is_minus_lambda(coarse):
    assert mh.magnetic_moment(MHParams(1.0), coarse) == pytest.approx(-1.0, abs=1e-2)


def test_moment_stable_under_step_halving():
    g = build_grid(10.0, 20.0, 65, 129)
    p = MHParams(0.5, 0.5)
    a = mh.magnetic_moment(p, g, step=1e-2)
    b = mh.magnetic_moment(p, g, step=5e-3)
    assert a == pytest.approx(b, rel=5e-4)


def test_extended_identity_parameters_exact(coarse):
    e = mh.extended_energy(MHParams(0.5), coarse)
    assert e.mismatch == 0.0 and e.direct == e.via_scaling


def test_extended_small_alpha_approaches_hydrogen(coarse):
    e = mh.extended_energy(MHParams(1.0, 0.0, 1.0, 1e-6), coarse)
    assert e.direct / 1.0 == pytest.approx(mh.hydrogen_energy(0.0, 1.0, coarse), rel=1e-3)


def test_field_sandwich_at_unit_field():
    g = build_grid(10.0, 20.0, 65, 129)
    e0 = minimize(MHParams(1.0), g)
    e1 = minimize(MHParams(1.0, 1.0), g, psi0=e0.wave)
    r2 = float(np.sum(g.weights * g.r_nodes[:, None] ** 2 * e0.density.values))
    assert -1.25 <= e1.energy
    assert e0.energy - 1.0 <= e1.energy <= e0.energy - 1.0 + 0.25 * r2


def test_overcritical_mass_is_clamped():
    g = build_grid(40.0, 40.0, 65, 129)
    s = minimize(MHParams(1.5), g)
    assert s.overcritical and 1.0 < s.clamped_mass < 1.5
    assert abs(s.breakdown.mu) <= 1e-3 * abs(s.energy)


def test_solution_json_round_trip(sol_half):
    import json
    d = json.loads(sol_half.to_json())
    assert d["E"] == sol_half.energy and d["params"]["lam"] == 0.5


@settings(max_examples=5, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.0, 1.5))
def test_simple_bounds_on_random_parameters(lam, beta):
    g = mh.default_grid(lam, beta, 49, 97)
    e = minimize(MHParams(lam, beta), g, SolverOptions(tol=1e-5)).energy
    assert -(0.25 + beta) * lam <= e <= -0.25 * lam * (1 - lam / 2) ** 2
