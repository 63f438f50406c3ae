import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh

from bosatom.flow import (FlowProblem, SolverError, SolverOptions, minimize_flow, newton_polish,
                          normalize, one_body_floor)


def chain(n=81, length=16.0, mean_field=0.0):
    """1-D harmonic oscillator on a uniform grid, optional local repulsion ``g rho``."""
    x = np.linspace(-length / 2, length / 2, n + 2)[1:-1]
    h = x[1] - x[0]
    w = np.full(n, h)
    s = sp.diags([2 * np.ones(n), -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1]) / h
    v = 0.5 * x * x
    m = sp.identity(n) * mean_field
    p = FlowProblem(s.tocsr(), w, v, lambda rho: mean_field * rho, 0.0, m)
    p.spectral_floor = one_body_floor(p)
    return p, x


def test_linear_problem_reaches_ground_state():
    p, x = chain()
    fr = minimize_flow(p, np.ones_like(x), 1.0, SolverOptions(tol=1e-9))
    a = p.stiffness.toarray() + np.diag(p.weights * p.potential)
    vals, vecs = eigh(a, np.diag(p.weights))
    assert fr.energy == pytest.approx(vals[0], rel=1e-9)
    ref = np.abs(vecs[:, 0])
    ref = normalize(ref, p.weights, 1.0)
    np.testing.assert_allclose(fr.psi, ref, atol=1e-6)


def test_energy_never_increases_along_the_flow():
    p, x = chain(mean_field=2.0)
    fr = minimize_flow(p, np.exp(-np.abs(x)), 1.0, SolverOptions(tol=1e-8, dt=10.0))
    e = np.array([h[1] for h in fr.history])
    assert np.all(np.diff(e) <= 1e-12 * np.abs(e[:-1]))


def test_mass_is_conserved():
    p, x = chain(mean_field=1.0)
    fr = minimize_flow(p, np.exp(-x * x), 2.5, SolverOptions())
    assert float(p.weights @ fr.psi**2) == pytest.approx(2.5, rel=1e-13)


def test_newton_polish_agrees_with_flow():
    p, x = chain(mean_field=3.0)
    opts = SolverOptions(tol=1e-10)
    fr = minimize_flow(p, np.exp(-x * x), 1.0, opts)
    rough = normalize(np.exp(-0.4 * x * x), p.weights, 1.0)
    fr0 = minimize_flow(p, rough, 1.0, SolverOptions(tol=1e-3))
    pol, _ = newton_polish(p, fr0.psi, 1.0, opts)
    np.testing.assert_allclose(pol, fr.psi, atol=1e-8)


def test_spectral_floor_below_one_body_spectrum():
    p, _ = chain()
    a = p.stiffness.toarray() + np.diag(p.weights * p.potential)
    assert p.spectral_floor < eigh(a, np.diag(p.weights), eigvals_only=True)[0]


def test_unconverged_run_raises():
    p, x = chain(mean_field=1.0)
    with pytest.raises(SolverError) as exc:
        minimize_flow(p, np.ones_like(x), 1.0, SolverOptions(tol=1e-14, max_iter=2, dt=1e-3, dt_max=1e-3))
    assert exc.value.residual > 0


def test_options_reject_unknown_keys():
    assert SolverOptions.from_mapping({"tol": 1e-5}).tol == 1e-5
    with pytest.raises(ValueError):
        SolverOptions.from_mapping({"tolerance": 1e-5})


def test_zero_wave_rejected():
    with pytest.raises(SolverError):
        normalize(np.zeros(3), np.ones(3), 1.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.0, 5.0))
def test_stationary_point_satisfies_virial_free_identity(mass, g):
    # at a converged state mu * mass = kinetic + potential + 2 * interaction
    p, x = chain(n=41, mean_field=g)
    fr = minimize_flow(p, np.exp(-x * x), mass, SolverOptions(tol=1e-9))
    assert fr.mu * mass == pytest.approx(fr.kinetic + fr.potential + 2 * fr.interaction, rel=1e-8, abs=1e-12)
