"""Normalized imaginary-time gradient flow for Hartree-type functionals.

One code path serves the 2-D magnetic solver and the 1-D longitudinal
solvers.  The functional is

    E[psi] = psi^T S psi + sum_i w_i v_i psi_i^2 + 1/2 sum_i w_i rho_i phi_i[rho]

with ``rho = psi^2``, a positive semidefinite stiffness ``S``, quadrature
weights ``w``, a fixed one-body potential ``v`` and a linear, positive
mean-field map ``rho -> phi``.  Each step is a backward-Euler step of the
normalized flow with the mean field frozen at the current density,

    (W + tau (S + W (v + phi_n) - s W)) psi' = W psi_n,

followed by rescaling ``psi'`` to the prescribed mass.  ``s`` lies below the
spectrum of the one-body operator; since ``phi >= 0`` the matrix stays
symmetric positive definite for every ``tau``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when a minimization fails; carries the last residual."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class SolverOptions:
    tol: float = 1e-6
    energy_tol: float = 1e-10
    max_iter: int = 4000
    dt: float = 1e3
    dt_min: float = 1e-3
    dt_max: float = 1e3
    seed: int | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "SolverOptions":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown solver option(s): {sorted(extra)}")
        return cls(**data)


@dataclass
class FlowProblem:
    stiffness: sp.spmatrix
    weights: np.ndarray
    potential: np.ndarray
    mean_field: Callable[[np.ndarray], np.ndarray]
    spectral_floor: float
    # explicit matrix M with phi = M rho; enables the Newton polish
    mean_field_matrix: np.ndarray | sp.spmatrix | None = None

    def energy_parts(self, psi: np.ndarray) -> tuple[float, float, float, np.ndarray]:
        """(kinetic, fixed-potential, interaction, mean field) at ``psi``."""
        rho = psi * psi
        phi = self.mean_field(rho)
        kin = float(psi @ (self.stiffness @ psi))
        pot = float(np.sum(self.weights * self.potential * rho))
        inter = 0.5 * float(np.sum(self.weights * rho * phi))
        return kin, pot, inter, phi

    def residual(self, psi: np.ndarray, phi: np.ndarray | None = None) -> tuple[float, float]:
        """Relative weighted L2 defect of ``H psi = mu psi`` and the Rayleigh quotient ``mu``."""
        if phi is None:
            phi = self.mean_field(psi * psi)
        w = self.weights
        hpsi = (self.stiffness @ psi) / w + (self.potential + phi) * psi
        norm2 = float(np.sum(w * psi * psi))
        if norm2 == 0.0:
            return 0.0, 0.0
        mu = float(np.sum(w * psi * hpsi)) / norm2
        d = hpsi - mu * psi
        return float(np.sqrt(np.sum(w * d * d) / norm2)), mu


@dataclass
class FlowResult:
    psi: np.ndarray
    energy: float
    kinetic: float
    potential: float
    interaction: float
    mu: float
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def normalize(psi: np.ndarray, weights: np.ndarray, target: float) -> np.ndarray:
    m = float(np.sum(weights * psi * psi))
    if m <= 0:
        raise SolverError("wavefunction vanished during the flow")
    return psi * np.sqrt(target / m)


class _Stepper:
    def __init__(self, problem: FlowProblem):
        self.p = problem
        self.base = (problem.stiffness + sp.diags(problem.weights * problem.potential)).tocsc()

    def step(self, psi: np.ndarray, phi: np.ndarray, tau: float) -> np.ndarray:
        w = self.p.weights
        diag = w * (1.0 - tau * self.p.spectral_floor + tau * phi)
        a = (self.base * tau + sp.diags(diag)).tocsc()
        return spla.spsolve(a, w * psi) if a.shape[0] < 64 else spla.splu(a).solve(w * psi)


def one_body_floor(problem: FlowProblem, margin: float = 1e-3) -> float:
    """Lowest eigenvalue of ``W^-1 S + v`` minus ``margin``; a safe spectral shift."""
    w = problem.weights
    a = (problem.stiffness + sp.diags(w * problem.potential)).tocsc()
    m = sp.diags(w).tocsc()
    n = w.size
    if n <= 400:
        from scipy.linalg import eigh
        e0 = eigh(a.toarray(), m.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
    else:
        lo = problem.spectral_floor
        # fixed start vector: ARPACK's random default would make runs non-reproducible
        e0 = spla.eigsh(a, k=1, M=m, sigma=lo - 1.0, which="LM", v0=np.ones(n),
                        return_eigenvectors=False)[0]
    return float(e0) - margin * (1.0 + abs(e0))


def minimize_flow(problem: FlowProblem, psi0: np.ndarray, target_mass: float,
                  opts: SolverOptions, raise_on_failure: bool = True) -> FlowResult:
    """Run the flow from ``psi0`` until the Euler-Lagrange residual drops below ``opts.tol``.

    ``problem.spectral_floor`` must lie below the spectrum of the one-body
    operator ``W^-1 S + v``; :func:`one_body_floor` gives a tight choice.
    """
    w = problem.weights
    psi = normalize(np.abs(np.asarray(psi0, dtype=float)), w, target_mass)
    stepper = _Stepper(problem)
    tau = opts.dt
    kin, pot, inter, phi = problem.energy_parts(psi)
    energy = kin + pot + inter
    res, mu = problem.residual(psi, phi)
    history = [(0, energy, res, mu)]
    rising = 0
    calm = 0
    it = 0
    rejected = 0
    converged = False
    last_de = np.inf
    while it < opts.max_iter:
        if res <= opts.tol and last_de <= opts.energy_tol * max(abs(energy), 1e-300):
            converged = True
            break
        it += 1
        new = normalize(np.abs(stepper.step(psi, phi, tau)), w, target_mass)
        nk, npot, ninter, nphi = problem.energy_parts(new)
        new_energy = nk + npot + ninter
        noise = 1e-12 * max(abs(energy), 1e-3)
        if new_energy > energy + noise and tau > opts.dt_min:
            # reject and retry with a smaller step
            tau = max(0.5 * tau, opts.dt_min)
            it -= 1
            rejected += 1
            calm = 0
            if rejected > 60:
                break
            continue
        rising = rising + 1 if new_energy > energy + noise else 0
        if rising >= 10:
            raise SolverError("energy increased over 10 consecutive steps; time step unstable",
                              residual=res, iterations=it)
        last_de = abs(new_energy - energy)
        psi, phi = new, nphi
        kin, pot, inter, energy = nk, npot, ninter, new_energy
        res, mu = problem.residual(psi, phi)
        history.append((it, energy, res, mu))
        calm += 1
        if calm >= 20 and tau < opts.dt_max:
            tau = min(2.0 * tau, opts.dt_max)
            calm = 0
    if not converged and problem.mean_field_matrix is not None and res < 1e-2:
        psi, it2 = newton_polish(problem, psi, target_mass, opts)
        it += it2
        kin, pot, inter, phi = problem.energy_parts(psi)
        energy = kin + pot + inter
        res, mu = problem.residual(psi, phi)
        history.append((it, energy, res, mu))
        converged = res <= opts.tol
    if not converged and raise_on_failure:
        raise SolverError(f"no convergence after {it} iterations (residual {res:.3g})",
                          residual=res, iterations=it)
    return FlowResult(psi, energy, kin, pot, inter, mu, res, it, converged, history)


def newton_polish(problem: FlowProblem, psi: np.ndarray, target_mass: float,
                  opts: SolverOptions, max_steps: int = 30) -> tuple[np.ndarray, int]:
    """Newton iteration on ``(H[psi] - mu) psi = 0``, ``psi.W.psi = target_mass``.

    Needs ``problem.mean_field_matrix``; meant for the small 1-D problems,
    where the flow slows down near the critical mass.  Steps that do not
    reduce the residual are halved.
    """
    m = problem.mean_field_matrix
    mdense = m.toarray() if sp.issparse(m) else np.asarray(m)
    s_dense = problem.stiffness.toarray()
    w = problem.weights
    n = w.size
    res, mu = problem.residual(psi)
    steps = 0
    for steps in range(1, max_steps + 1):
        if res <= 0.1 * opts.tol:
            break
        rho = psi * psi
        phi = mdense @ rho
        f1 = s_dense @ psi + w * (problem.potential + phi - mu) * psi
        f2 = 0.5 * (float(w @ rho) - target_mass)
        jac = np.empty((n + 1, n + 1))
        jac[:n, :n] = s_dense + np.diag(w * (problem.potential + phi - mu))
        jac[:n, :n] += 2.0 * (w * psi)[:, None] * mdense * psi[None, :]
        jac[:n, n] = -w * psi
        jac[n, :n] = w * psi
        jac[n, n] = 0.0
        delta = np.linalg.solve(jac, -np.concatenate([f1, [f2]]))
        t = 1.0
        while t > 1e-4:
            trial = normalize(np.abs(psi + t * delta[:n]), w, target_mass)
            tres, tmu = problem.residual(trial)
            if tres < res:
                psi, res, mu = trial, tres, tmu
                break
            t *= 0.5
        else:
            break
    return psi, steps
