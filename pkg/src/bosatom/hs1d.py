"""One-dimensional hyper-strong functional

    E[rho] = int (d/dz sqrt(rho))^2 - zeta rho(0) + (alpha/2) int rho^2

with its closed-form minimizer, a grid minimizer built on the shared flow,
and the linearized operator ``-d^2/dz^2 - delta(z) + rho``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import integrate

from .flow import (FlowProblem, SolverError, SolverOptions, minimize_flow, newton_polish, normalize,
                   one_body_floor)
from .mh import EnergyBreakdown

CRITICAL_MASS = 2.0
GRADING = 1.05


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Symmetric graded grid with a node at 0 and P1 quadrature weights."""
    z_nodes: np.ndarray

    @property
    def size(self) -> int:
        return self.z_nodes.size

    @property
    def i0(self) -> int:
        return self.z_nodes.size // 2

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.z_nodes)

    @property
    def weights(self) -> np.ndarray:
        h = self.spacing
        w = np.zeros(self.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w

    @property
    def z_max(self) -> float:
        return float(self.z_nodes[-1])

    def stiffness(self) -> sp.csr_matrix:
        """``psi @ S @ psi = sum_faces (psi_{k+1} - psi_k)^2 / h_k``."""
        n = self.size
        d = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
        return (d.T @ sp.diags(1.0 / self.spacing) @ d).tocsr()

    def interior(self) -> np.ndarray:
        m = np.ones(self.size, dtype=bool)
        m[0] = m[-1] = False
        return m


def graded_grid(z_max: float = 20000.0, h0: float = 0.005, ratio: float = GRADING) -> Grid1D:
    """Spacing ``h0 * ratio**k`` on either side of 0, stopping at ``z_max``."""
    if not (z_max > 0 and h0 > 0 and ratio >= 1.0):
        raise ValueError("need z_max > 0, h0 > 0 and ratio >= 1")
    pts = [0.0]
    h = h0
    while pts[-1] < z_max:
        pts.append(pts[-1] + h)
        h *= ratio
    half = np.array(pts)
    half[-1] = max(half[-1], z_max)
    return Grid1D(np.concatenate([-half[:0:-1], half]))


@dataclass(frozen=True, eq=False)
class HSDensity:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError("density does not match the grid")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def z_nodes(self) -> np.ndarray:
        return self.grid.z_nodes

    def mass(self) -> float:
        return float(self.grid.weights @ self.values)


def _csch(x):
    """``1/sinh(x)`` for ``x > 0`` without overflow."""
    e = np.exp(-x)
    return 2.0 * e / (1.0 - e * e)


@dataclass(frozen=True)
class HSClosedForm:
    lam: float

    @property
    def c(self) -> float:
        if self.lam >= CRITICAL_MASS:
            return math.inf
        return math.atanh((2.0 - self.lam) / 2.0)

    def psi(self, z):
        z = np.abs(np.asarray(z, dtype=float))
        if self.lam >= CRITICAL_MASS:
            return math.sqrt(2.0) / (2.0 + z)
        d = 2.0 - self.lam
        return d / (2.0 * math.sqrt(2.0)) * _csch(0.25 * d * z + self.c)

    def dpsi(self, z):
        """Derivative on ``z > 0``; odd continuation for ``z < 0``."""
        s = np.sign(z)
        z = np.abs(np.asarray(z, dtype=float))
        if self.lam >= CRITICAL_MASS:
            return -s * math.sqrt(2.0) / (2.0 + z) ** 2
        d = 2.0 - self.lam
        arg = 0.25 * d * z + self.c
        return -s * d * d / (8.0 * math.sqrt(2.0)) * _csch(arg) / np.tanh(arg)


def hs_exact_density(lam: float, z):
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return HSClosedForm(lam).psi(z) ** 2


def hs_energy_parts_exact(lam: float) -> tuple[float, float, float]:
    """``(K, A, R)`` of the closed-form minimizer by adaptive quadrature on the half line."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    form = HSClosedForm(min(lam, CRITICAL_MASS))
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
    kin = 2.0 * integrate.quad(lambda z: form.dpsi(z) ** 2, 0.0, np.inf, **opts)[0]
    rep = integrate.quad(lambda z: form.psi(z) ** 4, 0.0, np.inf, **opts)[0]
    att = float(form.psi(0.0)) ** 2
    return kin, att, rep


def hs_energy_exact(lam: float) -> float:
    k, a, r = hs_energy_parts_exact(lam)
    return k - a + r


def hs_critical_mass(zeta: float = 1.0, alpha: float = 1.0) -> float:
    return CRITICAL_MASS * zeta / alpha


# --------------------------------------------------------------------------
# grid minimization
# --------------------------------------------------------------------------

class _HSSetup:
    def __init__(self, grid: Grid1D, zeta: float, alpha: float):
        self.grid = grid
        act = grid.interior()
        self.active = act
        w = grid.weights[act]
        i0 = grid.i0 - 1
        v = np.zeros(w.size)
        v[i0] = -zeta / w[i0]
        self.problem = FlowProblem(grid.stiffness()[act][:, act].tocsr(), w, v,
                                   lambda rho: alpha * rho, -zeta * zeta / 4.0,
                                   sp.identity(w.size) * alpha)
        self.problem.spectral_floor = one_body_floor(self.problem)

    def expand(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[self.active] = psi
        return out


def hs_evaluate(rho: HSDensity, zeta: float = 1.0, alpha: float = 1.0) -> EnergyBreakdown:
    g = rho.grid
    psi = np.sqrt(rho.values)
    kin = float(psi @ (g.stiffness() @ psi))
    att = zeta * float(rho.values[g.i0])
    rep = 0.5 * alpha * float(g.weights @ rho.values**2)
    m = rho.mass()
    mu = (kin - att + 2.0 * rep) / m if m > 0 else 0.0
    return EnergyBreakdown.from_parts(kin, att, rep, mu)


def hs_minimize(lam: float, grid: Grid1D | None = None, opts: SolverOptions | None = None,
                zeta: float = 1.0, alpha: float = 1.0) -> tuple[HSDensity, EnergyBreakdown]:
    """Grid minimizer; the mass is capped at the critical value ``2 zeta/alpha``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = grid or graded_grid()
    opts = opts or SolverOptions()
    target = min(lam, hs_critical_mass(zeta, alpha)) if alpha > 0 else lam
    s = _HSSetup(grid, zeta, alpha)
    w = s.problem.weights
    z = grid.z_nodes[s.active]
    crit = hs_critical_mass(zeta, alpha) if alpha > 0 else math.inf
    start = min(target, 0.5 * crit)
    psi = normalize(np.exp(-0.5 * zeta * np.abs(z)), w, start)
    psi = minimize_flow(s.problem, psi, start, opts).psi
    if target > start:
        psi = _continue_mass(s.problem, psi, start, target, crit, opts)
    fr = minimize_flow(s.problem, psi, target, opts)
    rho = HSDensity(grid, s.expand(fr.psi) ** 2)
    bd = hs_evaluate(rho, zeta, alpha)
    return rho, bd


def _continue_mass(problem: FlowProblem, psi: np.ndarray, start: float, target: float,
                   crit: float, opts: SolverOptions) -> np.ndarray:
    """Walk the mass from ``start`` to ``target`` with Newton steps.

    Near the critical mass the flow slows to an algebraic crawl while the
    density grows its long tail; Newton continuation along a ladder that
    halves the distance to the critical mass reaches it in a few dozen solves.
    """
    w = problem.weights
    lam = start
    gap = crit - start
    while lam < target:
        gap *= 0.5
        nxt = crit - gap
        if nxt >= target or gap < 1e-4 * crit:
            nxt = target
        trial, _ = newton_polish(problem, normalize(psi, w, nxt), nxt, opts)
        if problem.residual(trial)[0] > opts.tol:
            gap *= 1.5  # undo part of the halving: smaller step next time
            if nxt - lam < 1e-9:
                raise SolverError(f"mass continuation stalled at {lam:.6g}")
            continue
        psi, lam = trial, nxt
    return psi


def hs_linear_residual(rho: HSDensity, lam: float | None = None) -> tuple[float, float]:
    """Defect of ``(-d^2/dz^2 - delta + rho) psi = mu psi`` at ``psi = sqrt(rho)``.

    On the node at 0 the stencil reads
    ``-(psi'(0+) - psi'(0-) + psi(0)) / w_0``, the jump condition in
    integrated form.  Returns ``(relative L2 residual, mu)``.
    """
    g = rho.grid
    act = g.interior()
    psi = np.sqrt(rho.values)
    h = g.spacing
    slope = np.diff(psi) / h
    w = g.weights
    hpsi = np.zeros(g.size)
    hpsi[1:-1] = -(slope[1:] - slope[:-1]) / w[1:-1] + rho.values[1:-1] * psi[1:-1]
    hpsi[g.i0] -= psi[g.i0] / w[g.i0]
    wa = w[act]
    norm2 = float(wa @ psi[act] ** 2)
    mu = float(wa @ (psi[act] * hpsi[act])) / norm2
    d = hpsi[act] - mu * psi[act]
    return math.sqrt(float(wa @ (d * d)) / norm2), mu


def sample_exact(lam: float, grid: Grid1D) -> HSDensity:
    vals = hs_exact_density(lam, grid.z_nodes)
    vals[0] = vals[-1] = 0.0
    return HSDensity(grid, vals)


def write_profile_csv(path, lam: float, rho: HSDensity) -> None:
    exact = hs_exact_density(lam, rho.z_nodes)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["z", "rho_exact", "rho_numeric"])
        for z, a, b in zip(rho.z_nodes, exact, rho.values):
            wr.writerow([f"{z:.17g}", f"{a:.17g}", f"{b:.17g}"])


def write_energy_csv(path, rows: list[tuple[float, float, EnergyBreakdown]]) -> None:
    """Rows of ``(lambda, E_exact, breakdown)``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["lambda", "E_exact", "E_numeric", "K", "A", "R", "mu"])
        for lam, ex, bd in rows:
            wr.writerow([f"{x:.17g}" for x in (lam, ex, bd.E, bd.K, bd.A, bd.R, bd.mu)])
