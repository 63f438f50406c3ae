"""Lowest-Landau-band confined theory.

States of the form ``Gaussian Landau orbital (r) x longitudinal profile (z)``
reduce the magnetic functional to a 1-D problem.  In the scaled coordinate
``u = L z`` with ``beta^(1/2) = L sinh(L/2)`` the energy reads

    E_conf = L^2 [ int psi'^2 - int V_A psi^2 + 1/2 int int psi^2 psi^2 V_R ]

where ``V_A`` averages ``1/|x|`` over the transverse Gaussian and ``V_R``
averages the pair Coulomb kernel over two independent transverse Gaussians.
The transverse separation of two independent unit Gaussians has the
Rayleigh law ``(s/2) exp(-s^2/4)``, so ``V_R(u; beta) = V_A(u; beta/2)`` with
the same ``L``.  Both radial integrals have the closed form

    V(u) = (c/L) sqrt(pi/2) erfcx(c |u| / sqrt(2)),   c = sqrt(beta)/L
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .flow import FlowProblem, SolverOptions, minimize_flow, newton_polish, normalize, one_body_floor
from .hs1d import Grid1D, HSDensity, graded_grid
from .mh import OVERCRITICAL_MU, EnergyBreakdown

L_RTOL = 1e-12


def l_of_beta(beta: float) -> float:
    """Positive root of ``L sinh(L/2) = sqrt(beta)`` by safeguarded Newton."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    target = math.sqrt(beta)
    lo, hi = 0.0, 1.0
    while hi * math.sinh(0.5 * hi) < target:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = x * math.sinh(0.5 * x) - target
        if f > 0:
            hi = x
        else:
            lo = x
        df = math.sinh(0.5 * x) + 0.5 * x * math.cosh(0.5 * x)
        step = x - f / df
        x_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(x_new - x) <= L_RTOL * x_new:
            return x_new
        x = x_new
    return x


# --------------------------------------------------------------------------
# int_0^X erfcx(x) dx, tabulated once with Gauss-Legendre panels
# --------------------------------------------------------------------------

_GL_T, _GL_W = np.polynomial.legendre.leggauss(20)


def _gl_integral(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[..., None] + half[..., None] * _GL_T
    return half * (special.erfcx(x) @ _GL_W)


class _ErfcxPrimitive:
    def __init__(self, x_max: float = 1e9):
        knots = list(np.arange(0.0, 1.0, 0.125))
        x = 1.0
        while x < x_max:
            knots.append(x)
            x *= 1.1
        knots.append(x)
        self.knots = np.array(knots)
        seg = _gl_integral(self.knots[:-1], self.knots[1:])
        self.values = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, big_x) -> np.ndarray:
        big_x = np.asarray(big_x, dtype=float)
        if np.any(big_x < 0) or not np.all(np.isfinite(big_x)):
            raise ValueError("argument must be finite and nonnegative")
        end = self.knots[-1]
        inside = np.minimum(big_x, end)
        k = np.clip(np.searchsorted(self.knots, inside, side="right") - 1, 0, self.knots.size - 2)
        out = self.values[k] + _gl_integral(self.knots[k], inside)
        # erfcx(x) = (1 - 1/(2x^2) + ...)/(sqrt(pi) x) past the table
        far = big_x > end
        if np.any(far):
            xf = big_x[far] if big_x.ndim else big_x
            tail = (np.log(xf / end) + 0.25 * (xf**-2 - end**-2)) / math.sqrt(math.pi)
            if big_x.ndim:
                out[far] += tail
            else:
                out = out + tail
        return out


_PRIMITIVE: _ErfcxPrimitive | None = None


def erfcx_primitive(big_x) -> np.ndarray:
    global _PRIMITIVE
    if _PRIMITIVE is None:
        _PRIMITIVE = _ErfcxPrimitive()
    return _PRIMITIVE(big_x)


def averaged_kernel(u, c: float, L: float) -> np.ndarray:
    """``int_0^inf t e^{-t^2/2} / (L sqrt(t^2/c^2 + u^2)) dt``."""
    u = np.abs(np.asarray(u, dtype=float))
    return (c / L) * math.sqrt(0.5 * math.pi) * special.erfcx(c * u / math.sqrt(2.0))


def kernel_primitive(u, c: float, L: float) -> np.ndarray:
    """``int_0^u`` of :func:`averaged_kernel`; odd in ``u``."""
    u = np.asarray(u, dtype=float)
    x = c * np.abs(u) / math.sqrt(2.0)
    return np.sign(u) * (math.sqrt(math.pi) / L) * erfcx_primitive(x)


@dataclass(frozen=True, eq=False)
class EffectiveKernels:
    beta: float
    L: float
    u: np.ndarray
    V_A: np.ndarray
    V_R: np.ndarray

    @property
    def c_attr(self) -> float:
        return math.sqrt(self.beta) / self.L

    @property
    def c_rep(self) -> float:
        return math.sqrt(0.5 * self.beta) / self.L

    def attraction(self, u) -> np.ndarray:
        return averaged_kernel(u, self.c_attr, self.L)

    def repulsion(self, u) -> np.ndarray:
        return averaged_kernel(u, self.c_rep, self.L)

    def attraction_primitive(self, u) -> np.ndarray:
        return kernel_primitive(u, self.c_attr, self.L)

    def repulsion_primitive(self, u) -> np.ndarray:
        return kernel_primitive(u, self.c_rep, self.L)


def build_kernels(beta: float, u_grid=None) -> EffectiveKernels:
    if not beta > 0:
        raise ValueError("beta must be positive")
    L = l_of_beta(beta)
    if u_grid is None:
        u_grid = graded_grid().z_nodes
    u = np.asarray(u_grid, dtype=float)
    k = EffectiveKernels(beta, L, u, np.empty(0), np.empty(0))
    object.__setattr__(k, "V_A", k.attraction(u))
    object.__setattr__(k, "V_R", k.repulsion(u))
    return k


# --------------------------------------------------------------------------
# discretization: piecewise-constant density on the dual cells of the grid
# --------------------------------------------------------------------------

def _cell_edges(grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    z = grid.z_nodes
    mid = 0.5 * (z[1:] + z[:-1])
    lo = np.concatenate([[z[0]], mid])
    hi = np.concatenate([mid, [z[-1]]])
    return lo, hi


def attraction_weights(kern: EffectiveKernels, grid: Grid1D) -> np.ndarray:
    """``int V_A`` over each node's dual cell."""
    lo, hi = _cell_edges(grid)
    return kern.attraction_primitive(hi) - kern.attraction_primitive(lo)


def repulsion_matrix(kern: EffectiveKernels, grid: Grid1D) -> np.ndarray:
    """Symmetric ``Q`` with ``1/2 rho.Q.rho`` the discrete repulsion.

    Row ``i`` integrates ``V_R(z_i - u')`` over each dual cell ``j`` exactly;
    the two collocations ``(i, j)`` and ``(j, i)`` are averaged.
    """
    z = grid.z_nodes
    lo, hi = _cell_edges(grid)
    w = grid.weights
    cells = (kern.repulsion_primitive(z[:, None] - lo[None, :])
             - kern.repulsion_primitive(z[:, None] - hi[None, :]))
    q = w[:, None] * cells
    return 0.5 * (q + q.T)


@dataclass
class ConfinedResult:
    density: HSDensity
    breakdown: EnergyBreakdown      # unscaled units
    scaled: EnergyBreakdown         # per L^2, scaled coordinate
    L: float
    beta: float
    residual: float
    iterations: int
    converged: bool
    kernels: EffectiveKernels = field(repr=False)
    clamped_mass: float | None = None

    @property
    def overcritical(self) -> bool:
        return self.clamped_mass is not None

    @property
    def energy(self) -> float:
        return self.breakdown.E


def _overcritical(problem: FlowProblem, psi: np.ndarray, lam: float) -> bool:
    kin, pot, inter, phi = problem.energy_parts(psi)
    _, mu = problem.residual(psi, phi)
    return mu > OVERCRITICAL_MU * abs(kin + pot + inter) / lam


def _ladder(problem: FlowProblem, psi: np.ndarray, start: float, target: float,
            opts: SolverOptions, step: float = 0.1, width: float = 1e-3) -> tuple[np.ndarray, float]:
    """Raise the mass from ``start`` toward ``target`` by Newton continuation.

    Stops at the critical mass if the chemical potential turns positive (or
    Newton can no longer converge, which happens just past it), located by
    bisection to ``width``.  Returns the last good profile and its mass.
    """
    w = problem.weights
    lam = start

    def attempt(m):
        trial, _ = newton_polish(problem, normalize(psi, w, m), m, opts)
        ok = problem.residual(trial)[0] <= opts.tol and not _overcritical(problem, trial, m)
        return ok, trial

    while lam < target:
        nxt = min(lam + step, target)
        ok, trial = attempt(nxt)
        if ok:
            psi, lam = trial, nxt
            continue
        lo, hi = lam, nxt
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            ok, trial = attempt(mid)
            if ok:
                psi, lo = trial, mid
            else:
                hi = mid
        return psi, lo
    return psi, lam


def confined_minimize(lam: float, beta: float, grid: Grid1D | None = None,
                      opts: SolverOptions | None = None, alpha: float = 1.0) -> ConfinedResult:
    """Minimize the confined functional over longitudinal profiles of mass ``lam``.

    The profile lives on the scaled coordinate ``u``; energies in the result's
    ``breakdown`` are in the units of the 2-D functional (``L^2`` times the
    scaled ones).  Above the critical mass of the confined theory the mass
    is clamped to it, as in the 2-D solver.
    """
    if not (lam > 0 and beta > 0):
        raise ValueError("lambda and beta must be positive")
    grid = grid or graded_grid()
    opts = opts or SolverOptions()
    kern = build_kernels(beta)
    act = grid.interior()
    w = grid.weights[act]
    a = attraction_weights(kern, grid)[act]
    q = repulsion_matrix(kern, grid)[np.ix_(act, act)] * alpha
    mfm = q / w[:, None]
    prob = FlowProblem(grid.stiffness()[act][:, act].tocsr(), w, -a / w,
                       lambda rho: mfm @ rho, float(np.min(-a / w)), mfm)
    prob.spectral_floor = one_body_floor(prob)
    z = grid.z_nodes[act]
    start = min(lam, 1.0)
    psi = normalize(np.exp(-0.5 * np.abs(z)), w, start)
    fr = minimize_flow(prob, psi, start, opts)
    clamped = None
    if lam > start:
        psi, mass_reached = _ladder(prob, fr.psi, start, lam, opts)
        if mass_reached < lam:
            clamped = mass_reached
        fr = minimize_flow(prob, psi, mass_reached, opts)
    full = np.zeros(grid.size)
    full[act] = fr.psi
    rho = HSDensity(grid, full * full)
    k = float(fr.psi @ (prob.stiffness @ fr.psi))
    att = float(a @ (fr.psi**2))
    rep = 0.5 * float(fr.psi**2 @ (q @ fr.psi**2))
    scaled = EnergyBreakdown.from_parts(k, att, rep, fr.mu)
    L2 = kern.L**2
    unscaled = EnergyBreakdown.from_parts(L2 * k, L2 * att, L2 * rep, L2 * fr.mu)
    return ConfinedResult(rho, unscaled, scaled, kern.L, beta, fr.residual, fr.iterations,
                          fr.converged, kern, clamped)


def write_convergence_csv(path, rows) -> None:
    """Rows of ``(beta, L, E_conf, E_conf/L^2, E_HS)``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["beta", "L", "E_conf", "E_conf_over_L2", "E_HS"])
        for row in rows:
            wr.writerow([f"{x:.17g}" for x in row])
