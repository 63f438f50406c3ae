"""Magnetic Hartree functional on an axisymmetric grid.

Plain mode works with densities of mass ``lambda``::

    E[rho] = int |grad sqrt(rho)|^2 + ((beta^2/4) r^2 - beta) rho
             - zeta int rho/|x| + alpha D[rho, rho]

Extended mode takes a density of mass at most one and restores the
``lambda`` prefactors; the two are related by ``rho_plain = lambda rho_ext``.
"""
from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import coulomb
from .flow import FlowProblem, SolverError, SolverOptions, minimize_flow, normalize, one_body_floor
from .grid import (Density2D, Grid2D, Wave2D, boundary_mass_fraction, build_grid, diamagnetic_term,
                   kinetic_energy, mass)

log = logging.getLogger(__name__)

OVERCRITICAL_MU = 1e-4
_KERNELS: "OrderedDict[str, coulomb.AziKernel]" = OrderedDict()
_KERNEL_SLOTS = 2


@dataclass(frozen=True)
class MHParams:
    lam: float
    beta: float = 0.0
    zeta: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")


@dataclass(frozen=True)
class EnergyBreakdown:
    K: float
    A: float
    R: float
    E: float
    mu: float

    @classmethod
    def from_parts(cls, K: float, A: float, R: float, mu: float) -> "EnergyBreakdown":
        return cls(K, A, R, K - A + R, mu)


@dataclass
class Solution:
    density: Density2D
    breakdown: EnergyBreakdown
    residual: float
    iterations: int
    converged: bool
    params: MHParams
    theta: float | None = None
    kinetic_pure: float = float("nan")
    boundary_mass: float = 0.0
    overcritical: bool = False
    clamped_mass: float | None = None
    wave: np.ndarray | None = field(default=None, repr=False)

    @property
    def energy(self) -> float:
        return self.breakdown.E

    @property
    def mass(self) -> float:
        return mass(self.density)

    def summary(self) -> dict:
        out = {"params": asdict(self.params), **asdict(self.breakdown),
               "residual": self.residual, "iterations": self.iterations,
               "converged": self.converged, "mass": self.mass,
               "kinetic_pure": self.kinetic_pure, "boundary_mass": self.boundary_mass,
               "overcritical": self.overcritical, "clamped_mass": self.clamped_mass}
        if self.theta is not None:
            out["theta"] = self.theta
        g = self.density.grid
        out["grid"] = {"r_max": g.r_max, "z_max": g.z_max, "n_r": g.shape[0], "n_z": g.shape[1]}
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), default=_json_float, indent=2)


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def get_kernel(grid: Grid2D) -> coulomb.AziKernel:
    """Azimuthal kernel for ``grid``, reusing the last couple of builds."""
    key = grid.key()
    kern = _KERNELS.get(key)
    if kern is None:
        kern = coulomb.build_kernel(grid)
        _KERNELS[key] = kern
        while len(_KERNELS) > _KERNEL_SLOTS:
            _KERNELS.popitem(last=False)
    else:
        _KERNELS.move_to_end(key)
    return kern


def default_grid(lam: float, beta: float, n_r: int = 129, n_z: int = 257) -> Grid2D:
    """Box sized to the expected extent of the minimizer.

    Along the field the density decays on a length set by the binding, which
    shrinks as ``lambda`` approaches neutrality; across it the Landau width
    ``2/sqrt(beta)`` takes over once the field is appreciable.
    """
    z_max = 20.0 if lam <= 0.5 else 40.0
    if beta > 0:
        z_max = z_max / (1.0 + 0.5 * math.sqrt(beta))
        z_max = max(z_max, 8.0 / (1.0 + math.log1p(beta)))
    r_max = z_max if beta == 0 else min(z_max, 6.5 / math.sqrt(beta) + 2.0 / (1.0 + beta))
    return build_grid(r_max, z_max, n_r, n_z)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def evaluate(rho: Density2D, params: MHParams, kern: coulomb.AziKernel | None = None,
             extended: bool = False) -> EnergyBreakdown:
    """Energy breakdown of ``rho``.

    ``K`` includes the diamagnetic terms.  ``mu`` is the Rayleigh quotient of
    the mean-field operator, ``(K - A + 2R) / mass`` in plain mode.
    """
    if np.any(rho.values < 0):
        raise ValueError("density has negative entries")
    g = rho.grid
    m = mass(rho)
    if m == 0.0:
        return EnergyBreakdown(0.0, 0.0, 0.0, 0.0, 0.0)
    kern = kern or get_kernel(g)
    kin = kinetic_energy(rho.sqrt()) + diamagnetic_term(rho, params.beta)
    att = coulomb.attraction_energy(rho)
    rep = coulomb.direct_energy(rho, kern) if params.alpha != 0 else 0.0
    if extended:
        lam = params.lam
        K, A, R = lam * kin, lam * params.zeta * att, params.alpha * lam * lam * rep
        mu = (K - A + 2.0 * R) / (lam * m)
    else:
        K, A, R = kin, params.zeta * att, params.alpha * rep
        mu = (K - A + 2.0 * R) / m
    return EnergyBreakdown.from_parts(K, A, R, mu)


class _Setup:
    """Discrete problem on the interior nodes of a grid."""

    def __init__(self, grid: Grid2D, params: MHParams, kern: coulomb.AziKernel | None = None):
        self.grid = grid
        self.params = params
        self.kern = kern or get_kernel(grid)
        self.active = grid.interior.ravel()
        act = self.active
        self.weights = grid.weights.ravel()[act]
        b = params.beta
        v = 0.25 * b * b * grid.r_nodes[:, None] ** 2 - b - params.zeta * coulomb.nuclear_potential(grid)
        self._full = np.zeros(grid.shape[0] * grid.shape[1])
        self.problem = FlowProblem(grid.stiffness[act][:, act].tocsr(), self.weights, v.ravel()[act],
                                   self._mean_field, -params.zeta**2 / 4.0 - b)
        self.problem.spectral_floor = one_body_floor(self.problem)

    def _mean_field(self, rho: np.ndarray) -> np.ndarray:
        if self.params.alpha == 0:
            return np.zeros_like(rho)
        full = self._full
        full[:] = 0.0
        full[self.active] = rho
        phi = coulomb.convolve(full.reshape(self.grid.shape), self.kern)
        return self.params.alpha * phi.ravel()[self.active]

    def expand(self, psi: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape[0] * self.grid.shape[1])
        out[self.active] = psi
        return out.reshape(self.grid.shape)

    def restrict(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float).ravel()[self.active]

    def initial(self) -> np.ndarray:
        g = self.grid
        b = self.params.beta
        z = self.params.zeta
        psi = np.exp(-0.5 * z * g.radius - 0.125 * b * g.r_nodes[:, None] ** 2)
        return self.restrict(psi)


def residual(rho: Density2D, params: MHParams, kern: coulomb.AziKernel | None = None) -> float:
    """Relative L2 defect of the Hartree equation at ``rho`` (interior nodes)."""
    s = _Setup(rho.grid, params, kern)
    psi = s.restrict(np.sqrt(rho.values))
    res, _ = s.problem.residual(psi)
    return res


def _solve(setup: _Setup, target: float, opts: SolverOptions, psi0: np.ndarray | None) -> Solution:
    p = setup.params
    start = setup.initial() if psi0 is None else setup.restrict(psi0)
    start = normalize(np.abs(start) + 1e-300, setup.weights, target)
    fr = minimize_flow(setup.problem, start, target, opts)
    wave = setup.expand(fr.psi)
    rho = Density2D(setup.grid, wave * wave)
    plain = replace(p, lam=target)
    bd = evaluate(rho, plain, setup.kern)
    bd = replace(bd, mu=fr.mu)
    sol = Solution(rho, bd, fr.residual, fr.iterations, fr.converged, p,
                   kinetic_pure=kinetic_energy(Wave2D(setup.grid, wave)),
                   boundary_mass=boundary_mass_fraction(rho), wave=wave)
    if sol.boundary_mass >= 1e-6:
        log.warning("boundary cells hold %.2g of the mass; the box is too small", sol.boundary_mass)
    return sol


def is_overcritical(sol: Solution) -> bool:
    bd = sol.breakdown
    return bd.mu > OVERCRITICAL_MU * abs(bd.E) / sol.mass


def minimize(params: MHParams, grid: Grid2D | None = None, opts: SolverOptions | None = None,
             psi0: np.ndarray | None = None, clamp: bool = True,
             kern: coulomb.AziKernel | None = None) -> Solution:
    """Ground state of the plain functional with mass ``params.lam``.

    With ``clamp`` set, a solution whose chemical potential comes out
    positive is replaced by the solution at the detected critical mass.
    """
    grid = grid or default_grid(params.lam, params.beta)
    opts = opts or SolverOptions()
    setup = _Setup(grid, params, kern)
    sol = _solve(setup, params.lam, opts, psi0)
    if clamp and is_overcritical(sol):
        crit = find_critical_mass(params, grid, opts, upper=(params.lam, sol), setup=setup)
        log.info("overcritical at lambda=%g; clamping the mass to %.6g", params.lam, crit.value)
        sol = _solve(setup, crit.value, opts, crit.wave)
        sol.overcritical = True
        sol.clamped_mass = crit.value
    return sol


def chemical_potential(sol: Solution) -> float:
    if not sol.converged:
        raise ValueError("chemical potential needs a converged solution")
    return sol.breakdown.mu


# --------------------------------------------------------------------------
# critical mass by bracketing the sign change of mu
# --------------------------------------------------------------------------

@dataclass
class CriticalEstimate:
    value: float
    lower: float
    upper: float
    mu_lower: float
    mu_upper: float
    evaluations: int
    wave: np.ndarray | None = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def find_critical_mass(params: MHParams, grid: Grid2D, opts: SolverOptions, width: float = 0.01,
                       ceiling: float | None = None, upper: tuple[float, Solution] | None = None,
                       setup: _Setup | None = None) -> CriticalEstimate:
    """Bracket the mass at which ``mu`` changes sign to within ``width``.

    Regula falsi with the Illinois modification; once the root estimate is
    stable the bracket is pinched from both sides.  ``ceiling`` defaults to
    ``zeta/alpha * (2 + (1 + beta')/2)`` with ``beta' = beta/zeta^2``.
    """
    setup = setup or _Setup(grid, params)
    ratio = params.zeta / params.alpha if params.alpha > 0 else math.inf
    if ceiling is None:
        ceiling = ratio * (2.0 + 0.5 * min(1.0 + params.beta / params.zeta**2, 8.0))
    cache: dict[float, Solution] = {}
    count = 0

    def mu_at(lam: float, guess=None) -> float:
        nonlocal count
        if lam not in cache:
            count += 1
            cache[lam] = _solve(setup, lam, opts, guess)
        return cache[lam].breakdown.mu

    def nearest(lam: float):
        if not cache:
            return None
        k = min(cache, key=lambda x: abs(x - lam))
        return cache[k].wave

    if upper is not None:
        cache[upper[0]] = upper[1]
    lo = ratio if math.isfinite(ratio) else 1.0
    if upper is not None:
        lo = min(lo, 0.9 * upper[0])
    mlo = mu_at(lo)
    while mlo >= 0:
        lo *= 0.7
        mlo = mu_at(lo, nearest(lo))
    if upper is not None and upper[1].breakdown.mu > 0:
        hi, mhi = upper[0], upper[1].breakdown.mu
    else:
        # walk up in 25% steps; mu crosses zero transversally
        hi, mhi = lo, mlo
        while mhi < 0:
            lo, mlo = hi, mhi
            hi = min(1.25 * hi, ceiling)
            if hi <= lo:
                raise SolverError(f"no sign change of mu below the search ceiling {ceiling:g}")
            mhi = mu_at(hi, nearest(hi))
    side = 0
    while hi - lo > width:
        x = (lo * mhi - hi * mlo) / (mhi - mlo)
        x = min(max(x, lo + 0.05 * width), hi - 0.05 * width)
        # once regula falsi is close, probe just beyond it to close the bracket
        if hi - lo < 20 * width:
            x = min(max(x + (0.45 * width if side <= 0 else -0.45 * width), lo + 0.05 * width),
                    hi - 0.05 * width)
        mx = mu_at(x, nearest(x))
        if mx < 0:
            lo, mlo = x, mx
            if side < 0:
                mhi *= 0.5
            side = -1
        else:
            hi, mhi = x, mx
            if side > 0:
                mlo *= 0.5
            side = 1
    mlo_true = cache[lo].breakdown.mu
    mhi_true = cache[hi].breakdown.mu
    value = (lo * mhi_true - hi * mlo_true) / (mhi_true - mlo_true)
    return CriticalEstimate(value, lo, hi, mlo_true, mhi_true, count, nearest(value))


# --------------------------------------------------------------------------
# magnetic moment and extended energies
# --------------------------------------------------------------------------

def magnetic_moment(params: MHParams, grid: Grid2D | None = None, opts: SolverOptions | None = None,
                    step: float | None = None, base: Solution | None = None) -> float:
    """``dE/dbeta`` by central differences (forward at ``beta = 0``)."""
    grid = grid or default_grid(params.lam, params.beta)
    kern = get_kernel(grid)
    h = step if step is not None else max(1e-3, 1e-2 * params.beta)
    guess = base.wave if base is not None else None
    up = minimize(replace(params, beta=params.beta + h), grid, opts, psi0=guess, kern=kern)
    if params.beta - h < 0:
        mid = base or minimize(params, grid, opts, kern=kern)
        return (up.energy - mid.energy) / h
    down = minimize(replace(params, beta=params.beta - h), grid, opts, psi0=guess, kern=kern)
    return (up.energy - down.energy) / (2.0 * h)


@dataclass
class ExtendedEnergy:
    direct: float
    via_scaling: float
    mismatch: float
    consistent: bool
    direct_solution: Solution = field(repr=False)

    @property
    def energy(self) -> float:
        return self.direct


def extended_energy(params: MHParams, grid: Grid2D | None = None, opts: SolverOptions | None = None,
                    rtol: float = 1e-3) -> ExtendedEnergy:
    """Extended-functional energy, computed directly and through the scaling identity.

    The direct run uses ``grid`` shrunk by ``1/zeta`` so that it discretizes
    the same continuum problem as the plain run on ``grid``.
    """
    zeta, alpha = params.zeta, params.alpha
    if alpha <= 0:
        raise ValueError("the scaling identity needs alpha > 0")
    plain = MHParams(alpha * params.lam / zeta, params.beta / zeta**2)
    grid = grid or default_grid(plain.lam, plain.beta)
    opts = opts or SolverOptions()
    ref = minimize(plain, grid, opts)
    via = zeta**3 / alpha * ref.energy
    if zeta == 1.0 and alpha == 1.0:
        return ExtendedEnergy(ref.energy, via, 0.0, True, ref)
    direct_grid = grid if zeta == 1.0 else grid.scaled(1.0 / zeta)
    # extended mass 1 carries lambda as a prefactor: plain mass lambda, same energy
    sol = minimize(params, direct_grid, opts)
    mism = abs(sol.energy - via) / max(abs(via), 1e-300)
    ok = mism <= rtol
    if not ok:
        log.warning("extended energy mismatch %.3g between direct run and scaling", mism)
    return ExtendedEnergy(sol.energy, via, mism, ok, sol)


def hydrogen_energy(beta: float, zeta: float, grid: Grid2D | None = None,
                    opts: SolverOptions | None = None) -> float:
    """Lowest eigenvalue of the one-body operator, from the same discretization."""
    grid = grid or default_grid(0.1, beta)
    sol = minimize(MHParams(1.0, beta, zeta, 0.0), grid, opts)
    return sol.energy
