"""Scans over lambda and beta, and named checks of the known identities and bounds.

Every check record carries an ``anchor``: a short name of the statement
being tested, so that a failing record in a JSON summary is self-explaining.
Constants that the theory leaves unspecified are fitted and reported; only
signs, orderings and trends are asserted.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import mh
from .flow import SolverError, SolverOptions
from .grid import Density2D, Grid2D
from .hs1d import hs_energy_exact
from .llband import confined_minimize, l_of_beta
from .mh import MHParams, Solution

log = logging.getLogger(__name__)

VIRIAL_TOL = 1e-2
IDENTITY_TOL = 1e-2
RATIO_TOL = 2e-2
MOMENT_TOL = 2e-2
SLOPE_TOL = 0.02
SCALING_TOL = 1e-3
UNIQUENESS_TOL = 1e-3
GAP_CONSTANT_MAX = 1.0
SOBOLEV_CONSTANT = 3.0 * (0.5 * math.pi) ** (4.0 / 3.0)


@dataclass
class Check:
    name: str
    anchor: str
    passed: bool
    value: float = float("nan")
    limit: float = float("nan")
    detail: str = ""


@dataclass
class ScanResult:
    axis: str
    points: list[tuple[float, dict]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, anchor: str, passed: bool, value: float = float("nan"),
            limit: float = float("nan"), detail: str = "") -> Check:
        c = Check(name, anchor, bool(passed), float(value), float(limit), detail)
        self.checks.append(c)
        return c

    def sort(self) -> None:
        self.points.sort(key=lambda p: p[0])

    def extend(self, other: "ScanResult", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(replace(c, name=prefix + c.name))

    def summary(self) -> dict:
        return {"axis": self.axis, "passed": self.passed,
                "points": [{self.axis: x, **row} for x, row in self.points],
                "checks": [asdict(c) for c in self.checks]}

    def to_json(self, config: dict | None = None) -> str:
        out = self.summary()
        if config is not None:
            out["config"] = config
        return json.dumps(out, indent=2, default=_plain)

    def write_csv(self, path) -> None:
        """One row per point; scalar entries only, 17 significant digits."""
        cols: list[str] = []
        for _, row in self.points:
            for k, v in row.items():
                if k not in cols and _is_scalar(v):
                    cols.append(k)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([self.axis, *cols])
            for x, row in self.points:
                wr.writerow([_fmt(x), *(_fmt(row.get(k, "")) for k in cols)])

    def write_json(self, path, config: dict | None = None) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(config))


def _is_scalar(v) -> bool:
    return isinstance(v, (bool, int, float, np.floating, np.integer)) or v is None


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)) or v is None or v == "":
        return str(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _plain(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


def _row(sol: Solution) -> dict:
    bd = sol.breakdown
    return {"E": bd.E, "K": bd.K, "A": bd.A, "R": bd.R, "mu": bd.mu, "residual": sol.residual,
            "mass": sol.mass, "converged": sol.converged, "overcritical": sol.overcritical,
            "boundary_mass": sol.boundary_mass}


# --------------------------------------------------------------------------
# worker pool
# --------------------------------------------------------------------------

def _solve_job(job: tuple[MHParams, Grid2D, SolverOptions]) -> Solution:
    params, grid, opts = job
    return mh.minimize(params, grid, opts)


def solve_many(params: Sequence[MHParams], grid: Grid2D, opts: SolverOptions,
               jobs: int = 1, warm: bool = True) -> list[Solution]:
    """Solve every parameter set on one grid; results follow the input order.

    With ``jobs == 1`` each solve is warm-started from the previous one,
    which is how a ladder is usually walked.
    """
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_solve_job, [(p, grid, opts) for p in params]))
    kern = mh.get_kernel(grid)
    out: list[Solution] = []
    for p in params:
        guess = out[-1].wave if (warm and out) else None
        out.append(mh.minimize(p, grid, opts, psi0=guess, kern=kern))
    return out


# --------------------------------------------------------------------------
# checks on a single solution
# --------------------------------------------------------------------------

def sobolev_gap(sol: Solution) -> tuple[float, float]:
    """``(K_pure, C (int rho^3)^(1/3))``: the first must dominate the second."""
    rho = sol.density
    cube = float(np.sum(rho.grid.weights * rho.values**3))
    return sol.kinetic_pure, SOBOLEV_CONSTANT * cube ** (1.0 / 3.0)


def identity_suite(sol: Solution, theta: float | None = None, hydrogen: tuple[float, float] | None = None,
                   critical: bool = False, virial_tol: float = VIRIAL_TOL) -> ScanResult:
    """Named checks of the identities and bounds that apply at ``sol``'s parameters.

    ``theta`` enables the magnetic-moment identity; ``hydrogen`` is the pair
    ``(E_hyd(beta, zeta), E_hyd(beta, zeta - lambda alpha/2))`` from the same
    discretization; ``critical`` adds the energy ratios expected at the
    critical mass.
    """
    p = sol.params
    bd = sol.breakdown
    lam = sol.mass
    E, K, A, R, mu = bd.E, bd.K, bd.A, bd.R, bd.mu
    out = ScanResult("lambda", [(lam, _row(sol))])
    out.add("converged", "stationary point of the functional", sol.converged, sol.residual)
    out.add("bookkeeping", "E = K - A + R", abs(E - (K - A + R)) <= 1e-12 * max(abs(E), 1.0),
            E - (K - A + R))
    rel = abs(R - (-E + lam * mu)) / max(abs(E), abs(R))
    out.add("repulsion_identity", "R = -E + lambda mu", rel <= IDENTITY_TOL, rel, IDENTITY_TOL)
    subcritical = not (sol.overcritical or critical)
    if subcritical:
        out.add("mu_negative", "mu < 0 below the critical mass", mu < 0, mu, 0.0)
        out.add("virial_inequality", "R < |E| below the critical mass", R < abs(E), R - abs(E), 0.0)
    if p.zeta == 1.0 and p.alpha == 1.0:
        lower = -(0.25 + p.beta) * lam
        out.add("simple_lower_bound", "E >= -(1/4 + beta) lambda", E >= lower, E, lower)
        if lam <= 2.0:
            upper = -0.25 * lam * (1.0 - 0.5 * lam) ** 2
            out.add("simple_upper_bound", "E <= -(1/4) lambda (1 - lambda/2)^2", E <= upper, E, upper)
    k_pure, sob = sobolev_gap(sol)
    out.add("sobolev", "int |grad sqrt rho|^2 >= 3 (pi/2)^(4/3) (int rho^3)^(1/3)", k_pure >= sob,
            k_pure, sob)
    if p.beta == 0.0:
        v1 = abs(K - abs(E)) / abs(E)
        v2 = abs(2.0 * K - (A - R)) / abs(E)
        out.add("virial_K", "virial equality K = |E|", v1 <= virial_tol, v1, virial_tol)
        out.add("virial_AR", "virial equality 2K = A - R", v2 <= virial_tol, v2, virial_tol)
    if theta is not None and p.beta > 0:
        d = abs(p.beta * theta - 0.5 * (K - abs(E)))
        out.add("magnetic_moment", "beta theta = (K - |E|)/2", d <= MOMENT_TOL * abs(E), d,
                MOMENT_TOL * abs(E))
    if hydrogen is not None and lam * p.alpha < 2.0 * p.zeta:
        h_lo, h_hi = hydrogen
        slack = 1e-8 * abs(E)
        out.add("hydrogen_lower", "E > lambda E_hyd(beta, zeta)", E > lam * h_lo - slack, E, lam * h_lo)
        out.add("hydrogen_upper", "E < lambda E_hyd(beta, zeta - lambda alpha/2)",
                E < lam * h_hi + slack, E, lam * h_hi)
    if critical and p.beta == 0.0:
        a = abs(E)
        worst = max(abs(K / a - 1.0), abs(A / a - 3.0) / 3.0, abs(R / a - 1.0))
        out.add("critical_ratios", "|E| : K : A : R = 1 : 1 : 3 : 1 at the critical mass",
                worst <= RATIO_TOL, worst, RATIO_TOL)
    return out


def hydrogen_pair(sol: Solution, opts: SolverOptions | None = None) -> tuple[float, float]:
    """Hydrogen energies bracketing ``sol``, on ``sol``'s grid."""
    p = sol.params
    g = sol.density.grid
    lo = mh.hydrogen_energy(p.beta, p.zeta, g, opts)
    hi = mh.hydrogen_energy(p.beta, p.zeta - 0.5 * sol.mass * p.alpha, g, opts)
    return lo, hi


def uniqueness_probe(params: MHParams, grid: Grid2D | None = None, opts: SolverOptions | None = None,
                     seed: int = 0, tol: float = UNIQUENESS_TOL) -> ScanResult:
    """Two minimizations from independent random positive starts must agree."""
    grid = grid or mh.default_grid(params.lam, params.beta)
    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed if opts.seed is None else opts.seed)
    kern = mh.get_kernel(grid)
    sols = []
    for _ in range(2):
        start = rng.uniform(0.05, 1.0, grid.shape) * np.exp(-0.25 * grid.radius)
        sols.append(mh.minimize(params, grid, opts, psi0=start, kern=kern))
    d = float(np.sum(grid.weights * np.abs(sols[0].density.values - sols[1].density.values)))
    out = ScanResult("lambda", [(params.lam, _row(s)) for s in sols])
    out.add("uniqueness", "unique minimizer: |rho1 - rho2|_1 <= tol lambda", d <= tol * params.lam, d,
            tol * params.lam)
    return out


# --------------------------------------------------------------------------
# ladders
# --------------------------------------------------------------------------

def scan_lambda(ladder: Iterable[float], beta: float = 0.0, grid: Grid2D | None = None,
                opts: SolverOptions | None = None, jobs: int = 1, tol: float = 1e-6) -> ScanResult:
    """Energies along a mass ladder; checks monotone decrease, convexity, and growth of ``E/lambda``."""
    lams = sorted(float(x) for x in ladder)
    grid = grid or mh.default_grid(max(lams), beta)
    opts = opts or SolverOptions()
    sols = solve_many([MHParams(x, beta) for x in lams], grid, opts, jobs)
    out = ScanResult("lambda", [(x, _row(s)) for x, s in zip(lams, sols)])
    e = np.array([s.energy for s in sols])
    x = np.array(lams)
    slack = tol * np.max(np.abs(e))
    for s in sols:
        out.extend(identity_suite(s), prefix=f"lambda={s.params.lam:g}:")
    if x.size < 2:
        return out
    de = np.diff(e)
    out.add("decreasing", "E nonincreasing in lambda", bool(np.all(de <= slack)), float(np.max(de)), slack)
    per = e / x
    dper = np.diff(per)
    out.add("per_charge_increasing", "E/lambda nondecreasing in lambda", bool(np.all(dper >= -slack)),
            float(np.min(dper)), -slack)
    if x.size >= 3:
        h1, h2 = x[1:-1] - x[:-2], x[2:] - x[1:-1]
        second = ((e[2:] - e[1:-1]) / h2 - (e[1:-1] - e[:-2]) / h1) / (0.5 * (h1 + h2))
        out.add("convex", "E convex in lambda", bool(np.all(second >= -slack / np.min(h1) ** 2)),
                float(np.min(second)), 0.0)
    return out


def scan_beta(ladder: Iterable[float], lam: float = 1.0, grid: Grid2D | None = None,
              opts: SolverOptions | None = None, jobs: int = 1) -> ScanResult:
    """Energies along a field ladder on one grid, with the identity suite at each point."""
    betas = sorted(float(b) for b in ladder)
    grid = grid or mh.default_grid(lam, max(betas))
    opts = opts or SolverOptions()
    sols = solve_many([MHParams(lam, b) for b in betas], grid, opts, jobs)
    out = ScanResult("beta", [(b, _row(s)) for b, s in zip(betas, sols)])
    for s in sols:
        out.extend(identity_suite(s), prefix=f"beta={s.params.beta:g}:")
    return out


# --------------------------------------------------------------------------
# critical charge
# --------------------------------------------------------------------------

def critical_charge(beta: float, opts: SolverOptions | None = None, grid: Grid2D | None = None,
                    width: float = 0.01, ceiling: float | None = None) -> mh.CriticalEstimate:
    """Mass at which the chemical potential crosses zero, bracketed to ``width``.

    Raises :class:`SolverError` if no crossing is found below ``ceiling``.
    """
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    opts = opts or SolverOptions()
    params = MHParams(1.2, beta)
    grid = grid or mh.default_grid(params.lam, beta)
    return mh.find_critical_mass(params, grid, opts, width=width, ceiling=ceiling)


def critical_scan(betas: Iterable[float], opts: SolverOptions | None = None,
                  grids: dict[float, Grid2D] | None = None, width: float = 0.01) -> ScanResult:
    out = ScanResult("beta")
    for b in sorted(float(x) for x in betas):
        g = (grids or {}).get(b)
        est = critical_charge(b, opts, g, width)
        out.points.append((b, {"lambda_c": est.value, "lower": est.lower, "upper": est.upper,
                               "mu_lower": est.mu_lower, "mu_upper": est.mu_upper,
                               "evaluations": est.evaluations}))
        out.add(f"beta={b:g}:width", "critical charge bracketed to the requested width",
                est.width <= width + 1e-12, est.width, width)
        out.add(f"beta={b:g}:above_one", "lambda_c(beta) > 1 for all beta", est.lower > 1.0, est.lower, 1.0)
    return out


# --------------------------------------------------------------------------
# regime limits
# --------------------------------------------------------------------------

def small_beta_check(lam: float, ladder: Iterable[float], grid: Grid2D | None = None,
                     opts: SolverOptions | None = None, slope_tol: float = SLOPE_TOL) -> ScanResult:
    """Linear response of the energy to a weak field.

    The difference quotient ``q(beta) = (E(lam, beta) - E(lam, 0))/beta`` is
    ``-lam + (beta/4) int r^2 rho_0 + O(beta^3)``; its polynomial
    extrapolation to ``beta = 0`` (quadratic through up to three points) is
    the reported slope.  All points share one grid, so
    both sandwich inequalities hold for the discrete energies too.
    """
    betas = sorted(float(b) for b in ladder)
    if not betas or betas[0] <= 0 or betas[-1] > 0.2:
        raise ValueError("the ladder must lie in (0, 0.2]")
    grid = grid or mh.default_grid(lam, 0.0)
    opts = opts or SolverOptions()
    kern = mh.get_kernel(grid)
    base = mh.minimize(MHParams(lam), grid, opts, kern=kern)
    rho0 = base.density
    r2 = float(np.sum(grid.weights * grid.r_nodes[:, None] ** 2 * rho0.values))
    out = ScanResult("beta", [(0.0, _row(base))])
    quotients = []
    for b in betas:
        sol = mh.minimize(MHParams(lam, b), grid, opts, psi0=base.wave, kern=kern)
        q = (sol.energy - base.energy) / b
        quotients.append(q)
        lo = base.energy - b * lam
        hi = lo + 0.25 * b * b * r2
        slack = 1e-9 * abs(base.energy)
        out.points.append((b, {**_row(sol), "quotient": q, "sandwich_lower": lo, "sandwich_upper": hi}))
        out.add(f"beta={b:g}:sandwich_lower", "E(lam, 0) - beta lam <= E(lam, beta)",
                sol.energy >= lo - slack, sol.energy - lo, 0.0)
        out.add(f"beta={b:g}:sandwich_upper",
                "E(lam, beta) <= E(lam, 0) - beta lam + (beta^2/4) int r^2 rho_0",
                sol.energy <= hi + slack, hi - sol.energy, 0.0)
    # q bends visibly on (0, 0.05] for soft states; extrapolate with the
    # quadratic through the ladder rather than a straight line
    deg = min(2, len(betas) - 1)
    coef = np.polyfit(betas, quotients, deg) if deg > 0 else np.array([quotients[0]])
    slope = float(coef[-1])
    linear = float(np.polyfit(betas, quotients, 1)[-1]) if deg > 0 else slope
    out.add("slope", "E(lam, beta) = E(lam, 0) - beta lam + O(beta^2)",
            abs(slope + lam) <= slope_tol * max(lam, 1.0), slope, -lam,
            detail=f"degree-{deg} extrapolation of the quotient; straight-line intercept {linear:.6g}; "
                   f"(1/4) int r^2 rho_0 = {0.25 * r2:.6g}")
    return out


def large_beta_check(lam: float, ladder: Iterable[float], opts: SolverOptions | None = None,
                     constant_max: float = GAP_CONSTANT_MAX) -> ScanResult:
    """Confined energies per ``L(beta)^2`` against the hyper-strong limit.

    Asserts that the gap shrinks strictly along the ladder and that the
    fitted constant ``C`` in ``gap <= C lam (1 + |E_HS|)/L`` stays below
    ``constant_max``.
    """
    betas = sorted(float(b) for b in ladder)
    opts = opts or SolverOptions()
    e_hs = hs_energy_exact(lam)
    out = ScanResult("beta")
    gaps, scaled_gaps = [], []
    for b in betas:
        res = confined_minimize(lam, b, opts=opts)
        L = res.L
        per = res.energy / (L * L)
        gap = per - e_hs
        gaps.append(abs(gap))
        scaled_gaps.append(L * abs(gap))
        out.points.append((b, {"L": L, "E_conf": res.energy, "E_conf_over_L2": per, "E_HS": e_hs,
                               "gap": gap, "L_gap": L * gap, "residual": res.residual,
                               "converged": res.converged, "clamped_mass": res.clamped_mass}))
    g = np.array(gaps)
    out.add("gap_decreasing", "E_conf/L^2 -> E_HS monotonically", bool(np.all(np.diff(g) < 0)),
            float(np.max(np.diff(g))) if g.size > 1 else float("nan"), 0.0,
            detail="gaps " + ", ".join(f"{x:.6g}" for x in gaps))
    c_fit = max(scaled_gaps) / (lam * (1.0 + abs(e_hs)))
    out.add("gap_bounded", "L (E_conf/L^2 - E_HS) bounded", c_fit <= constant_max, c_fit, constant_max,
            detail="L*gap " + ", ".join(f"{x:.6g}" for x in scaled_gaps))
    return out


def subset_ordering(lam: float, beta: float, grid: Grid2D | None = None,
                    opts: SolverOptions | None = None) -> ScanResult:
    """The confined states are a subset of all states, so ``E_conf >= E_MH``."""
    opts = opts or SolverOptions()
    sol = mh.minimize(MHParams(lam, beta), grid, opts)
    conf = confined_minimize(lam, beta, opts=opts)
    out = ScanResult("beta", [(beta, {**_row(sol), "E_conf": conf.energy})])
    out.add("subset_ordering", "E_conf(lam, beta) >= E_MH(lam, beta)", conf.energy >= sol.energy,
            conf.energy - sol.energy, 0.0)
    return out


# --------------------------------------------------------------------------
# scaling relation between extended and plain energies
# --------------------------------------------------------------------------

DEFAULT_SCALING_SAMPLES = (MHParams(1.0, 0.0, 2.0, 1.0), MHParams(1.0, 4.0, 2.0, 2.0),
                           MHParams(0.5, 0.0, 1.0, 1.0))


def scaling_audit(samples: Iterable[MHParams] = DEFAULT_SCALING_SAMPLES, grid: Grid2D | None = None,
                  opts: SolverOptions | None = None, rtol: float = SCALING_TOL) -> ScanResult:
    """``E_ext(lam, beta, zeta, alpha) = zeta^3/alpha E(alpha lam/zeta, beta/zeta^2)``, both sides solved."""
    out = ScanResult("sample")
    for i, p in enumerate(samples):
        if not (p.zeta > 0 and p.alpha > 0):
            raise ValueError("scaling needs zeta > 0 and alpha > 0")
        ext = mh.extended_energy(p, grid, opts, rtol)
        out.points.append((float(i), {"lam": p.lam, "beta": p.beta, "zeta": p.zeta, "alpha": p.alpha,
                                      "E_direct": ext.direct, "E_scaled": ext.via_scaling,
                                      "mismatch": ext.mismatch}))
        out.add(f"sample{i}", "E_ext = zeta^3/alpha E(alpha lam/zeta, beta/zeta^2)", ext.mismatch <= rtol,
                ext.mismatch, rtol)
    return out


def run_checked(fn: Callable[..., ScanResult], *args, **kw) -> ScanResult:
    """Run ``fn``; a solver failure becomes a failed record instead of an exception."""
    try:
        return fn(*args, **kw)
    except SolverError as exc:
        out = ScanResult("none")
        out.add(getattr(fn, "__name__", "scan"), "solver convergence", False, exc.residual, detail=str(exc))
        return out
