"""Command-line front end.

Every command prints a JSON summary (with the resolved configuration) to
stdout and, given ``--out DIR``, writes it with CSV tables into ``DIR``.
Exit status: 0 when every requested check passes and every solve
converges, 1 on a failed check, 2 on solver non-convergence, 3 on a bad
configuration.
"""
from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import hs1d, llband, mh, regimes
from .flow import SolverError, SolverOptions
from .grid import build_grid, write_density
from .regimes import ScanResult

EXIT_OK, EXIT_CHECK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3

COMMANDS = ("solve", "hs", "confined", "scan-beta", "scan-lambda", "critical", "scaling-audit", "verify")

# flat dotted keys accepted in --config files, with their defaults
DEFAULTS: dict[str, object] = {
    "params.lam": 1.0,
    "params.beta": 0.0,
    "params.zeta": 1.0,
    "params.alpha": 1.0,
    "grid.n_r": 129,
    "grid.n_z": 257,
    "grid.r_max": None,
    "grid.z_max": None,
    "solver.tol": 1e-6,
    "solver.max_iter": 4000,
    "solver.seed": None,
    "ladder": None,
    "jobs": 1,
    "out": None,
    "quick": False,
    "check": False,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        unknown = set(self.values) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        v = self.values
        for k in ("params.lam", "params.zeta"):
            if not float(v[k]) > 0:
                raise ConfigError(f"{k} must be positive")
        for k in ("params.beta", "params.alpha"):
            if not float(v[k]) >= 0:
                raise ConfigError(f"{k} must be nonnegative")
        if int(v["grid.n_z"]) % 2 == 0 or int(v["grid.n_r"]) < 8 or int(v["grid.n_z"]) < 8:
            raise ConfigError("grid needs n_r >= 8 and odd n_z >= 9")
        for k in ("grid.r_max", "grid.z_max"):
            if v[k] is not None and not float(v[k]) > 0:
                raise ConfigError(f"{k} must be positive")
        if not float(v["solver.tol"]) > 0 or int(v["solver.max_iter"]) < 1 or int(v["jobs"]) < 1:
            raise ConfigError("tol, max_iter and jobs must be positive")
        if v["ladder"] is not None:
            lad = v["ladder"]
            if isinstance(lad, str):
                lad = [float(x) for x in lad.split(",") if x.strip()]
            v["ladder"] = [float(x) for x in lad]

    @classmethod
    def resolve(cls, command: str, config_path: str | None, flags: dict) -> "RunConfig":
        values = dict(DEFAULTS)
        if config_path:
            try:
                data = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config must be a JSON object")
            unknown = set(data) - set(DEFAULTS) - {"command"}
            if unknown:
                raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
            if data.get("command", command) != command:
                raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
            values.update({k: v for k, v in data.items() if k != "command"})
        values.update({k: v for k, v in flags.items() if v is not None})
        try:
            return cls(command, values)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @property
    def params(self) -> mh.MHParams:
        v = self.values
        return mh.MHParams(float(v["params.lam"]), float(v["params.beta"]), float(v["params.zeta"]),
                           float(v["params.alpha"]))

    @property
    def options(self) -> SolverOptions:
        v = self.values
        return SolverOptions(tol=float(v["solver.tol"]), max_iter=int(v["solver.max_iter"]),
                             seed=v["solver.seed"])

    def grid(self, lam: float | None = None, beta: float | None = None):
        v = self.values
        p = self.params
        base = mh.default_grid(lam if lam is not None else p.lam, beta if beta is not None else p.beta,
                               int(v["grid.n_r"]), int(v["grid.n_z"]))
        r_max = float(v["grid.r_max"]) if v["grid.r_max"] is not None else base.r_max
        z_max = float(v["grid.z_max"]) if v["grid.z_max"] is not None else base.z_max
        return build_grid(r_max, z_max, int(v["grid.n_r"]), int(v["grid.n_z"]))

    def echo(self) -> dict:
        return {"command": self.command, **self.values}


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def dumps17(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits."""
    def conv(x):
        if isinstance(x, (bool, np.bool_)) or x is None:
            return x
        if isinstance(x, (float, np.floating)):
            return _F17(float(x))
        if isinstance(x, (int, np.integer)):
            return int(x)
        if isinstance(x, dict):
            return {str(k): conv(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        return str(x)

    text = json.dumps(conv(obj), indent=indent, default=_F17.encode)
    return text.replace('"@@F17:', "").replace(':F17@@"', "")


class _F17:
    def __init__(self, x: float):
        self.x = x

    @staticmethod
    def encode(o):
        if isinstance(o, _F17):
            x = o.x
            if math.isnan(x):
                return "@@F17:NaN:F17@@"
            if math.isinf(x):
                return "@@F17:" + ("Infinity" if x > 0 else "-Infinity") + ":F17@@"
            return "@@F17:" + format(x, ".17g") + ":F17@@"
        raise TypeError(f"not serializable: {type(o)}")


def _emit(cfg: RunConfig, payload: dict, scans: dict[str, ScanResult] | None = None) -> None:
    payload = {"config": cfg.echo(), **payload}
    text = dumps17(payload)
    click.echo(text)
    out = cfg.values["out"]
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{cfg.command}.json").write_text(text + "\n")
        for name, scan in (scans or {}).items():
            scan.write_csv(d / f"{name}.csv")


def _scan_payload(scans: dict[str, ScanResult]) -> dict:
    return {"passed": all(s.passed for s in scans.values()),
            "scans": {k: s.summary() for k, s in scans.items()}}


def _finish(cfg: RunConfig, scans: dict[str, ScanResult], extra: dict | None = None) -> int:
    payload = _scan_payload(scans)
    if extra:
        payload.update(extra)
    _emit(cfg, payload, scans)
    for s in scans.values():
        for c in s.checks:
            click.echo(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.anchor} "
                       f"(value {c.value:.6g}, limit {c.limit:.6g})", err=True)
    return EXIT_OK if payload["passed"] else EXIT_CHECK


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def run(cfg: RunConfig) -> int:
    """Execute a resolved configuration; returns the exit status."""
    handler = _HANDLERS[cfg.command]
    try:
        return handler(cfg)
    except SolverError as exc:
        _emit(cfg, {"error": {"kind": "solver", "message": str(exc), "residual": exc.residual,
                              "iterations": exc.iterations}})
        return EXIT_SOLVER


def _cmd_solve(cfg: RunConfig) -> int:
    p, opts, grid = cfg.params, cfg.options, cfg.grid()
    sol = mh.minimize(p, grid, opts)
    scans: dict[str, ScanResult] = {}
    if cfg.values["check"]:
        scans["identities"] = regimes.identity_suite(sol, hydrogen=regimes.hydrogen_pair(sol, opts))
    out = cfg.values["out"]
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_density(Path(out) / "density.csv", sol.density, lam=p.lam, beta=p.beta, zeta=p.zeta,
                      alpha=p.alpha)
    payload = {"solution": sol.summary(), **_scan_payload(scans)}
    _emit(cfg, payload, scans)
    if not sol.converged:
        return EXIT_SOLVER
    return EXIT_OK if payload["passed"] else EXIT_CHECK


def _cmd_hs(cfg: RunConfig) -> int:
    p = cfg.params
    exact = hs1d.hs_energy_exact(p.lam) if (p.zeta == 1 and p.alpha == 1) else None
    rho, bd = hs1d.hs_minimize(p.lam, opts=cfg.options, zeta=p.zeta, alpha=p.alpha)
    res, mu_lin = hs1d.hs_linear_residual(rho)
    payload = {"lam": p.lam, "E_exact": exact, "numeric": asdict(bd), "mass": rho.mass(),
               "linear_residual": res, "critical_mass": hs1d.hs_critical_mass(p.zeta, p.alpha)}
    _emit(cfg, payload)
    out = cfg.values["out"]
    if out and exact is not None:
        hs1d.write_profile_csv(Path(out) / "hs_profile.csv", p.lam, rho)
    return EXIT_OK


def _cmd_confined(cfg: RunConfig) -> int:
    p = cfg.params
    if not p.beta > 0:
        raise ConfigError("confined needs beta > 0")
    res = llband.confined_minimize(p.lam, p.beta, opts=cfg.options, alpha=p.alpha)
    e_hs = hs1d.hs_energy_exact(p.lam)
    payload = {"lam": p.lam, "beta": p.beta, "L": res.L, "breakdown": asdict(res.breakdown),
               "scaled": asdict(res.scaled), "E_over_L2": res.energy / res.L**2, "E_HS": e_hs,
               "residual": res.residual, "converged": res.converged, "clamped_mass": res.clamped_mass}
    _emit(cfg, payload)
    return EXIT_OK if res.converged else EXIT_SOLVER


def _ladder(cfg: RunConfig, default: list[float]) -> list[float]:
    return cfg.values["ladder"] or default


def _cmd_scan_beta(cfg: RunConfig) -> int:
    p = cfg.params
    lad = _ladder(cfg, [0.0, 0.5, 1.0, 2.0])
    scan = regimes.scan_beta(lad, p.lam, cfg.grid(beta=max(lad)), cfg.options, int(cfg.values["jobs"]))
    return _finish(cfg, {"scan_beta": scan})


def _cmd_scan_lambda(cfg: RunConfig) -> int:
    p = cfg.params
    lad = _ladder(cfg, [0.25, 0.5, 0.75, 1.0])
    scan = regimes.scan_lambda(lad, p.beta, cfg.grid(lam=max(lad)), cfg.options, int(cfg.values["jobs"]))
    return _finish(cfg, {"scan_lambda": scan})


def _cmd_critical(cfg: RunConfig) -> int:
    lad = _ladder(cfg, [cfg.params.beta])
    grids = {b: cfg.grid(lam=1.2, beta=b) for b in lad}
    scan = regimes.critical_scan(lad, cfg.options, grids)
    return _finish(cfg, {"critical": scan})


def _cmd_scaling(cfg: RunConfig) -> int:
    scan = regimes.scaling_audit(opts=cfg.options)
    return _finish(cfg, {"scaling_audit": scan})


def verify_suite(quick: bool, opts: SolverOptions) -> dict[str, ScanResult]:
    """The anchored checks; ``quick`` keeps to a few minutes on one core."""
    scans: dict[str, ScanResult] = {}
    hs = ScanResult("lambda")
    e2 = hs1d.hs_energy_exact(2.0)
    hs.add("hs_exact", "E_HS(2) = -1/6", abs(e2 + 1.0 / 6.0) <= 1e-8, e2, -1.0 / 6.0)
    ladder = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    energies = [hs1d.hs_energy_exact(x) for x in ladder]
    for x, e in zip(ladder, energies):
        hs.points.append((x, {"E_exact": e}))
    hs.add("hs_decreasing", "E_HS strictly decreasing below the critical mass 2",
           all(b < a for a, b in zip(energies[:4], energies[1:4])), energies[3] - energies[2], 0.0)
    flat = max(abs(e - energies[3]) for e in energies[3:])
    hs.add("hs_plateau", "E_HS constant above the critical mass 2", flat < 1e-8, flat, 1e-8)
    _, bd = hs1d.hs_minimize(2.0, opts=opts)
    hs.add("hs_grid", "grid minimizer reproduces E_HS(2)", abs(bd.E - e2) <= 1e-4, bd.E - e2, 1e-4)
    worst = max(abs(bd.K / abs(bd.E) - 1), abs(bd.A / abs(bd.E) - 3) / 3, abs(bd.R / abs(bd.E) - 1))
    hs.add("hs_ratios", "|E| : K : A : R = 1 : 1 : 3 : 1 at mass 2", worst <= 1e-3, worst, 1e-3)
    h = hs1d.hs_energy_exact(0.01) / 0.01
    hs.add("hs_hydrogen", "E_HS(lambda)/lambda -> -1/4", abs(h + 0.25) <= 1e-2, h, -0.25)
    scans["hs"] = hs

    n_r, n_z = (129, 257)
    p = mh.MHParams(0.5)
    g = build_grid(20.0, 20.0, n_r, n_z)
    sol = mh.minimize(p, g, opts)
    ident = regimes.identity_suite(sol, hydrogen=regimes.hydrogen_pair(sol, opts))
    ident.extend(regimes.uniqueness_probe(p, g, opts))
    scans["identities_beta0"] = ident

    pm = mh.MHParams(0.5, 0.5)
    gm = build_grid(10.0, 20.0, n_r, n_z)
    solm = mh.minimize(pm, gm, opts)
    theta = mh.magnetic_moment(pm, gm, opts, base=solm)
    scans["identities_beta"] = regimes.identity_suite(solm, theta=theta)

    scans["scaling"] = regimes.scaling_audit(
        [mh.MHParams(1.0, 0.0, 2.0, 1.0), mh.MHParams(0.5, 0.0, 1.0, 1.0)],
        build_grid(20.0, 20.0, 65, 129) if quick else None, opts)
    # the gap peaks near beta ~ 1e4-1e5 before it decays; test the trend past the peak
    scans["large_beta"] = regimes.large_beta_check(1.0, [1e6, 1e8, 1e10] if quick else [1e6, 1e8, 1e10, 1e12],
                                                   opts)
    if not quick:
        scans["small_beta"] = regimes.small_beta_check(1.0, [0.01, 0.02, 0.05], None, opts)
        scans["critical"] = regimes.critical_scan([0.0], opts)
    return scans


def _cmd_verify(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    scans = verify_suite(bool(cfg.values["quick"]), cfg.options)
    return _finish(cfg, scans, {"elapsed_s": time.perf_counter() - t0})


_HANDLERS = {"solve": _cmd_solve, "hs": _cmd_hs, "confined": _cmd_confined, "scan-beta": _cmd_scan_beta,
             "scan-lambda": _cmd_scan_lambda, "critical": _cmd_critical, "scaling-audit": _cmd_scaling,
             "verify": _cmd_verify}


# --------------------------------------------------------------------------
# click wiring
# --------------------------------------------------------------------------

_FLAG_KEYS = {"lam": "params.lam", "beta": "params.beta", "zeta": "params.zeta", "alpha": "params.alpha",
              "grid_nr": "grid.n_r", "grid_nz": "grid.n_z", "rmax": "grid.r_max", "zmax": "grid.z_max",
              "tol": "solver.tol", "max_iter": "solver.max_iter", "seed": "solver.seed",
              "ladder": "ladder", "jobs": "jobs", "out": "out", "quick": "quick", "check": "check"}


def _common(fn):
    opts = [
        click.option("--lambda", "lam", type=float, help="Mass (charge ratio) lambda."),
        click.option("--beta", type=float, help="Field strength beta."),
        click.option("--zeta", type=float, help="Nuclear charge scale zeta."),
        click.option("--alpha", type=float, help="Repulsion scale alpha."),
        click.option("--grid-nr", type=int, help="Radial node count."),
        click.option("--grid-nz", type=int, help="Axial node count (odd)."),
        click.option("--rmax", type=float, help="Radial box size."),
        click.option("--zmax", type=float, help="Axial half-length of the box."),
        click.option("--tol", type=float, help="Residual tolerance."),
        click.option("--max-iter", type=int, help="Flow iteration limit."),
        click.option("--seed", type=int, help="Seed for random initializations."),
        click.option("--ladder", type=str, help="Comma-separated scan values."),
        click.option("--jobs", type=int, help="Parallel scan points."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file."),
        click.option("--quick", is_flag=True, default=None, help="Reduced suite (verify)."),
        click.option("--check", is_flag=True, default=None, help="Run the identity suite (solve)."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _make(command: str):
    @_common
    def cmd(config_path, **flags):
        mapped = {_FLAG_KEYS[k]: v for k, v in flags.items()}
        try:
            cfg = RunConfig.resolve(command, config_path, mapped)
        except ConfigError as exc:
            click.echo(dumps17({"error": {"kind": "config", "message": str(exc)}}))
            sys.exit(EXIT_CONFIG)
        try:
            code = run(cfg)
        except ConfigError as exc:
            click.echo(dumps17({"error": {"kind": "config", "message": str(exc)}}))
            code = EXIT_CONFIG
        sys.exit(code)

    cmd.__name__ = command.replace("-", "_")
    return click.command(name=command, help=_HELP[command])(cmd)


_HELP = {
    "solve": "Ground state of the magnetic Hartree functional on a 2-D grid.",
    "hs": "Hyper-strong 1-D functional: exact and grid energies.",
    "confined": "Lowest-Landau-band confined energy at large beta.",
    "scan-beta": "Energies along a beta ladder with the identity checks.",
    "scan-lambda": "Energies along a lambda ladder with monotonicity and convexity checks.",
    "critical": "Critical charge by the sign change of the chemical potential.",
    "scaling-audit": "Scaling relation between extended and plain energies.",
    "verify": "Run the anchored check suite.",
}


@click.group()
def main() -> None:
    """Magnetic Hartree atoms: solvers, scans and checks."""


for _name in COMMANDS:
    main.add_command(_make(_name))


if __name__ == "__main__":
    main()
