"""Axisymmetric (r, z) grids, quadrature and the kinetic-energy form.

Nodes are uniform: ``r_i = i*hr`` for ``i = 0..N_r-1`` and
``z_j = -Z_max + j*hz`` for ``j = 0..N_z-1`` with ``N_z`` odd, so both the
axis and the plane ``z = 0`` carry nodes.  Each node owns the annular cell
``[r_i - hr/2, r_i + hr/2] x [z_j - hz/2, z_j + hz/2]`` clipped to the box;
the axis node owns a disc of radius ``hr/2``.  Wavefunctions vanish on the
outer boundary nodes (``r = R_max`` and ``z = +-Z_max``).
"""
from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels

log = logging.getLogger(__name__)

BOUNDARY_MASS_LIMIT = 1e-6


@dataclass(frozen=True, eq=False)
class Grid2D:
    r_nodes: np.ndarray
    z_nodes: np.ndarray
    r_max: float
    z_max: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r_nodes.size, self.z_nodes.size)

    @property
    def hr(self) -> float:
        return self.r_max / (self.r_nodes.size - 1)

    @property
    def hz(self) -> float:
        return 2.0 * self.z_max / (self.z_nodes.size - 1)

    @property
    def iz0(self) -> int:
        """Index of the ``z = 0`` column."""
        return self.z_nodes.size // 2

    @cached_property
    def r_weights(self) -> np.ndarray:
        """Area of each annulus, ``int 2 pi r dr`` over the node's radial cell."""
        h = self.hr
        lo = np.clip(self.r_nodes - 0.5 * h, 0.0, self.r_max)
        hi = np.clip(self.r_nodes + 0.5 * h, 0.0, self.r_max)
        return np.pi * (hi * hi - lo * lo)

    @cached_property
    def z_weights(self) -> np.ndarray:
        wz = np.full(self.z_nodes.size, self.hz)
        wz[0] = wz[-1] = 0.5 * self.hz
        return wz

    @cached_property
    def weights(self) -> np.ndarray:
        """Volume of each node's cell; sums to the cylinder volume exactly."""
        return np.outer(self.r_weights, self.z_weights)

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance to the origin at every node."""
        return np.hypot(self.r_nodes[:, None], self.z_nodes[None, :])

    @cached_property
    def face_areas(self) -> tuple[np.ndarray, np.ndarray]:
        r_half = self.r_nodes[:-1] + 0.5 * self.hr
        ar = np.outer(2.0 * np.pi * r_half, self.z_weights)
        az = np.repeat(self.r_weights[:, None], self.z_nodes.size - 1, axis=1)
        return ar, az

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Matrix ``S`` with ``psi.ravel() @ S @ psi.ravel() == kinetic_energy(psi)``."""
        nr, nz = self.shape
        ar, az = self.face_areas
        dr = sp.diags([-np.ones(nr - 1), np.ones(nr - 1)], [0, 1], shape=(nr - 1, nr))
        dz = sp.diags([-np.ones(nz - 1), np.ones(nz - 1)], [0, 1], shape=(nz - 1, nz))
        gr = sp.kron(dr, sp.identity(nz))
        gz = sp.kron(sp.identity(nr), dz)
        s = gr.T @ sp.diags(ar.ravel() / self.hr) @ gr + gz.T @ sp.diags(az.ravel() / self.hz) @ gz
        return s.tocsr()

    @cached_property
    def interior(self) -> np.ndarray:
        """Boolean mask of nodes not pinned by the Dirichlet condition."""
        mask = np.ones(self.shape, dtype=bool)
        mask[-1, :] = False
        mask[:, 0] = False
        mask[:, -1] = False
        return mask

    def key(self) -> str:
        """Stable digest of the grid geometry (used for kernel caching)."""
        nr, nz = self.shape
        text = f"{self.r_max!r}:{self.z_max!r}:{nr}:{nz}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def scaled(self, factor: float) -> "Grid2D":
        """Same node counts with every length multiplied by ``factor``."""
        nr, nz = self.shape
        return build_grid(self.r_max * factor, self.z_max * factor, nr, nz)


@dataclass(frozen=True, eq=False)
class Density2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"density shape {v.shape} does not match grid {self.grid.shape}")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    def sqrt(self) -> "Wave2D":
        return Wave2D(self.grid, np.sqrt(self.values))


@dataclass(frozen=True, eq=False)
class Wave2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"wave shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def density(self) -> Density2D:
        return Density2D(self.grid, self.values**2)


def build_grid(r_max: float, z_max: float, n_r: int, n_z: int) -> Grid2D:
    if not (r_max > 0 and z_max > 0):
        raise ValueError("grid extents must be positive")
    if n_r < 8 or n_z < 8:
        raise ValueError("need at least 8 nodes per direction")
    if n_z % 2 == 0:
        raise ValueError("n_z must be odd so that z = 0 is a node")
    r = np.linspace(0.0, r_max, n_r)
    z = np.linspace(-z_max, z_max, n_z)
    # exact mirror symmetry, including the zero
    half = (n_z - 1) // 2
    z[half] = 0.0
    z[half + 1:] = -z[:half][::-1]
    return Grid2D(r, z, float(r_max), float(z_max))


def mass(rho: Density2D) -> float:
    return float(np.sum(rho.grid.weights * rho.values))


def kinetic_energy(psi: Wave2D) -> float:
    """``int |grad psi|^2`` from centered face differences.

    Radial faces sit at ``r_{i+1/2}``; there is no face through the axis, which
    is the discrete form of ``d psi/dr = 0`` at ``r = 0``.
    """
    g = psi.grid
    ar, az = g.face_areas
    return kernels.face_energy(psi.values, ar, az, g.hr, g.hz)


def diamagnetic_term(rho: Density2D, beta: float) -> float:
    """``int ((beta^2/4) r^2 - beta) rho``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return 0.0
    g = rho.grid
    pot = 0.25 * beta * beta * g.r_nodes[:, None] ** 2 - beta
    return float(np.sum(g.weights * pot * rho.values))


def boundary_mass_fraction(rho: Density2D) -> float:
    """Share of the mass in the outermost two cells along each open boundary."""
    total = mass(rho)
    if total <= 0:
        return 0.0
    w = rho.grid.weights * rho.values
    edge = np.zeros_like(w, dtype=bool)
    edge[-2:, :] = True
    edge[:, :2] = True
    edge[:, -2:] = True
    return float(np.sum(w[edge]) / total)


def check_boundary_mass(rho: Density2D, limit: float = BOUNDARY_MASS_LIMIT) -> bool:
    frac = boundary_mass_fraction(rho)
    if frac >= limit:
        log.warning("%.3g of the mass sits in the outer boundary cells; enlarge the box", frac)
        return False
    return True


# --------------------------------------------------------------------------
# density dump: "# key=value" header lines, then one CSV row per radial node
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_density(path, rho: Density2D, **meta) -> None:
    g = rho.grid
    nr, nz = g.shape
    head = {"r_max": _fmt(g.r_max), "z_max": _fmt(g.z_max), "n_r": nr, "n_z": nz}
    for k, v in meta.items():
        head[k] = _fmt(v) if isinstance(v, float) else v
    buf = io.StringIO()
    for k, v in head.items():
        if "=" in str(k) or "\n" in str(v):
            raise ValueError(f"unwritable header entry {k!r}")
        buf.write(f"# {k}={v}\n")
    for row in rho.values:
        buf.write(",".join(_fmt(x) for x in row))
        buf.write("\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_density(path) -> tuple[Density2D, dict[str, str]]:
    meta: dict[str, str] = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line:
                rows.append([float(x) for x in line.split(",")])
    grid = build_grid(float(meta["r_max"]), float(meta["z_max"]), int(meta["n_r"]), int(meta["n_z"]))
    return Density2D(grid, np.array(rows)), meta
