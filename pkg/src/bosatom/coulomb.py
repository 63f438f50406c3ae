"""Coulomb integrals for axisymmetric densities.

The Hartree potential is a sum over radius pairs of one-dimensional
convolutions along z with the azimuthally averaged kernel, done with real
FFTs since the kernel is even in the longitudinal offset.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft

from . import kernels
from .grid import Density2D, Grid2D

log = logging.getLogger(__name__)

CACHE_ENV = "BOSATOM_CACHE_DIR"
_CACHE_VERSION = 1
_GAUSS_ORDER = 24


def _log_rect(a, b):
    """``int_0^a int_0^b ln(x^2 + y^2) dy dx`` for ``a, b >= 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(np.broadcast(a, b).shape)
    ok = (a > 0) & (b > 0)
    a, b = np.broadcast_arrays(a, b)
    aa, bb = a[ok], b[ok]
    out[ok] = (aa * bb * np.log(aa * aa + bb * bb) - 3.0 * aa * bb
               + aa * aa * np.arctan(bb / aa) + bb * bb * np.arctan(aa / bb))
    return out


def axis_cell_integral(a: float, b: float) -> float:
    """``int 1/|x|`` over the cylinder ``r < a, |z| < b`` centred at the origin."""
    return 2.0 * np.pi * (b * np.hypot(a, b) + a * a * np.arcsinh(b / a) - b * b)


def ring_cell_integrals(r: np.ndarray, a_lo: np.ndarray, a_hi: np.ndarray, b: float) -> np.ndarray:
    """``int 1/|x - y| d^3y`` over the ring cell of node ``(r_i, 0)``, at ``x = (r_i, 0)``.

    The cell is ``r_i - a_lo <= r' <= r_i + a_hi``, ``|z'| <= b``.  The log
    singularity of the azimuthal kernel is subtracted and integrated in closed
    form; the bounded remainder goes through Gauss-Legendre on the four
    quadrants around the singular point.  ``r`` must be positive.
    """
    r = np.asarray(r, dtype=float)
    t, w = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    total = np.zeros_like(r)
    for sx, ax in ((-1.0, a_lo), (1.0, a_hi)):
        ax = np.asarray(ax, dtype=float) * np.ones_like(r)
        for sy in (-1.0, 1.0):
            x = sx * ax[:, None, None] * t[None, :, None]
            y = sy * b * t[None, None, :]
            rp = r[:, None, None] + x
            dp = np.sqrt((r[:, None, None] + rp) ** 2 + y * y)
            dm2 = x * x + y * y
            dm = np.sqrt(dm2)
            kern = 1.0 / kernels.agm(dp, dm)
            g = 4.0 * rp / dp
            # 2 pi r' K  =  2 pi r' (K - Ks) + g ln(4 d+) - g ln d-,  Ks = (2/pi) ln(4 d+/d-)/d+
            ks = (2.0 / np.pi) * np.log(4.0 * dp / dm) / dp
            smooth = 2.0 * np.pi * rp * (kern - ks) + g * np.log(4.0 * dp) - 0.5 * (g - 2.0) * np.log(dm2)
            jac = ax * b
            total += jac * np.einsum("ixy,x,y->i", smooth, w, w)
            total -= _log_rect(ax, b)
    return total


@dataclass(frozen=True, eq=False)
class AziKernel:
    """Tabulated azimuthal kernel on a grid.

    ``table[i, j, m]`` is the kernel between radii ``r_i`` and ``r_j`` at
    longitudinal offset ``m*hz``; the coincident entries ``table[i, i, 0]``
    hold the cell average of ``1/|x - y|``.  ``khat`` is the real spectrum of
    the even circulant embedding used by :func:`hartree_potential`.
    """
    grid: Grid2D
    table: np.ndarray
    khat: np.ndarray
    n_fft: int

    def value(self, i: int, j: int, dz_index: int) -> float:
        return float(self.table[i, j, abs(dz_index)])


@dataclass(frozen=True, eq=False)
class Potential2D:
    grid: Grid2D
    values: np.ndarray


def coincident_cell_averages(grid: Grid2D) -> np.ndarray:
    """Cell average of ``1/|x - y|`` for each node's own cell (z-interior cells)."""
    h = grid.hr
    b = 0.5 * grid.hz
    r = grid.r_nodes
    vol = grid.r_weights * grid.hz
    out = np.empty(r.size)
    out[0] = axis_cell_integral(0.5 * h, b) / vol[0]
    a_lo = np.minimum(0.5 * h, r[1:])
    a_hi = np.minimum(0.5 * h, grid.r_max - r[1:])
    out[1:] = ring_cell_integrals(r[1:], a_lo, a_hi, b) / vol[1:]
    return out


def nuclear_potential(grid: Grid2D) -> np.ndarray:
    """``1/|x|`` on the nodes, with the origin replaced by its cell average."""
    with np.errstate(divide="ignore"):
        v = 1.0 / grid.radius
    a = 0.5 * grid.hr
    b = 0.5 * grid.hz
    v[0, grid.iz0] = axis_cell_integral(a, b) / (np.pi * a * a * 2.0 * b)
    return v


def _spectrum(table: np.ndarray, nz: int) -> tuple[np.ndarray, int]:
    n_fft = fft.next_fast_len(2 * nz - 1, real=True)
    circ = np.zeros(table.shape[:2] + (n_fft,))
    circ[:, :, :nz] = table
    circ[:, :, n_fft - nz + 1:] = table[:, :, 1:][:, :, ::-1]
    khat = fft.rfft(circ, axis=2).real.copy()
    return khat, n_fft


def _cache_path(grid: Grid2D) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    return Path(root) / f"azikernel-{grid.key()}.npz"


def _load_cached(grid: Grid2D, path: Path) -> np.ndarray | None:
    try:
        with np.load(path) as blob:
            nr, nz = grid.shape
            header = blob["header"]
            if (int(header[0]) != _CACHE_VERSION or header[1] != grid.r_max or header[2] != grid.z_max
                    or int(header[3]) != nr or int(header[4]) != nz):
                log.info("kernel cache %s does not match the grid; rebuilding", path)
                return None
            return blob["table"]
    except (OSError, KeyError, ValueError):
        return None


def build_kernel(grid: Grid2D) -> AziKernel:
    path = _cache_path(grid)
    table = _load_cached(grid, path) if path is not None and path.exists() else None
    if table is None:
        nz = grid.shape[1]
        dz = np.arange(nz) * grid.hz
        table = kernels.kernel_table(grid.r_nodes, dz)
        idx = np.arange(grid.shape[0])
        table[idx, idx, 0] = coincident_cell_averages(grid)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            nr, nz = grid.shape
            header = np.array([_CACHE_VERSION, grid.r_max, grid.z_max, nr, nz], dtype=float)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, header=header, table=table)
            os.replace(tmp, path)
    khat, n_fft = _spectrum(table, grid.shape[1])
    return AziKernel(grid, table, khat, n_fft)


def attraction_energy(rho: Density2D) -> float:
    """``int rho/|x|`` with the nucleus at the origin."""
    g = rho.grid
    return float(np.sum(g.weights * rho.values * nuclear_potential(g)))


def convolve(rho_values: np.ndarray, kern: AziKernel) -> np.ndarray:
    """Raw-array form of :func:`hartree_potential`."""
    g = kern.grid
    nz = g.shape[1]
    q = g.weights * rho_values
    qhat = fft.rfft(q, n=kern.n_fft, axis=1)
    phat = kernels.fourier_contract(kern.khat, qhat)
    return fft.irfft(phat, n=kern.n_fft, axis=1)[:, :nz]


def hartree_potential(rho: Density2D, kern: AziKernel) -> Potential2D:
    """``(rho * 1/|x|)`` on the nodes."""
    if rho.grid is not kern.grid and rho.grid.key() != kern.grid.key():
        raise ValueError("kernel was built on a different grid")
    return Potential2D(rho.grid, convolve(rho.values, kern))


def direct_energy(rho: Density2D, kern: AziKernel) -> float:
    """``D[rho, rho] = 1/2 int int rho rho / |x - y|``."""
    phi = convolve(rho.values, kern)
    return 0.5 * float(np.sum(rho.grid.weights * rho.values * phi))
