"""Hot inner loops, each in a numba and a pure-numpy implementation.

The public names dispatch on :func:`bosatom._accel.numba_enabled` at call time,
so the benchmark and the tests can flip between both paths with the
``BOSATOM_DISABLE_NUMBA`` environment variable.
"""
from __future__ import annotations

import numpy as np

from ._accel import njit, numba_enabled

AGM_RTOL = 1e-12
_AGM_MAXITER = 60


# --------------------------------------------------------------------------
# azimuthally averaged Coulomb kernel
#
# (1/2pi) int dphi / sqrt(r^2 + r'^2 - 2 r r' cos phi + dz^2)
#     = (2/pi) K(k) / d+  =  1 / AGM(d+, d-)
# with d+- = sqrt((r +- r')^2 + dz^2).  Coincident points (d- = 0) give inf.
# --------------------------------------------------------------------------

@njit
def _agm_scalar(a, b):
    if b == 0.0:
        return 0.0
    for _ in range(_AGM_MAXITER):
        if abs(a - b) <= AGM_RTOL * a:
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return 0.5 * (a + b)


@njit
def _kernel_table_numba(r, dz):
    nr = r.shape[0]
    nz = dz.shape[0]
    out = np.empty((nr, nr, nz))
    for i in range(nr):
        for j in range(i, nr):
            sp = (r[i] + r[j]) ** 2
            sm = (r[i] - r[j]) ** 2
            for m in range(nz):
                d2 = dz[m] * dz[m]
                g = _agm_scalar(np.sqrt(sp + d2), np.sqrt(sm + d2))
                v = np.inf if g == 0.0 else 1.0 / g
                out[i, j, m] = v
                out[j, i, m] = v
    return out


def agm(a, b):
    """Arithmetic-geometric mean, elementwise, relative tolerance ``AGM_RTOL``."""
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    a, b = np.broadcast_arrays(a, b)
    a = a.copy()
    b = b.copy()
    for _ in range(_AGM_MAXITER):
        if np.all(np.abs(a - b) <= AGM_RTOL * a):
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return 0.5 * (a + b)


def _kernel_table_numpy(r, dz):
    rp = r[:, None, None] + r[None, :, None]
    rm = r[:, None, None] - r[None, :, None]
    d2 = (dz * dz)[None, None, :]
    g = agm(np.sqrt(rp * rp + d2), np.sqrt(rm * rm + d2))
    with np.errstate(divide="ignore"):
        return 1.0 / g


def kernel_table(r: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """Azimuthal Coulomb kernel for all radius pairs and longitudinal offsets.

    Returns an array of shape ``(len(r), len(r), len(dz))``.  Entries with
    ``r[i] == r[j]`` and ``dz[m] == 0`` are ``inf``; callers regularize them.
    """
    r = np.ascontiguousarray(r, dtype=float)
    dz = np.ascontiguousarray(dz, dtype=float)
    if numba_enabled():
        return _kernel_table_numba(r, dz)
    return _kernel_table_numpy(r, dz)


# --------------------------------------------------------------------------
# Fourier-space contraction of the kernel with the charge, one z-mode at a time
# --------------------------------------------------------------------------

@njit
def _contract_numba(khat, qre, qim):
    nr, _, nk = khat.shape
    ore = np.zeros((nr, nk))
    oim = np.zeros((nr, nk))
    for i in range(nr):
        for j in range(nr):
            for k in range(nk):
                kv = khat[i, j, k]
                ore[i, k] += kv * qre[j, k]
                oim[i, k] += kv * qim[j, k]
    return ore, oim


def _contract_numpy(khat, qre, qim):
    # batched over the mode axis: (nk, nr, nr) @ (nk, nr, 2)
    kt = np.moveaxis(khat, 2, 0)
    q = np.stack([qre.T, qim.T], axis=2)
    out = kt @ q
    return out[:, :, 0].T.copy(), out[:, :, 1].T.copy()


def fourier_contract(khat: np.ndarray, qhat: np.ndarray) -> np.ndarray:
    """``out[i, k] = sum_j khat[i, j, k] * qhat[j, k]`` for real ``khat``."""
    qre = np.ascontiguousarray(qhat.real)
    qim = np.ascontiguousarray(qhat.imag)
    if numba_enabled():
        ore, oim = _contract_numba(khat, qre, qim)
    else:
        ore, oim = _contract_numpy(khat, qre, qim)
    return ore + 1j * oim


# --------------------------------------------------------------------------
# face-difference Dirichlet form  sum_faces area/h * (psi_a - psi_b)^2
# --------------------------------------------------------------------------

@njit
def _face_energy_numba(psi, ar, az, hr, hz):
    nr, nz = psi.shape
    total = 0.0
    for i in range(nr - 1):
        for j in range(nz):
            d = psi[i + 1, j] - psi[i, j]
            total += ar[i, j] * d * d
    total /= hr
    tz = 0.0
    for i in range(nr):
        for j in range(nz - 1):
            d = psi[i, j + 1] - psi[i, j]
            tz += az[i, j] * d * d
    return total + tz / hz


def _face_energy_numpy(psi, ar, az, hr, hz):
    dr = np.diff(psi, axis=0)
    dzv = np.diff(psi, axis=1)
    return float(np.sum(ar * dr * dr) / hr + np.sum(az * dzv * dzv) / hz)


def face_energy(psi, ar, az, hr, hz) -> float:
    """Discrete Dirichlet integral from face areas ``ar`` (radial) and ``az`` (axial)."""
    psi = np.ascontiguousarray(psi, dtype=float)
    if numba_enabled():
        return float(_face_energy_numba(psi, ar, az, hr, hz))
    return _face_energy_numpy(psi, ar, az, hr, hz)
