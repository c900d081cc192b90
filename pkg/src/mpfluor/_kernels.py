"""Column-batched Lanczos kernels for real symmetric generators.

States are stored as split real/imaginary arrays of shape (dim, K); the K
columns share the sparse pattern and data of H and differ only by a
diagonal shift ``omegas[k] * diag_w``.  Every arithmetic operation acts on
one column at a time in a fixed order, so a column's result does not depend
on which other columns are in the batch.  No fastmath: reassociation would
break that guarantee.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def matvec(indptr, indices, data, diag_w, omegas, xr, xi, yr, yi):
    dim, K = xr.shape
    for i in range(dim):
        for k in range(K):
            f = diag_w[i] * omegas[k]
            yr[i, k] = f * xr[i, k]
            yi[i, k] = f * xi[i, k]
        for p in range(indptr[i], indptr[i + 1]):
            d = data[p]
            c = indices[p]
            for k in range(K):
                yr[i, k] += d * xr[c, k]
                yi[i, k] += d * xi[c, k]


@nb.njit(cache=True)
def lanczos(indptr, indices, data, diag_w, omegas, Vr, Vi, wr, wi, alpha, beta, m):
    """m-step Lanczos on every column; Vr[0], Vi[0] must hold unit vectors.

    beta[j] is the norm of the residual after vector j, so beta[m - 1] feeds
    the a-posteriori error estimate.  A column that breaks down (invariant
    subspace found) continues with zero vectors, which decouples the rest of
    its tridiagonal matrix.
    """
    dim, K = wr.shape
    a = np.empty(K)
    nrm = np.empty(K)
    inv = np.empty(K)
    for j in range(m):
        matvec(indptr, indices, data, diag_w, omegas, Vr[j], Vi[j], wr, wi)
        for k in range(K):
            a[k] = 0.0
            nrm[k] = 0.0
        for i in range(dim):
            for k in range(K):
                a[k] += Vr[j, i, k] * wr[i, k] + Vi[j, i, k] * wi[i, k]
        if j > 0:
            for i in range(dim):
                for k in range(K):
                    b = beta[j - 1, k]
                    wr[i, k] -= a[k] * Vr[j, i, k] + b * Vr[j - 1, i, k]
                    wi[i, k] -= a[k] * Vi[j, i, k] + b * Vi[j - 1, i, k]
                    nrm[k] += wr[i, k] * wr[i, k] + wi[i, k] * wi[i, k]
        else:
            for i in range(dim):
                for k in range(K):
                    wr[i, k] -= a[k] * Vr[j, i, k]
                    wi[i, k] -= a[k] * Vi[j, i, k]
                    nrm[k] += wr[i, k] * wr[i, k] + wi[i, k] * wi[i, k]
        for k in range(K):
            alpha[j, k] = a[k]
            s = np.sqrt(nrm[k])
            if s < 1e-14 * (abs(a[k]) + 1.0):
                s = 0.0
                inv[k] = 0.0
            else:
                inv[k] = 1.0 / s
            beta[j, k] = s
        if j == m - 1:
            break
        for i in range(dim):
            for k in range(K):
                Vr[j + 1, i, k] = wr[i, k] * inv[k]
                Vi[j + 1, i, k] = wi[i, k] * inv[k]


@nb.njit(cache=True)
def tridiag_exp_first_column(alpha, beta, tau, cr, ci, m):
    """c = exp(-i tau T) e_1 for each column's m x m tridiagonal T."""
    K = alpha.shape[1]
    T = np.zeros((m, m))
    for k in range(K):
        for p in range(m):
            for q in range(m):
                T[p, q] = 0.0
        for j in range(m):
            T[j, j] = alpha[j, k]
        for j in range(m - 1):
            T[j + 1, j] = beta[j, k]
            T[j, j + 1] = beta[j, k]
        ev, U = np.linalg.eigh(T)
        for j in range(m):
            sr = 0.0
            si = 0.0
            for q in range(m):
                w = U[0, q] * U[j, q]
                sr += w * np.cos(tau * ev[q])
                si -= w * np.sin(tau * ev[q])
            cr[j, k] = sr
            ci[j, k] = si


@nb.njit(cache=True)
def combine(Vr, Vi, cr, ci, xr, xi, m):
    dim, K = xr.shape
    for i in range(dim):
        for k in range(K):
            xr[i, k] = 0.0
            xi[i, k] = 0.0
        for j in range(m):
            for k in range(K):
                xr[i, k] += cr[j, k] * Vr[j, i, k] - ci[j, k] * Vi[j, i, k]
                xi[i, k] += cr[j, k] * Vi[j, i, k] + ci[j, k] * Vr[j, i, k]


@nb.njit(cache=True)
def column_norms(xr, xi):
    dim, K = xr.shape
    out = np.zeros(K)
    for i in range(dim):
        for k in range(K):
            out[k] += xr[i, k] * xr[i, k] + xi[i, k] * xi[i, k]
    for k in range(K):
        out[k] = np.sqrt(out[k])
    return out


def krylov_block_step(indptr, indices, data, diag_w, omegas, xr, xi, tau, m, work):
    """One exp(-i tau H) step on every column, in place.

    Returns the per-column error estimate beta_m |c_m| and leaves the
    updated (unnormalised-by-construction, norm preserved to rounding)
    state in ``xr``, ``xi``.
    """
    dim, K = xr.shape
    Vr, Vi, wr, wi, alpha, beta, cr, ci = work.get(m, dim, K)
    norms = column_norms(xr, xi)
    safe = np.where(norms > 0, norms, 1.0)
    Vr[0] = xr / safe
    Vi[0] = xi / safe
    lanczos(indptr, indices, data, diag_w, omegas, Vr, Vi, wr, wi, alpha, beta, m)
    tridiag_exp_first_column(alpha, beta, tau, cr, ci, m)
    err = beta[m - 1] * np.hypot(cr[m - 1], ci[m - 1]) * norms
    combine(Vr, Vi, cr, ci, xr, xi, m)
    xr *= norms
    xi *= norms
    return err


class Workspace:
    """Reusable Lanczos buffers keyed by shape."""

    def __init__(self) -> None:
        self._key = None
        self._bufs = None

    def get(self, m: int, dim: int, K: int):
        key = (m, dim, K)
        if key != self._key:
            self._bufs = (
                np.empty((m, dim, K)),
                np.empty((m, dim, K)),
                np.empty((dim, K)),
                np.empty((dim, K)),
                np.empty((m, K)),
                np.empty((m, K)),
                np.empty((m, K)),
                np.empty((m, K)),
            )
            self._key = key
        return self._bufs


# ----------------------------------------------------------------------
# first-order fluorescence amplitudes


@nb.njit(cache=True)
def phi1(u):
    """(e^u - 1) / u with a Taylor branch near the removable point."""
    if abs(u) < 1e-2:
        return 1 + u / 2 + u * u / 6 + u**3 / 24 + u**4 / 120 + u**5 / 720
    return (np.exp(u) - 1) / u


@nb.njit(cache=True)
def first_order_amplitude(E, Ea, S, rates, c, w, t):
    """amp[i] = sum_k sum_j S[k, i, j] D_k(i, j) c[j]; t < 0 selects the t -> inf limit."""
    K, n, na = S.shape
    out = np.zeros(n, dtype=np.complex128)
    for k in range(K):
        g = rates[k]
        for i in range(n):
            acc = 0j
            for j in range(na):
                s = S[k, i, j]
                if s == 0.0:
                    continue
                z = complex(w + E[i] - Ea[j], g)
                if t < 0:
                    d = -1.0 / z
                else:
                    d = 1j * t * phi1(1j * z * t)
                acc += s * d * c[j]
            out[i] += acc
    return out
