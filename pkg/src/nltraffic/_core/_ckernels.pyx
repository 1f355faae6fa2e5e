# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: direct discrete convolution and the Lax-Friedrichs update."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def convolve_direct(const double[::1] weights, Py_ssize_t p_lo, const double[::1] rho, double scale):
    """out[k] = scale * sum_p weights[p - p_lo] * rho[k - p], rho zero-extended."""
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t L = weights.shape[0]
    cdef Py_ssize_t k, i, j, i_lo, i_hi
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for k in range(n):
        # j = k - p_lo - i must satisfy 0 <= j < n
        i_lo = k - p_lo - (n - 1)
        if i_lo < 0:
            i_lo = 0
        i_hi = k - p_lo
        if i_hi > L - 1:
            i_hi = L - 1
        acc = 0.0
        for i in range(i_lo, i_hi + 1):
            acc += weights[i] * rho[k - p_lo - i]
        o[k] = scale * acc
    return out


def lf_step(const double[:, ::1] rho, const double[:, ::1] vel, double lam):
    """One Lax-Friedrichs step with zeroth-order extrapolation ghost cells.

    Returns the new state and the per-class boundary fluxes (rho*v in the
    first and last cell), which are the exact mass exchange of the step.
    """
    cdef Py_ssize_t nc = rho.shape[0]
    cdef Py_ssize_t n = rho.shape[1]
    cdef Py_ssize_t c, k
    cdef double rl, rr, fl, fr
    out = np.empty((nc, n), dtype=np.float64)
    f_in = np.empty(nc, dtype=np.float64)
    f_out = np.empty(nc, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] fi = f_in
    cdef double[::1] fo = f_out
    for c in range(nc):
        for k in range(n):
            if k == 0:
                rl = rho[c, 0]
                fl = rho[c, 0] * vel[c, 0]
            else:
                rl = rho[c, k - 1]
                fl = rho[c, k - 1] * vel[c, k - 1]
            if k == n - 1:
                rr = rho[c, n - 1]
                fr = rho[c, n - 1] * vel[c, n - 1]
            else:
                rr = rho[c, k + 1]
                fr = rho[c, k + 1] * vel[c, k + 1]
            o[c, k] = 0.5 * (rl + rr) - 0.5 * lam * (fr - fl)
        fi[c] = rho[c, 0] * vel[c, 0]
        fo[c] = rho[c, n - 1] * vel[c, n - 1]
    return out, f_in, f_out


def interp_linear(const double[:, ::1] values, const double[::1] x, double x_lo, double dx):
    """Rows of cell-center data linearly interpolated at points ``x``.

    Constant between the outer cell centers and beyond; returns shape
    ``(values.shape[0], x.shape[0])``.
    """
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t n = values.shape[1]
    cdef Py_ssize_t P = x.shape[0]
    cdef Py_ssize_t r, k, i0
    cdef double pos, th
    out = np.empty((m, P), dtype=np.float64)
    cdef double[:, ::1] o = out
    for k in range(P):
        pos = (x[k] - x_lo) / dx - 0.5
        if pos <= 0.0:
            i0 = 0
            th = 0.0
        elif pos >= n - 1:
            i0 = n - 2
            th = 1.0
        else:
            i0 = <Py_ssize_t>pos
            th = pos - i0
        for r in range(m):
            o[r, k] = values[r, i0] * (1.0 - th) + values[r, i0 + 1] * th
    return out
