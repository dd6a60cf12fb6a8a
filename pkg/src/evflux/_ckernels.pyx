# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pointwise kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


def pressure_law(const double[::1] rho, double A, double gamma, double delta, double beta):
    cdef Py_ssize_t n = rho.shape[0], k
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] p = out
    cdef double r
    cdef long nneg = 0
    for k in range(n):
        r = rho[k]
        if r < 0.0:
            nneg += 1
            r = 0.0
        p[k] = A * pow(r, gamma)
        if delta != 0.0:
            p[k] += delta * pow(r, beta)
    return out, nneg


def sound_speed_sq(const double[::1] rho, double A, double gamma, double delta, double beta):
    cdef Py_ssize_t n = rho.shape[0], k
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] c2 = out
    cdef double r
    for k in range(n):
        r = rho[k] if rho[k] > 0.0 else 0.0
        c2[k] = A * gamma * pow(r, gamma - 1.0)
        if delta != 0.0:
            c2[k] += delta * beta * pow(r, beta - 1.0)
    return out


def pressure_curvature(const double[::1] rho, double floor, double A, double gamma,
                       double delta, double beta):
    cdef Py_ssize_t n = rho.shape[0], k
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] h2 = out
    cdef double r
    for k in range(n):
        r = rho[k] if rho[k] > floor else floor
        h2[k] = A * gamma * pow(r, gamma - 2.0)
        if delta != 0.0:
            h2[k] += delta * beta * pow(r, beta - 2.0)
    return out


def momentum_flux(const double[:, ::1] m, const double[:, ::1] u, const double[:, :, ::1] du,
                  const double[::1] mu, const double[::1] lam):
    cdef Py_ssize_t n = m.shape[0], npts = m.shape[1], i, j, k
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.empty((n, n, npts))
    cdef double[:, :, ::1] f = out
    cdef double div
    for k in range(npts):
        div = 0.0
        for i in range(n):
            div += du[i, i, k]
        for i in range(n):
            for j in range(n):
                f[i, j, k] = m[i, k] * u[j, k] - mu[k] * (du[i, j, k] + du[j, i, k])
            f[i, i, k] -= lam[k] * div
    return out


def eps_cross(const double[:, :, ::1] du, const double[:, ::1] drho, double eps):
    cdef Py_ssize_t n = du.shape[0], npts = du.shape[2], i, j, k
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, npts))
    cdef double[:, ::1] x = out
    cdef double acc
    for i in range(n):
        for k in range(npts):
            acc = 0.0
            for j in range(n):
                acc += du[i, j, k] * drho[j, k]
            x[i, k] = eps * acc
    return out


def truncation(const double[::1] z, double M):
    cdef Py_ssize_t n = z.shape[0], k
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vout = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dout = np.empty(n)
    cdef double[::1] v = vout
    cdef double[::1] d = dout
    cdef double s
    for k in range(n):
        if z[k] <= M:
            v[k] = z[k]
            d[k] = 1.0
        else:
            s = (z[k] / M - 1.0) * 0.5
            if s > 1.0:
                s = 1.0
            v[k] = M * (1.0 + 2.0 * s - 2.0 * s * s * s + s * s * s * s)
            d[k] = 1.0 - 3.0 * s * s + 2.0 * s * s * s
    return vout, dout
