# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernels; one path at a time, inner loops in C."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, NAN

cnp.import_array()

BACKEND = "cython"


cdef inline void _flux(const double[::1] a, const double[::1] b, int same,
                       const double[:, ::1] synth, const double[:, ::1] flux,
                       double[::1] ga, double[::1] gb, double[::1] out,
                       double scale) noexcept nogil:
    cdef Py_ssize_t n = synth.shape[0]
    cdef Py_ssize_t mq = synth.shape[1]
    cdef Py_ssize_t j, k
    cdef double acc
    for j in range(mq):
        ga[j] = 0.0
    for k in range(n):
        acc = a[k]
        if acc != 0.0:
            for j in range(mq):
                ga[j] += acc * synth[k, j]
    if same:
        for j in range(mq):
            ga[j] = ga[j] * ga[j]
    else:
        for j in range(mq):
            gb[j] = 0.0
        for k in range(n):
            acc = b[k]
            if acc != 0.0:
                for j in range(mq):
                    gb[j] += acc * synth[k, j]
        for j in range(mq):
            ga[j] = ga[j] * gb[j]
    for k in range(n):
        out[k] = 0.0
    for j in range(mq):
        acc = ga[j] * scale
        for k in range(n):
            out[k] += acc * flux[j, k]


def burgers_run(x0, incr, decay, phi_dt, noise_coef, drive, synth, flux, bint nonlinear, Py_ssize_t stride):
    cdef const double[:, ::1] X0 = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const double[:, :, ::1] W = np.ascontiguousarray(incr, dtype=np.float64)
    cdef const double[::1] E = np.ascontiguousarray(decay, dtype=np.float64)
    cdef const double[::1] F = np.ascontiguousarray(phi_dt, dtype=np.float64)
    cdef const double[::1] C = np.ascontiguousarray(noise_coef, dtype=np.float64)
    cdef const double[:, ::1] Sy = np.ascontiguousarray(synth, dtype=np.float64)
    cdef const double[:, ::1] Fl = np.ascontiguousarray(flux, dtype=np.float64)
    cdef Py_ssize_t P = W.shape[0], S = W.shape[1], n = W.shape[2]
    cdef Py_ssize_t mq = Sy.shape[1]
    cdef bint has_drive = drive is not None
    cdef const double[:, ::1] D = np.ascontiguousarray(drive if has_drive else np.zeros((1, n)), dtype=np.float64)
    out_arr = np.empty((P, S // stride + 1, n))
    blow_arr = np.full(P, -1, dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.int64_t[::1] blow = blow_arr
    cdef double[::1] x = np.empty(n)
    cdef double[::1] b = np.zeros(n)
    cdef double[::1] ga = np.empty(mq)
    cdef double[::1] gb = np.empty(mq)
    cdef Py_ssize_t p, m, k, r
    cdef double force, v
    cdef bint ok
    with nogil:
        for p in range(P):
            for k in range(n):
                x[k] = X0[p, k]
                out[p, 0, k] = x[k]
            for m in range(S):
                if nonlinear:
                    _flux(x, x, 1, Sy, Fl, ga, gb, b, 1.0)
                ok = True
                for k in range(n):
                    force = 0.0
                    if nonlinear:
                        force = b[k]
                        if has_drive:
                            force = force + D[m, k]
                    elif has_drive:
                        force = D[m, k]
                    v = E[k] * x[k] + F[k] * force + C[k] * W[p, m, k]
                    x[k] = v
                    if not isfinite(v):
                        ok = False
                if (m + 1) % stride == 0:
                    for k in range(n):
                        out[p, (m + 1) // stride, k] = x[k]
                if not ok:
                    blow[p] = m
                    for r in range((m + 1) // stride + 1, S // stride + 1):
                        for k in range(n):
                            out[p, r, k] = NAN
                    break
    return out_arr, blow_arr


def derivative_run(xpath, h, decay, phi_dt, synth, flux, bint nonlinear):
    cdef const double[:, :, ::1] X = np.ascontiguousarray(xpath, dtype=np.float64)
    cdef const double[:, ::1] H = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[::1] E = np.ascontiguousarray(decay, dtype=np.float64)
    cdef const double[::1] F = np.ascontiguousarray(phi_dt, dtype=np.float64)
    cdef const double[:, ::1] Sy = np.ascontiguousarray(synth, dtype=np.float64)
    cdef const double[:, ::1] Fl = np.ascontiguousarray(flux, dtype=np.float64)
    cdef Py_ssize_t P = X.shape[0], S1 = X.shape[1], n = X.shape[2]
    cdef Py_ssize_t mq = Sy.shape[1]
    out_arr = np.empty((P, S1, n))
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] eta = np.empty(n)
    cdef double[::1] b = np.zeros(n)
    cdef double[::1] ga = np.empty(mq)
    cdef double[::1] gb = np.empty(mq)
    cdef Py_ssize_t p, m, k
    with nogil:
        for p in range(P):
            for k in range(n):
                eta[k] = H[p, k]
                out[p, 0, k] = eta[k]
            for m in range(S1 - 1):
                if nonlinear:
                    _flux(X[p, m], eta, 0, Sy, Fl, ga, gb, b, 2.0)
                    for k in range(n):
                        eta[k] = E[k] * eta[k] + F[k] * b[k]
                else:
                    for k in range(n):
                        eta[k] = E[k] * eta[k]
                for k in range(n):
                    out[p, m + 1, k] = eta[k]
    return out_arr
