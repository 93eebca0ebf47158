# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

SINGULAR_NORM = 1.0e3
cdef double _SINGULAR_NORM = 1.0e3


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def cea_eval(V, A, B, double floor):
    cdef const double complex[:, ::1] Vm = np.ascontiguousarray(V, dtype=np.complex128)
    cdef const double complex[:, :, ::1] Am = np.ascontiguousarray(A, dtype=np.complex128)
    cdef const double complex[:, ::1] Bm = np.ascontiguousarray(B, dtype=np.complex128)
    cdef Py_ssize_t k = Vm.shape[0], n = Vm.shape[1], N = Am.shape[0]

    J_arr = np.zeros(k, dtype=np.float64)
    cl_arr = np.empty((k, N), dtype=np.float64)
    dist_arr = np.empty((k, N), dtype=np.float64)
    R_arr = np.empty((k, N, n), dtype=np.complex128)
    cdef double[::1] J = J_arr
    cdef double[:, ::1] clnorm = cl_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double complex[:, :, ::1] R = R_arr

    work_arr = np.empty((4, n), dtype=np.complex128)
    cdef double complex[:, ::1] w = work_arr
    cdef double complex[::1] v = w[0]
    cdef double complex[::1] a = w[1]
    cdef double complex[::1] h = w[2]
    cdef double complex[::1] pa = w[3]

    cdef Py_ssize_t p, i, r, s
    cdef double nrm, hh, bb, acc, clacc, dacc
    cdef double complex c, bv, g, z, bstar_v

    with nogil:
        for p in range(k):
            nrm = 0.0
            for r in range(n):
                nrm += _abs2(Vm[p, r])
            nrm = sqrt(nrm)
            for r in range(n):
                v[r] = Vm[p, r] / nrm

            for i in range(N):
                # a = A_i v ; c = v* a ; bv = v* B_i ; bb = B_i* B_i
                c = 0.0
                bv = 0.0
                bb = 0.0
                for r in range(n):
                    z = 0.0
                    for s in range(n):
                        z = z + Am[i, r, s] * v[s]
                    a[r] = z
                    c = c + v[r].conjugate() * z
                    bv = bv + v[r].conjugate() * Bm[i, r]
                    bb += _abs2(Bm[i, r])

                hh = 0.0
                for r in range(n):
                    pa[r] = a[r] - c * v[r]
                    h[r] = Bm[i, r] - bv * v[r]
                    hh += _abs2(h[r])

                if hh <= floor:
                    acc = 0.0
                    for r in range(n):
                        R[p, i, r] = -pa[r]
                        acc += _abs2(pa[r])
                    J[p] += acc
                    clnorm[p, i] = _SINGULAR_NORM
                else:
                    g = 0.0
                    for r in range(n):
                        g = g + h[r].conjugate() * pa[r]
                    g = g / hh
                    acc = 0.0
                    clacc = 0.0
                    for r in range(n):
                        z = -(pa[r] - g * h[r])
                        R[p, i, r] = z
                        acc += _abs2(z)
                        clacc += _abs2(a[r] - g * Bm[i, r])
                    J[p] += acc
                    clacc = sqrt(clacc)
                    clnorm[p, i] = clacc if clacc < _SINGULAR_NORM else _SINGULAR_NORM

                bstar_v = bv.conjugate() / bb
                dacc = 0.0
                for r in range(n):
                    dacc += _abs2(v[r] - bstar_v * Bm[i, r])
                dist[p, i] = sqrt(dacc)

    return J_arr, cl_arr, dist_arr, R_arr


def rollout(Acl, x0, seq):
    cdef const double[:, :, ::1] Am = np.ascontiguousarray(Acl, dtype=np.float64)
    cdef const long long[::1] sq = np.ascontiguousarray(seq, dtype=np.int64)
    cdef Py_ssize_t H = sq.shape[0], n = Am.shape[1], N = Am.shape[0]
    states_arr = np.empty((H + 1, n), dtype=np.float64)
    cdef double[:, ::1] X = states_arr
    cdef const double[::1] x0m = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t t, r, s, i
    cdef double acc
    if x0m.shape[0] != n:
        raise ValueError("x0 length does not match the closed loops")
    for r in range(n):
        X[0, r] = x0m[r]
    for t in range(H):
        if sq[t] < 0 or sq[t] >= N:
            raise IndexError(f"mode index {sq[t]} out of range")
    with nogil:
        for t in range(H):
            i = sq[t]
            for r in range(n):
                acc = 0.0
                for s in range(n):
                    acc += Am[i, r, s] * X[t, s]
                X[t + 1, r] = acc
    return states_arr


def greedy_rollout(Acl, x0, Py_ssize_t horizon, P):
    cdef const double[:, :, ::1] Am = np.ascontiguousarray(Acl, dtype=np.float64)
    cdef const double[:, ::1] Pm = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t n = Am.shape[1], N = Am.shape[0]
    states_arr = np.empty((horizon + 1, n), dtype=np.float64)
    seq_arr = np.empty(horizon, dtype=np.int64)
    cand_arr = np.empty((N, n), dtype=np.float64)
    cdef double[:, ::1] X = states_arr
    cdef long long[::1] sq = seq_arr
    cdef double[:, ::1] cand = cand_arr
    cdef const double[::1] x0m = np.ascontiguousarray(x0, dtype=np.float64)
    cdef Py_ssize_t t, r, s, i, best
    cdef double acc, val, bestval
    if x0m.shape[0] != n:
        raise ValueError("x0 length does not match the closed loops")
    for r in range(n):
        X[0, r] = x0m[r]
    with nogil:
        for t in range(horizon):
            best = 0
            bestval = 0.0
            for i in range(N):
                for r in range(n):
                    acc = 0.0
                    for s in range(n):
                        acc += Am[i, r, s] * X[t, s]
                    cand[i, r] = acc
                val = 0.0
                for r in range(n):
                    acc = 0.0
                    for s in range(n):
                        acc += Pm[r, s] * cand[i, s]
                    val += cand[i, r] * acc
                if i == 0 or val > bestval:
                    best = i
                    bestval = val
            sq[t] = best
            for r in range(n):
                X[t + 1, r] = cand[best, r]
    return seq_arr, states_arr
