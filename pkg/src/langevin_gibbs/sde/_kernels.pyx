# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel for blocks of independent trajectories.

Same contract as ``_fallback.advance``; see that module for the argument
description.

The block is processed in tiles of trajectories.  Inside a tile the time
loop is outermost, so the per-step dependency chains of different
trajectories overlap.  Small systems compute ``V q`` with plain loops; from
``GEMM_MIN_N`` on, one dgemm per step handles the whole tile.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

cdef Py_ssize_t GEMM_MIN_N = 12
cdef Py_ssize_t SMALL_TILE = 32
cdef Py_ssize_t GEMM_TILE = 256
cdef double GUARD2 = 1e24


cdef int _advance_tile(const double *vp, double alpha, double amp, Py_ssize_t idx,
                       double dt, int scheme, double[:, ::1] Q, double[:, ::1] P,
                       const double[:, ::1] noise, long step0, const long[::1] ckpt_steps,
                       double[:, :, ::1] out, Py_ssize_t b0, Py_ssize_t b1, bint gemm,
                       double *f, long *bad) noexcept nogil:
    cdef Py_ssize_t N = Q.shape[1], L = noise.shape[1], K = ckpt_steps.shape[0]
    cdef Py_ssize_t b, s, i, j, k
    cdef long step
    cdef int n = <int> N, m = <int> (b1 - b0)
    cdef double one = 1.0, zero = 0.0, norm2, qj
    cdef double *q
    cdef double *p
    cdef double *fb
    cdef char tr = b'N'
    k = 0
    while k < K and ckpt_steps[k] <= step0:
        k += 1
    for s in range(L):
        step = step0 + s + 1
        if gemm:
            # column-major: f^T (N x m) = V (N x N) q^T (N x m), V symmetric
            dgemm(&tr, &tr, &n, &m, &n, &one, <double *> vp, &n, &Q[b0, 0], &n, &zero, f, &n)
        for b in range(b0, b1):
            q = &Q[b, 0]
            p = &P[b, 0]
            fb = f + (b - b0) * N
            if not gemm:
                for i in range(N):
                    fb[i] = 0.0
                for j in range(N):
                    qj = q[j]
                    for i in range(N):
                        fb[i] = fb[i] + qj * vp[j * N + i]
            fb[idx] = fb[idx] + alpha * p[idx]
            if scheme == 0:
                for i in range(N):
                    q[i] = q[i] + dt * p[i]
                    p[i] = p[i] - dt * fb[i]
                p[idx] = p[idx] + amp * noise[b, s]
            else:
                for i in range(N):
                    p[i] = p[i] - dt * fb[i]
                p[idx] = p[idx] + amp * noise[b, s]
                for i in range(N):
                    q[i] = q[i] + dt * p[i]
            norm2 = 0.0
            for i in range(N):
                norm2 = norm2 + q[i] * q[i] + p[i] * p[i]
            if not (norm2 <= GUARD2):
                bad[0] = b
                bad[1] = step
                return 1
        while k < K and ckpt_steps[k] == step:
            for b in range(b0, b1):
                for i in range(N):
                    out[k, b, i] = Q[b, i]
                    out[k, b, N + i] = P[b, i]
            k += 1
    return 0


def advance(const double[:, ::1] V, double alpha, double sigma, Py_ssize_t idx,
            double dt, int scheme,
            double[:, ::1] Q, double[:, ::1] P,
            const double[:, ::1] noise, long step0,
            const long[::1] ckpt_steps, double[:, :, ::1] out):
    cdef Py_ssize_t B = Q.shape[0], N = Q.shape[1]
    cdef Py_ssize_t b0, tile
    cdef bint gemm = N >= GEMM_MIN_N
    cdef double amp = sigma * sqrt(dt)
    cdef long bad[2]
    cdef int status = 0
    cdef double *f
    if B == 0 or noise.shape[1] == 0:
        return 0, -1, -1
    tile = GEMM_TILE if gemm else SMALL_TILE
    if tile > B:
        tile = B
    f = <double *> malloc(tile * N * sizeof(double))
    if f == NULL:
        raise MemoryError()
    try:
        with nogil:
            b0 = 0
            while b0 < B:
                status = _advance_tile(&V[0, 0], alpha, amp, idx, dt, scheme, Q, P, noise, step0,
                                       ckpt_steps, out, b0, min(b0 + tile, B), gemm, f, bad)
                if status:
                    break
                b0 += tile
    finally:
        free(f)
    if status:
        return 1, bad[0], bad[1]
    return 0, -1, -1
