# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU sequence kernels.

Same interface and layout as ``_gru_py``.  The per-step recurrent products
go straight to BLAS ``gemm`` on preallocated buffers and the gate
nonlinearities run in C loops, so no Python objects are created inside the
time loop.  Row-major ``[rows, cols]`` blocks are handed to the
column-major BLAS as their transposes.
"""

import numpy as np
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline real _sig(real x) noexcept nogil:
    return 0.5 * (tanh(0.5 * x) + 1.0)


cdef inline void _gemm(char ta, char tb, int m, int n, int k, real alpha, real *a, int lda,
                       real *b, int ldb, real beta, real *c, int ldc) noexcept nogil:
    if real is float:
        sgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def gru_forward(real[:, :, ::1] xw, real[:, ::1] h0, real[:, ::1] U, real[:, ::1] mask):
    cdef Py_ssize_t T = xw.shape[0], B = xw.shape[1], H = xw.shape[2] // 3
    dtype = np.float32 if real is float else np.float64
    states_a = np.empty((T, B, H), dtype=dtype)
    z_a = np.zeros((T, B, H), dtype=dtype)
    r_a = np.zeros((T, B, H), dtype=dtype)
    n_a = np.zeros((T, B, H), dtype=dtype)
    cdef real[:, :, ::1] states = states_a
    cdef real[:, :, ::1] z = z_a
    cdef real[:, :, ::1] r = r_a
    cdef real[:, :, ::1] n = n_a
    cdef real[:, ::1] hp = np.empty((B, H), dtype=dtype)
    cdef real[:, ::1] rh = np.empty((B, H), dtype=dtype)
    cdef real[:, ::1] acc = np.empty((B, 3 * H), dtype=dtype)
    cdef Py_ssize_t t, b, i
    cdef int iH = <int>H, iB = <int>B
    cdef real zi

    with nogil:
        for t in range(T):
            for b in range(B):
                for i in range(H):
                    hp[b, i] = states[t - 1, b, i] if t > 0 else h0[b, i]
                for i in range(3 * H):
                    acc[b, i] = xw[t, b, i]
            # acc[:, :2H] += hp @ U[:, :2H]
            _gemm(c'N', c'N', 2 * iH, iB, iH, 1, &U[0, 0], 3 * iH, &hp[0, 0], iH, 1, &acc[0, 0], 3 * iH)
            for b in range(B):
                for i in range(H):
                    if mask[t, b] > 0:
                        z[t, b, i] = _sig(acc[b, i])
                        r[t, b, i] = _sig(acc[b, H + i])
                    rh[b, i] = r[t, b, i] * hp[b, i]
            # acc[:, 2H:] += (r * hp) @ U[:, 2H:]
            _gemm(c'N', c'N', iH, iB, iH, 1, &U[0, 2 * H], 3 * iH, &rh[0, 0], iH, 1, &acc[0, 2 * H], 3 * iH)
            for b in range(B):
                if mask[t, b] <= 0:
                    for i in range(H):
                        states[t, b, i] = hp[b, i]
                    continue
                for i in range(H):
                    n[t, b, i] = tanh(acc[b, 2 * H + i])
                    zi = z[t, b, i]
                    states[t, b, i] = (1 - zi) * n[t, b, i] + zi * hp[b, i]
    return states_a, z_a, r_a, n_a


def gru_backward(real[:, :, ::1] dstates, real[:, ::1] h0, real[:, ::1] U,
                 real[:, ::1] mask, real[:, :, ::1] states, real[:, :, ::1] z,
                 real[:, :, ::1] r, real[:, :, ::1] n):
    cdef Py_ssize_t T = states.shape[0], B = states.shape[1], H = states.shape[2]
    dtype = np.float32 if real is float else np.float64
    dxw_a = np.zeros((T, B, 3 * H), dtype=dtype)
    dU_a = np.zeros((H, 3 * H), dtype=dtype)
    dh_a = np.zeros((B, H), dtype=dtype)
    cdef real[:, :, ::1] dxw = dxw_a
    cdef real[:, ::1] dU = dU_a
    cdef real[:, ::1] dh = dh_a
    cdef real[:, ::1] hp = np.empty((B, H), dtype=dtype)
    cdef real[:, ::1] rh = np.empty((B, H), dtype=dtype)
    cdef real[:, ::1] drh = np.empty((B, H), dtype=dtype)
    cdef real[:, ::1] dhp = np.zeros((B, H), dtype=dtype)
    cdef Py_ssize_t t, b, i
    cdef int iH = <int>H, iB = <int>B
    cdef real g, zi, ri, ni

    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for i in range(H):
                    dh[b, i] = dh[b, i] + dstates[t, b, i]
                    hp[b, i] = states[t - 1, b, i] if t > 0 else h0[b, i]
                    rh[b, i] = r[t, b, i] * hp[b, i]
                if mask[t, b] <= 0:
                    continue
                for i in range(H):
                    zi = z[t, b, i]
                    ni = n[t, b, i]
                    g = dh[b, i]
                    dxw[t, b, 2 * H + i] = g * (1 - zi) * (1 - ni * ni)
                    dxw[t, b, i] = g * (hp[b, i] - ni) * zi * (1 - zi)
            # drh = da_n @ U[:, 2H:].T
            _gemm(c'T', c'N', iH, iB, iH, 1, &U[0, 2 * H], 3 * iH, &dxw[t, 0, 2 * H], 3 * iH, 0, &drh[0, 0], iH)
            for b in range(B):
                if mask[t, b] <= 0:
                    continue
                for i in range(H):
                    ri = r[t, b, i]
                    dxw[t, b, H + i] = drh[b, i] * hp[b, i] * ri * (1 - ri)
                    dhp[b, i] = dh[b, i] * z[t, b, i] + drh[b, i] * ri
            # dU[:, 2H:] += (r * hp).T @ da_n ; dU[:, :2H] += hp.T @ da_zr
            _gemm(c'N', c'T', iH, iH, iB, 1, &dxw[t, 0, 2 * H], 3 * iH, &rh[0, 0], iH, 1, &dU[0, 2 * H], 3 * iH)
            _gemm(c'N', c'T', 2 * iH, iH, iB, 1, &dxw[t, 0, 0], 3 * iH, &hp[0, 0], iH, 1, &dU[0, 0], 3 * iH)
            # dhp += da_zr @ U[:, :2H].T
            _gemm(c'T', c'N', iH, iB, 2 * iH, 1, &U[0, 0], 3 * iH, &dxw[t, 0, 0], 3 * iH, 1, &dhp[0, 0], iH)
            for b in range(B):
                if mask[t, b] <= 0:
                    continue
                for i in range(H):
                    dh[b, i] = dhp[b, i]
    return dxw_a, dh_a, dU_a
