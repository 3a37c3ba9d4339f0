"""Pure-numpy GRU sequence kernels.

Reference implementation of the kernel interface shared with ``_gru_ext``.
Shapes are time-major: ``xw`` is ``[T, B, 3H]`` (input projections plus bias,
gate order update/reset/candidate), ``h0`` is ``[B, H]``, ``U`` is
``[H, 3H]`` and ``mask`` is ``[T, B]``.  Masked steps carry the previous
state through unchanged.
"""

import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def gru_forward(xw, h0, U, mask):
    T, B, H3 = xw.shape
    H = H3 // 3
    states = np.empty((T, B, H), dtype=xw.dtype)
    z = np.empty_like(states)
    r = np.empty_like(states)
    n = np.empty_like(states)
    U_zr = U[:, : 2 * H]
    U_n = U[:, 2 * H :]
    h = h0
    for t in range(T):
        hu = h @ U_zr
        z[t] = _sigmoid(xw[t, :, :H] + hu[:, :H])
        r[t] = _sigmoid(xw[t, :, H : 2 * H] + hu[:, H:])
        n[t] = np.tanh(xw[t, :, 2 * H :] + (r[t] * h) @ U_n)
        h_new = (1.0 - z[t]) * n[t] + z[t] * h
        m = mask[t][:, None] > 0
        h = np.where(m, h_new, h)
        states[t] = h
        # gate caches are zero on carried steps, as in the compiled kernel
        for g in (z, r, n):
            g[t] = np.where(m, g[t], 0.0)
    return states, z, r, n


def gru_backward(dstates, h0, U, mask, states, z, r, n):
    T, B, H = states.shape
    U_zr = U[:, : 2 * H]
    U_n = U[:, 2 * H :]
    dxw = np.zeros((T, B, 3 * H), dtype=states.dtype)
    dU = np.zeros_like(U)
    dh = np.zeros((B, H), dtype=states.dtype)
    for t in range(T - 1, -1, -1):
        hp = states[t - 1] if t > 0 else h0
        dh = dh + dstates[t]
        m = (mask[t] > 0)[:, None]
        zt, rt, nt = z[t], r[t], n[t]
        da_n = np.where(m, dh * (1.0 - zt) * (1.0 - nt * nt), 0.0)
        dz = dh * (hp - nt)
        rh = rt * hp
        drh = da_n @ U_n.T
        dU[:, 2 * H :] += rh.T @ da_n
        da_z = np.where(m, dz * zt * (1.0 - zt), 0.0)
        da_r = np.where(m, drh * hp * rt * (1.0 - rt), 0.0)
        da_zr = np.concatenate([da_z, da_r], axis=1)
        dU[:, : 2 * H] += hp.T @ da_zr
        dhp = dh * zt + drh * rt + da_zr @ U_zr.T
        dh = np.where(m, dhp, dh)
        dxw[t, :, :H] = da_z
        dxw[t, :, H : 2 * H] = da_r
        dxw[t, :, 2 * H :] = da_n
    return dxw, dh, dU
