"""Compiled inner loops for one conversion cycle and its vector-Jacobian product.

The elementwise reference lives in :func:`iadcnet.core.cycle_primitive`.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def cycle_forward(x, zeta_prev, xi_prev, W, delta, stage_noise, use_noise):
    S, K = xi_prev.shape
    P = 4 * K + 1
    zeta = zeta_prev.copy()
    xi = xi_prev.copy()
    used = np.empty((K, S, P))
    pre = np.empty((S, K))
    for k in range(K):
        for s in range(S):
            used[k, s, 0] = x[s]
            for j in range(K):
                used[k, s, 1 + 4 * j] = zeta[s, j]
                used[k, s, 2 + 4 * j] = xi[s, j]
                used[k, s, 3 + 4 * j] = zeta_prev[s, j]
                used[k, s, 4 + 4 * j] = xi_prev[s, j]
            a = 0.0
            for i in range(P):
                a += used[k, s, i] * W[k, i]
            if use_noise:
                a += stage_noise[s, k]
            pre[s, k] = a
            d = delta[k]
            v = a
            if v > d:
                v = d
            elif v < -d:
                v = -d
            xi[s, k] = v
            zeta[s, k] = 0.5 if v >= 0 else -0.5
    return zeta, xi, used, pre


@numba.njit(cache=True)
def cycle_backward(g_zeta_in, g_xi_in, W, delta, used, pre, xi, sign_band):
    S, K = g_xi_in.shape
    P = 4 * K + 1
    g_zeta = g_zeta_in.copy()
    g_xi = g_xi_in.copy()
    g_zeta_prev = np.zeros((S, K))
    g_xi_prev = np.zeros((S, K))
    g_W = np.zeros((K, P))
    g_noise = np.zeros((S, K))
    for k in range(K - 1, -1, -1):
        for s in range(S):
            g_out = g_xi[s, k]
            if abs(xi[s, k]) <= sign_band:
                g_out += g_zeta[s, k]
            if abs(pre[s, k]) <= delta[k]:
                g_a = g_out
            else:
                g_a = 0.0
            g_noise[s, k] = g_a
            if g_a == 0.0:
                continue
            for i in range(P):
                g_W[k, i] += g_a * used[k, s, i]
            for j in range(K):
                gz = g_a * W[k, 1 + 4 * j]
                gx = g_a * W[k, 2 + 4 * j]
                if j < k:
                    g_zeta[s, j] += gz
                    g_xi[s, j] += gx
                else:
                    g_zeta_prev[s, j] += gz
                    g_xi_prev[s, j] += gx
                g_zeta_prev[s, j] += g_a * W[k, 3 + 4 * j]
                g_xi_prev[s, j] += g_a * W[k, 4 + 4 * j]
    return g_zeta_prev, g_xi_prev, g_W, g_noise
