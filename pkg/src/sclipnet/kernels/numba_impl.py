"""Compiled (numba) iteration kernel; same contract as ``numpy_impl.advance``."""
import math

import numpy as np
from numba import njit

from ._common import CCLIP, DIVERGENCE_LIMIT, GCLIP, PLAIN, SCLIP


@njit(cache=True)
def _direction(code, G, M, D, t, c_phi, tau, c_beta, c_eta, a, lam):
    n, d = G.shape
    k = t + 1.0
    if code == SCLIP:
        phi = c_phi / math.sqrt(k)
        root_eps = math.sqrt(tau * k ** 0.6)
        beta = c_beta / math.sqrt(k)
        for i in range(n):
            for j in range(d):
                y = G[i, j] - M[i, j]
                M[i, j] = beta * M[i, j] + (1.0 - beta) * (y * phi / math.hypot(y, root_eps))
                D[i, j] = M[i, j]
        return c_eta / k ** 0.2
    for i in range(n):
        scale = 1.0
        if code == GCLIP:
            s = 0.0
            for j in range(d):
                s += G[i, j] * G[i, j]
            nrm = math.sqrt(s)
            if nrm > lam:
                scale = lam / nrm
        for j in range(d):
            g = G[i, j]
            if code == CCLIP:
                g = min(max(g, -lam), lam)
            elif code == GCLIP:
                g = g * scale
            D[i, j] = g
    return a / k


@njit(cache=True)
def advance(code, network, W, A, b, x_star, A_mean, X, M, xbar0, t0, noise,
            c_phi, tau, c_beta, c_eta, a, lam, out):
    steps, n, d = noise.shape
    G = np.empty((n, d))
    D = np.empty((n, d))
    Z = np.empty((n, d))
    xbar = np.empty(d)
    e = np.empty(d)
    for s in range(steps):
        for i in range(n):
            for k in range(d):
                acc = b[i, k] + noise[s, i, k]
                for l in range(d):
                    acc += A[i, k, l] * X[i, l]
                G[i, k] = acc
        eta = _direction(code, G, M, D, t0 + s, c_phi, tau, c_beta, c_eta, a, lam)
        if network:
            for i in range(n):
                for k in range(d):
                    Z[i, k] = X[i, k] - eta * D[i, k]
            for i in range(n):
                for k in range(d):
                    acc = 0.0
                    for j in range(n):
                        acc += W[i, j] * Z[j, k]
                    X[i, k] = acc
        else:
            for k in range(d):
                acc = 0.0
                for j in range(n):
                    acc += D[j, k]
                v = X[0, k] - eta * acc / n
                for i in range(n):
                    X[i, k] = v
        bad = False
        for i in range(n):
            for k in range(d):
                v = X[i, k]
                if not math.isfinite(v) or abs(v) > DIVERGENCE_LIMIT:
                    bad = True
        if bad:
            out[s:, :] = np.nan
            return s
        for k in range(d):
            acc = 0.0
            for i in range(n):
                acc += X[i, k]
            xbar[k] = acc / n
            e[k] = xbar[k] - x_star[k]
        gap = 0.0
        for k in range(d):
            acc = 0.0
            for l in range(d):
                acc += A_mean[k, l] * e[l]
            gap += e[k] * acc
        cons = 0.0
        minf = 0.0
        for i in range(n):
            for k in range(d):
                z = X[i, k] - xbar[k]
                cons += z * z
                minf = max(minf, abs(M[i, k]))
        drift = 0.0
        mse = 0.0
        for k in range(d):
            mse += e[k] * e[k]
            drift = max(drift, abs(xbar[k] - xbar0[k]))
        out[s, 0] = 0.5 * gap
        out[s, 1] = mse
        out[s, 2] = math.sqrt(cons)
        out[s, 3] = minf
        out[s, 4] = drift
    return -1
