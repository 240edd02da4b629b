"""Reference NumPy implementation of the iteration kernel (one Python loop per step)."""
import numpy as np

from ._common import CCLIP, DIVERGENCE_LIMIT, GCLIP, PLAIN, SCLIP


def direction(code, G, M, t, c_phi, tau, c_beta, c_eta, a, lam):
    """Per-node update direction and step size for iteration ``t``.

    For SCLIP the estimator ``M`` is updated in place and returned as the direction.
    """
    k = t + 1.0
    if code == SCLIP:
        phi = c_phi / np.sqrt(k)
        eps = tau * k ** 0.6
        beta = c_beta / np.sqrt(k)
        Y = G - M
        M *= beta
        M += (1.0 - beta) * (Y * phi / np.hypot(Y, np.sqrt(eps)))
        return M, c_eta / k ** 0.2
    eta = a / k
    if code == PLAIN:
        return G, eta
    if code == CCLIP:
        return np.clip(G, -lam, lam), eta
    if code == GCLIP:
        nrm = np.sqrt((G * G).sum(axis=1))
        scale = np.where(nrm > lam, lam / np.where(nrm > 0, nrm, 1.0), 1.0)
        return G * scale[:, None], eta
    raise ValueError(f"unknown algorithm code {code}")


def mix(network, W, X, D, eta):
    """x_i <- sum_j w_ij (x_j - eta d_j), or the server average when not ``network``."""
    if network:
        X[:] = W @ (X - eta * D)
    else:
        X[:] = X[0] - eta * D.sum(axis=0) / X.shape[0]


def diverged(X):
    return not np.isfinite(X).all() or np.abs(X).max() > DIVERGENCE_LIMIT


def metrics(X, M, xbar0, x_star, A_mean, row):
    xbar = X.mean(axis=0)
    e = xbar - x_star
    row[0] = 0.5 * e @ A_mean @ e
    row[1] = e @ e
    row[2] = np.sqrt(((X - xbar) ** 2).sum())
    row[3] = np.abs(M).max()
    row[4] = np.abs(xbar - xbar0).max()


def advance(code, network, W, A, b, x_star, A_mean, X, M, xbar0, t0, noise,
            c_phi, tau, c_beta, c_eta, a, lam, out):
    steps = noise.shape[0]
    for s in range(steps):
        G = np.einsum("ikl,il->ik", A, X) + b + noise[s]
        D, eta = direction(code, G, M, t0 + s, c_phi, tau, c_beta, c_eta, a, lam)
        mix(network, W, X, D, eta)
        if diverged(X):
            out[s:] = np.nan
            return s
        metrics(X, M, xbar0, x_star, A_mean, out[s])
    return -1
