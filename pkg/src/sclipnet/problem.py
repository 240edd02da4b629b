"""Synthetic heterogeneous quadratic problem.

Node ``i`` holds f_i(x) = 0.5 x^T A_i x + b_i^T x and the network minimizes
f = (1/n) sum_i f_i.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import SingularAggregate
from .noise import NoiseModel, sample

PD_MARGIN = 0.01


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    A: np.ndarray  # (n, d, d)
    b: np.ndarray  # (n, d)
    x_star: np.ndarray
    mu: float
    L: float
    c_star: float

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def A_mean(self) -> np.ndarray:
        return self.A.mean(axis=0)

    @property
    def b_mean(self) -> np.ndarray:
        return self.b.mean(axis=0)


def from_matrices(A, b) -> QuadraticProblem:
    """Build a problem from explicit local data, computing x*, mu, L and c_*."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    if A.ndim != 3 or A.shape[1] != A.shape[2] or b.shape != A.shape[:2]:
        raise ValueError("expected A of shape (n, d, d) and b of shape (n, d)")
    if not np.allclose(A, A.transpose(0, 2, 1), rtol=0, atol=1e-12):
        raise ValueError("local Hessians must be symmetric")
    try:
        factor = scipy.linalg.cho_factor(A.sum(axis=0))
    except np.linalg.LinAlgError as exc:
        raise SingularAggregate("sum of local Hessians is not positive definite") from exc
    x_star = scipy.linalg.cho_solve(factor, -b.sum(axis=0))
    if not np.all(np.isfinite(x_star)):
        raise SingularAggregate("sum of local Hessians is numerically singular")
    eig = np.linalg.eigvalsh(A)
    mu, L = float(eig[:, 0].min()), float(eig[:, -1].max())
    if mu <= 0:
        raise ValueError(f"local costs must be strongly convex (min eigenvalue {mu:.3g})")
    grads = np.einsum("ikl,l->ik", A, x_star) + b
    for arr in (A, b, x_star):
        arr.setflags(write=False)
    return QuadraticProblem(A, b, x_star, mu, L, float(np.abs(grads).max()))


def generate(n: int, d: int, rng: np.random.Generator) -> QuadraticProblem:
    """Draw A_i, b_i entries uniformly from [-1, 1], symmetrize, shift to PD.

    All n*d*d entries of A are drawn first, then the n*d entries of b.  Each
    symmetrized matrix is shifted by (max(0, -lambda_min) + 0.01) I so every
    local cost is strongly convex with margin at least 0.01.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    M = rng.uniform(-1.0, 1.0, size=(n, d, d))
    b = rng.uniform(-1.0, 1.0, size=(n, d))
    S = 0.5 * (M + M.transpose(0, 2, 1))
    lam_min = np.linalg.eigvalsh(S)[:, 0]
    shift = np.maximum(0.0, -lam_min) + PD_MARGIN
    A = S + shift[:, None, None] * np.eye(d)
    return from_matrices(A, b)


def gradient(p: QuadraticProblem, i: int, x) -> np.ndarray:
    return p.A[i] @ np.asarray(x, dtype=float) + p.b[i]


def gradients(p: QuadraticProblem, X) -> np.ndarray:
    """Row-wise local gradients for stacked iterates X of shape (n, d)."""
    return np.einsum("ikl,il->ik", p.A, X) + p.b


def stochastic_gradient(p: QuadraticProblem, i: int, x, noise: NoiseModel, rng: np.random.Generator):
    return gradient(p, i, x) + sample(noise, rng, p.d)


def local_objective(p: QuadraticProblem, i: int, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ p.A[i] @ x + p.b[i] @ x)


def objective(p: QuadraticProblem, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ p.A_mean @ x + p.b_mean @ x)


def objective_gap(p: QuadraticProblem, x) -> float:
    """f(x) - f(x*), evaluated as 0.5 (x-x*)^T Abar (x-x*) to avoid cancellation."""
    e = np.asarray(x, dtype=float) - p.x_star
    return float(max(0.5 * e @ p.A_mean @ e, 0.0))


def save_problem(p: QuadraticProblem, path) -> None:
    """Text dump: header ``n d``, then n*d rows of A (A_0 row 0 first, row-major), then n rows of b."""
    n, d = p.n, p.d
    rows = [f"{n} {d}"]
    fmt = lambda v: " ".join(repr(float(x)) for x in v)
    rows += [fmt(p.A[i, k]) for i in range(n) for k in range(d)]
    rows += [fmt(p.b[i]) for i in range(n)]
    Path(path).write_text("\n".join(rows) + "\n")


def load_problem(path) -> QuadraticProblem:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    n, d = map(int, lines[0].split())
    vals = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    if vals.shape != (n * d + n, d):
        raise ValueError(f"{path}: expected {n * d + n} rows of {d} values")
    return from_matrices(vals[: n * d].reshape(n, d, d), vals[n * d:])
