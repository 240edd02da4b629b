"""Communication graphs, doubly stochastic mixing matrices and their spectral gap."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegreeTooLarge, Disconnected, NonConvergence, NonStochastic


@dataclass(frozen=True, eq=False)
class Network:
    """Undirected graph on ``n`` nodes; self-loops are implicit and not stored."""

    n: int
    adjacency: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool).copy()
        if adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(adj, False)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> list[int]:
        return np.flatnonzero(self.adjacency[i]).tolist()

    @property
    def connected(self) -> bool:
        if self.n == 1:
            return True
        ncomp, _ = connected_components(self.adjacency.astype(np.int8), directed=False)
        return ncomp == 1


def complete_graph(n: int) -> Network:
    adj = ~np.eye(n, dtype=bool)
    return Network(n, adj, "complete")


def build_cycle_with_degree(n: int, degree: int, odd: str = "reject") -> Network:
    """Circulant ring: node i linked to i±1, ..., i±degree/2 (mod n).

    For an odd ``degree`` pass ``odd="chord"``: the ring i±1..i±(degree-1)/2 is
    completed with the diametric chord i <-> i+n/2 (needs even n), which gives
    every node exactly ``degree`` neighbours.
    """
    if n < 1 or degree < 1:
        raise ValueError("n and degree must be positive")
    if degree >= n:
        raise DegreeTooLarge(f"degree {degree} must be < n = {n}")
    adj = np.zeros((n, n), dtype=bool)
    idx = np.arange(n)
    if degree % 2:
        if odd != "chord":
            raise ValueError("odd degree needs odd='chord' (symmetric circulants have even degree)")
        if n % 2:
            raise ValueError("the chord construction needs an even number of nodes")
        half = (degree - 1) // 2
        adj[idx, (idx + n // 2) % n] = True
    else:
        half = degree // 2
    for k in range(1, half + 1):
        adj[idx, (idx + k) % n] = True
    adj = adj | adj.T
    return Network(n, adj, f"cycle{degree}")


def load_edge_list(path, n: int) -> Network:
    """Read a custom graph: one ``i j`` pair per line, 0-indexed, ``#`` comments."""
    adj = np.zeros((n, n), dtype=bool)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j'")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"{path}:{lineno}: node index out of range")
        if i != j:
            adj[i, j] = adj[j, i] = True
    return Network(n, adj, "custom")


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    W: np.ndarray
    lam: float

    @property
    def n(self) -> int:
        return self.W.shape[0]


def _check_stochastic(W: np.ndarray, tol: float) -> None:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise NonStochastic("mixing matrix must be square")
    rows = np.abs(W.sum(axis=1) - 1.0).max()
    cols = np.abs(W.sum(axis=0) - 1.0).max()
    if max(rows, cols) > tol or (W < -tol).any():
        raise NonStochastic(f"not doubly stochastic (row err {rows:.2e}, col err {cols:.2e})")


def spectral_gap(W, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """||W - 11^T/n||_2 by power iteration on (W - J)^T (W - J).

    Raises NonStochastic when row or column sums deviate from 1 by more than 1e-9.
    """
    W = np.asarray(W, dtype=float)
    _check_stochastic(W, 1e-9)
    n = W.shape[0]
    D = W - np.full((n, n), 1.0 / n)
    B = D.T @ D
    if not np.any(np.abs(B) > 0):
        return 0.0
    v = np.random.default_rng(12345).standard_normal(n)
    v /= np.linalg.norm(v)
    est = v @ B @ v
    for _ in range(max_iter):
        w = B @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new = v @ B @ v
        if abs(new - est) <= tol * abs(new):
            return float(np.sqrt(max(new, 0.0)))
        est = new
    raise NonConvergence("power iteration for the spectral gap did not converge")


def mixing(W) -> MixingMatrix:
    """Wrap an explicit doubly stochastic matrix, computing its spectral gap."""
    W = np.array(W, dtype=float)
    _check_stochastic(W, 1e-12)
    lam = spectral_gap(W)
    if lam >= 1.0 - 1e-12:
        warnings.warn(f"spectral gap {lam:.6g} is not < 1; the graph is not connected", stacklevel=2)
    W.setflags(write=False)
    return MixingMatrix(W, lam)


def metropolis_weights(net: Network) -> MixingMatrix:
    """Metropolis-Hastings weights w_ij = 1 / (1 + max(deg_i, deg_j)) on edges."""
    if not net.connected:
        raise Disconnected("metropolis weights need a connected graph")
    deg = net.degrees
    W = np.where(net.adjacency, 1.0 / (1.0 + np.maximum.outer(deg, deg)), 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return mixing(W)


def complete_uniform(n: int) -> MixingMatrix:
    """W = 11^T / n, for which the spectral gap is exactly 0."""
    if n < 1:
        raise ValueError("n must be >= 1")
    W = np.full((n, n), 1.0 / n)
    W.setflags(write=False)
    return MixingMatrix(W, 0.0)
