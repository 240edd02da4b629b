"""Backend selection for the iteration kernel.

``SCLIPNET_BACKEND=numpy`` forces the pure-NumPy path; the default is the
numba-compiled kernel, falling back to NumPy when numba is not importable.
Both backends share one contract:

``advance(code, network, W, A, b, x_star, A_mean, X, M, xbar0, t0, noise,
c_phi, tau, c_beta, c_eta, a, lam, out) -> int``

runs ``noise.shape[0]`` iterations starting at iteration ``t0``, updating the
iterates ``X`` and estimators ``M`` in place and writing the per-step metrics
(see ``METRICS``) into ``out``.  It returns the step index at which the run
diverged, or -1.
"""
import os
import warnings

from ._common import CCLIP, DIVERGENCE_LIMIT, GCLIP, METRICS, PLAIN, SCLIP
from . import numpy_impl

ENV_VAR = "SCLIPNET_BACKEND"
BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"{ENV_VAR} must be one of {BACKENDS}, got {name!r}")
    return name


def get_advance(backend: str | None = None):
    """Return the ``advance`` kernel for ``backend`` (default from the environment)."""
    backend = backend or default_backend()
    if backend == "numpy":
        return numpy_impl.advance
    if backend != "numba":
        raise ValueError(f"unknown backend {backend!r}")
    try:
        from . import numba_impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        warnings.warn("numba unavailable, using the NumPy kernel", RuntimeWarning)
        return numpy_impl.advance
    return numba_impl.advance


__all__ = ["SCLIP", "PLAIN", "GCLIP", "CCLIP", "DIVERGENCE_LIMIT", "METRICS",
           "BACKENDS", "ENV_VAR", "default_backend", "get_advance"]
