"""Clipping operators, decaying hyperparameter schedules and the constants
that certify the convergence-rate exponent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCurvature
from .noise import NoiseModel
from .quadrature import QuadratureSpec, geometric_edges, integrate

# phi used in kappa_phi = 1 + min(phi, 1/sqrt(2(kappa-1))) when kappa > 1
PHI_TILDE_DEFAULT = 1.25 ** 0.25 - 1.0
# c_eta^2 c_phi^2 = budget * sigma^2 / mu^2
BUDGET_KAPPA_ONE = 200.0
BUDGET_KAPPA_GT_ONE = 3.0


def smooth_clip(y, phi, eps):
    """Psi(y) = y * phi / sqrt(y^2 + eps), applied elementwise.

    Odd, strictly increasing, and bounded by ``phi`` in absolute value.
    """
    y = np.asarray(y, dtype=float)
    return y * phi / np.hypot(y, np.sqrt(eps))


def smooth_clip_scalar(y: float, phi: float, eps: float) -> float:
    if phi <= 0 or eps <= 0:
        raise ValueError("phi and eps must be positive")
    return float(y * phi / math.hypot(y, math.sqrt(eps)))


def smooth_clip_vector(y, phi: float, eps: float) -> np.ndarray:
    if phi <= 0 or eps <= 0:
        raise ValueError("phi and eps must be positive")
    return smooth_clip(y, phi, eps)


def hard_clip_global(y, lam: float) -> np.ndarray:
    """min(lam / ||y||, 1) * y along the last axis; zero stays zero."""
    if lam <= 0:
        raise ValueError("clip threshold must be positive")
    y = np.asarray(y, dtype=float)
    nrm = np.linalg.norm(y, axis=-1, keepdims=True)
    scale = np.where(nrm > lam, lam / np.where(nrm > 0, nrm, 1.0), 1.0)
    return y * scale


def hard_clip_component(y, lam: float) -> np.ndarray:
    """Clamp every component to [-lam, lam]."""
    if lam <= 0:
        raise ValueError("clip threshold must be positive")
    return np.clip(np.asarray(y, dtype=float), -lam, lam)


@dataclass(frozen=True)
class Schedule:
    """phi_t = c_phi/sqrt(t+1), eps_t = tau (t+1)^(3/5),
    beta_t = c_beta/sqrt(t+1), eta_t = c_eta/(t+1)^(1/5)."""

    c_phi: float
    tau: float
    c_beta: float
    c_eta: float

    def __post_init__(self):
        if not (self.c_phi > 0 and self.tau > 0 and self.c_eta > 0):
            raise ValueError("c_phi, tau and c_eta must be positive")
        if not 0.0 <= self.c_beta < 1.0:
            raise ValueError("c_beta must lie in [0, 1)")

    def at(self, t):
        s = np.asarray(t, dtype=float) + 1.0
        phi = self.c_phi / np.sqrt(s)
        eps = self.tau * s ** 0.6
        beta = self.c_beta / np.sqrt(s)
        eta = self.c_eta / s ** 0.2
        if np.ndim(t) == 0:
            return float(phi), float(eps), float(beta), float(eta)
        return phi, eps, beta, eta

    @property
    def c_eta_c_phi(self) -> float:
        return self.c_eta * self.c_phi


def schedule_at(s: Schedule, t: int):
    if t < 0:
        raise ValueError("t must be nonnegative")
    return s.at(t)


@dataclass(frozen=True)
class TheoremConstants:
    mu: float
    L: float
    kappa: float
    sigma: float
    d: int
    phi_tilde: float
    kappa_phi: float
    epsilon: float  # analytical slack in the Phi_t(w)/w interval
    cb: float  # mass fraction c_b from the first-moment bound
    tau: float
    ceta_cphi_sq: float  # c_eta^2 c_phi^2
    c_s: float

    @property
    def ceta_cphi(self) -> float:
        return math.sqrt(self.ceta_cphi_sq)

    @property
    def delta_ceiling(self) -> float:
        """min(c_s, 2/5): every rate exponent below it is certified."""
        return min(self.c_s, 0.4)

    def schedule(self, c_beta: float = 0.5, c_phi: float | None = None) -> Schedule:
        """Schedule realizing these constants.

        Only the product c_eta * c_phi is pinned; by default both factors are
        its square root.
        """
        prod = self.ceta_cphi
        if c_phi is None:
            c_phi = math.sqrt(prod)
        return Schedule(c_phi=c_phi, tau=self.tau, c_beta=c_beta, c_eta=prod / c_phi)


def rate_exponent(mu, kappa, sigma, d, cb, epsilon, tau, ceta_cphi_sq) -> float:
    """c_s = c_eta c_1 mu written in terms of the schedule constants."""
    denom = 98.0 * d * kappa ** 2 + (2.0 * sigma ** 2 / (1.0 - cb) ** 2 + tau) / (ceta_cphi_sq * mu ** 2)
    return (1.0 - epsilon) * cb / math.sqrt(denom)


def theorem_constants(mu: float, L: float, sigma: float, d: int,
                      phi_tilde: float = PHI_TILDE_DEFAULT,
                      budget: float | None = None) -> TheoremConstants:
    """Constants of the rate theorem for given curvature, noise and dimension.

    ``budget`` sets c_eta^2 c_phi^2 = budget * sigma^2 / mu^2 (200 when kappa = 1,
    3 otherwise, if not given).
    """
    if not mu > 0 or L < mu:
        raise InvalidCurvature(f"need L >= mu > 0, got mu={mu}, L={L}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    kappa = L / mu
    if math.isclose(kappa, 1.0, rel_tol=0, abs_tol=1e-12):
        kappa = 1.0
        cb, eps = 0.9, 1.0 / 9.0
        prod = (BUDGET_KAPPA_ONE if budget is None else budget) * sigma ** 2 / mu ** 2
        tau = 200.0 * sigma ** 2
        kphi = 1.0
    else:
        if not phi_tilde > 0:
            raise ValueError("phi_tilde must be positive")
        kphi = 1.0 + min(phi_tilde, 1.0 / math.sqrt(2.0 * (kappa - 1.0)))
        k52 = kphi ** 2.5
        eps = (k52 - 1.0) / (k52 + 1.0)
        cb = 1.0 / kphi
        prod = (BUDGET_KAPPA_GT_ONE if budget is None else budget) * sigma ** 2 / mu ** 2
        tau = (98.0 * prod * d * L ** 2 + 2.0 * sigma ** 2 / (1.0 - cb) ** 2) / (kphi - 1.0)
    c_s = rate_exponent(mu, kappa, sigma, d, cb, eps, tau, prod)
    return TheoremConstants(mu=mu, L=L, kappa=kappa, sigma=sigma, d=int(d), phi_tilde=phi_tilde,
                            kappa_phi=kphi, epsilon=eps, cb=cb, tau=tau, ceta_cphi_sq=prod, c_s=c_s)


def phi_ratio_interval(schedule: Schedule, consts: TheoremConstants) -> tuple[float, float]:
    """(c1, c2): bounds on (t+1)^(4/5) * Phi_t(w)/w for large t."""
    c_phi, c_eta, tau = schedule.c_phi, schedule.c_eta, schedule.tau
    d, L, sigma, cb, eps = consts.d, consts.L, consts.sigma, consts.cb, consts.epsilon
    c1 = (1.0 - eps) * cb * c_phi / math.sqrt(
        98.0 * c_eta ** 2 * c_phi ** 2 * d * L ** 2 + 2.0 * sigma ** 2 / (1.0 - cb) ** 2 + tau
    )
    c2 = (1.0 + eps) * c_phi / math.sqrt(tau)
    return c1, c2


def phi_ratio_w_range(schedule: Schedule, d: int, L: float, t: int) -> float:
    """Largest |w| covered by the interval bound at iteration t: 7 c_eta c_phi sqrt(d) L t^(3/10)."""
    return 7.0 * schedule.c_eta * schedule.c_phi * math.sqrt(d) * L * t ** 0.3


def _odd_part_edges(noise: NoiseModel, w: float) -> np.ndarray:
    lo, hi = noise.support
    if not math.isclose(lo, -hi, rel_tol=1e-12):
        raise ValueError("noise support must be symmetric about 0")
    edges = geometric_edges(0.0, hi, noise.unit)
    if 0 < abs(w) < hi:
        edges = np.unique(np.append(edges, abs(w)))
    return edges


def _noise_tail_mass(noise: NoiseModel, a: float) -> float:
    """Upper bound on P(|u| > a) for an untruncated law (first-moment bound)."""
    if noise.truncation is not None:
        return 0.0
    return min(1.0, noise.sigma / a)


def phi_mean_quadrature(w: float, schedule: Schedule, t: int, noise: NoiseModel,
                        spec: QuadratureSpec | None = None, rtol: float = 1e-9) -> float:
    """Phi_t(w) = E[Psi_t(w + u)] for u drawn from ``noise``.

    Uses the symmetric form int_0^a [Psi(w+u) + Psi(w-u)] p(u) du so the result
    is exactly odd in w.  For untruncated laws the mass beyond the integration
    limit contributes at most phi_t * P(|u| > a).
    """
    phi, eps, _, _ = schedule.at(t)
    if w == 0.0:
        return 0.0
    if noise.kind == "zero":
        return float(smooth_clip(w, phi, eps))
    spec = spec or QuadratureSpec(panels=64)
    f = lambda u: (smooth_clip(w + u, phi, eps) + smooth_clip(w - u, phi, eps)) * noise.density(u)
    return integrate(f, _odd_part_edges(noise, w), spec.panels, 0.0, spec.max_doublings, rtol)


def phi_mean_ratio(w: float, schedule: Schedule, t: int, noise: NoiseModel,
                   spec: QuadratureSpec | None = None, rtol: float = 1e-9) -> float:
    """Phi_t(w) / w, integrated directly to keep full relative accuracy for small w."""
    phi, eps, _, _ = schedule.at(t)
    spec = spec or QuadratureSpec(panels=64)
    if w == 0.0:
        return phi_mean_slope_at_zero(schedule, t, noise, spec, rtol)
    if noise.kind == "zero":
        return float(smooth_clip(w, phi, eps)) / w
    f = lambda u: (smooth_clip(w + u, phi, eps) + smooth_clip(w - u, phi, eps)) / w * noise.density(u)
    return integrate(f, _odd_part_edges(noise, w), spec.panels, 0.0, spec.max_doublings, rtol)


def phi_mean_slope_at_zero(schedule: Schedule, t: int, noise: NoiseModel,
                           spec: QuadratureSpec | None = None, rtol: float = 1e-9) -> float:
    """Phi_t'(0) = phi_t * int eps_t / (u^2 + eps_t)^(3/2) p(u) du."""
    phi, eps, _, _ = schedule.at(t)
    if noise.kind == "zero":
        return phi / math.sqrt(eps)
    spec = spec or QuadratureSpec(panels=64)
    f = lambda u: 2.0 * phi * eps / (u * u + eps) ** 1.5 * noise.density(u)
    return integrate(f, _odd_part_edges(noise, 0.0), spec.panels, 0.0, spec.max_doublings, rtol)


def phi_mean_tail_bound(schedule: Schedule, t: int, noise: NoiseModel) -> float:
    """Bound on the part of Phi_t left out by integrating only over ``noise.support``."""
    phi = schedule.at(t)[0]
    return phi * _noise_tail_mass(noise, noise.support[1])
