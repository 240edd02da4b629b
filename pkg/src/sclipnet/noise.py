"""Symmetric scalar gradient-noise laws and their truncated inverse-CDF samplers.

The heavy-tailed law of interest has density

    p(u) = c_p / ((u^2 + 2) * ln(u^2 + 2)^2)

which has a finite first absolute moment but no moment of order > 1.  For
simulation it is truncated to a finite range, its CDF is tabulated on a
uniform grid (trapezoidal accumulation) and inverted by linear interpolation.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidRange, SamplerNotBuilt
from .quadrature import QuadratureSpec, geometric_edges, integrate, symmetric_edges

KINDS = ("example", "gaussian", "laplace", "zero")

DEFAULT_GRID_SIZE = 4096
DEFAULT_TRUNCATION = (-100.0, 100.0)
# Upper limit of the explicit quadrature for the untruncated heavy-tailed law;
# mass and moments beyond it come from closed-form tail expressions.
FULL_SUPPORT_LIMIT = 1e6


def example_kernel(u):
    """Unnormalized heavy-tailed density 1 / ((u^2+2) ln^2(u^2+2))."""
    v = np.asarray(u, dtype=float) ** 2 + 2.0
    return 1.0 / (v * np.log(v) ** 2)


def density_example_heavy_tail(u, cp: float):
    """Heavy-tailed density with normalization constant ``cp``; even in ``u``."""
    return cp * example_kernel(u)


def example_tail_bounds(x: float) -> tuple[float, float]:
    """Lower and upper bounds on the unnormalized tail integral of the kernel over (x, inf).

    With L(u) = ln(u^2+2) one has d/du[1/(u L^2)] = -1/(u^2 L^2) - 4/((u^2+2) L^3),
    which brackets the kernel from both sides for u >= x.
    """
    if x <= 0:
        raise ValueError("tail bounds need x > 0")
    lx = np.log(x * x + 2.0)
    upper = 1.0 / (x * lx * lx)
    lower = upper / (1.0 + 2.0 / (x * x) + 4.0 / lx)
    return float(lower), float(upper)


def example_tail_estimate(x: float) -> float:
    lo, hi = example_tail_bounds(x)
    return 0.5 * (lo + hi)


def example_abs_moment_tail(x: float) -> float:
    """Exact value of the integral of u * kernel(u) over (x, inf): 1 / (2 ln(x^2+2))."""
    return 0.5 / float(np.log(x * x + 2.0))


def normalization_constant(spec: QuadratureSpec | None = None, kind: str = "example") -> float:
    """Normalization constant c_p of the heavy-tailed density.

    Integrates the kernel over ``spec.domain`` (must be symmetric about 0) and
    adds the midpoint of the analytic tail bracket beyond it.
    """
    if kind != "example":
        raise ValueError(f"normalization constant is only defined for the heavy-tailed law, not {kind!r}")
    spec = spec or QuadratureSpec()
    return _normalization_constant(spec)


@lru_cache(maxsize=16)
def _normalization_constant(spec: QuadratureSpec) -> float:
    lo, hi = spec.domain
    if not np.isclose(lo, -hi, rtol=0, atol=1e-12 * max(1.0, hi)):
        raise ValueError("normalization domain must be symmetric about 0")
    half = integrate(example_kernel, geometric_edges(0.0, hi), spec.panels, spec.tol, spec.max_doublings)
    return 1.0 / (2.0 * (half + example_tail_estimate(hi)))


def _gaussian_pdf(u, s):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * (u / s) ** 2) / (s * np.sqrt(2.0 * np.pi))


def _laplace_pdf(u, b):
    u = np.asarray(u, dtype=float)
    return np.exp(-np.abs(u) / b) / (2.0 * b)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """A symmetric scalar noise law, optionally truncated to ``truncation``.

    Derived on construction: ``cp`` (heavy-tailed kind only), ``mass`` (full-law
    probability of the truncation range) and ``sigma``, the first absolute
    moment of the law that is actually sampled (truncated and renormalized when
    a truncation range is set).  The CDF table (``grid``, ``cdf``) is filled by
    :func:`build_truncated_sampler`.
    """

    kind: str = "example"
    truncation: tuple[float, float] | None = DEFAULT_TRUNCATION
    grid_size: int = DEFAULT_GRID_SIZE
    stddev: float = 1.0
    scale: float = 1.0
    cp: float = field(init=False, default=float("nan"))
    mass: float = field(init=False, default=1.0)
    sigma: float = field(init=False, default=0.0)
    grid: np.ndarray | None = field(init=False, default=None, repr=False)
    cdf: np.ndarray | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.truncation is not None:
            lo, hi = map(float, self.truncation)
            if not lo < hi:
                raise InvalidRange(f"truncation range needs lo < hi, got {self.truncation}")
            object.__setattr__(self, "truncation", (lo, hi))
        if self.kind == "gaussian" and not self.stddev > 0:
            raise ValueError("gaussian noise needs stddev > 0")
        if self.kind == "laplace" and not self.scale > 0:
            raise ValueError("laplace noise needs scale > 0")
        if self.kind == "example":
            object.__setattr__(self, "cp", normalization_constant())
        if self.kind != "zero":
            object.__setattr__(self, "mass", self._range_mass())
            object.__setattr__(self, "sigma", self._first_abs_moment())

    # -- densities ---------------------------------------------------------
    @property
    def unit(self) -> float:
        return {"gaussian": self.stddev, "laplace": self.scale}.get(self.kind, 1.0)

    def full_density(self, u):
        """Density of the untruncated law."""
        if self.kind == "example":
            return density_example_heavy_tail(u, self.cp)
        if self.kind == "gaussian":
            return _gaussian_pdf(u, self.stddev)
        if self.kind == "laplace":
            return _laplace_pdf(u, self.scale)
        raise ValueError("the zero law has no density")

    def density(self, u):
        """Density of the sampled law (renormalized on the truncation range)."""
        p = self.full_density(u)
        if self.truncation is None:
            return p
        lo, hi = self.truncation
        u = np.asarray(u, dtype=float)
        return np.where((u >= lo) & (u <= hi), p / self.mass, 0.0)

    @property
    def support(self) -> tuple[float, float]:
        """Finite integration domain for the sampled law."""
        if self.truncation is not None:
            return self.truncation
        return {"example": (-FULL_SUPPORT_LIMIT, FULL_SUPPORT_LIMIT)}.get(
            self.kind, (-40.0 * self.unit, 40.0 * self.unit)
        )

    # -- moments -----------------------------------------------------------
    def _range_mass(self) -> float:
        if self.truncation is None:
            return 1.0
        lo, hi = self.truncation
        edges = symmetric_edges(lo, hi, self.unit)
        return integrate(self.full_density, edges, 64, 1e-13)

    def _first_abs_moment(self) -> float:
        f = lambda u: np.abs(u) * self.full_density(u)
        if self.truncation is not None:
            lo, hi = self.truncation
            return integrate(f, symmetric_edges(lo, hi, self.unit), 64, 1e-13) / self.mass
        if self.kind == "gaussian":
            return self.stddev * np.sqrt(2.0 / np.pi)
        if self.kind == "laplace":
            return self.scale
        return full_support_first_moment(self.cp)


def full_support_first_moment(cp: float, limit: float = FULL_SUPPORT_LIMIT) -> float:
    """First absolute moment of the untruncated heavy-tailed law.

    Quadrature on [0, limit] plus the exact tail 1/(2 ln(limit^2+2)); the closed
    form is cp / ln 2.
    """
    half = integrate(lambda u: u * example_kernel(u), geometric_edges(0.0, limit), 64, 1e-13)
    return 2.0 * cp * (half + example_abs_moment_tail(limit))


def build_truncated_sampler(model: NoiseModel) -> NoiseModel:
    """Return a copy of ``model`` with its inverse-CDF table populated.

    The density is evaluated on ``grid_size`` uniformly spaced points over the
    truncation range, accumulated with the trapezoid rule and renormalized so
    the table ends at exactly 1.
    """
    if model.truncation is None and model.kind != "zero":
        raise InvalidRange("sampling needs a finite truncation range")
    if model.grid_size < 1024:
        raise ValueError("grid_size must be >= 1024")
    out = dataclasses.replace(model)
    n = model.grid_size
    if model.kind == "zero":
        grid = np.zeros(n)
        cdf = np.linspace(0.0, 1.0, n)
    else:
        lo, hi = model.truncation
        grid = np.linspace(lo, hi, n)
        pdf = model.full_density(grid)
        steps = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid)
        cdf = np.concatenate([[0.0], np.cumsum(steps)])
        cdf /= cdf[-1]
        cdf[-1] = 1.0
    grid.setflags(write=False)
    cdf.setflags(write=False)
    object.__setattr__(out, "grid", grid)
    object.__setattr__(out, "cdf", cdf)
    return out


def table_cdf(model: NoiseModel, x):
    """Piecewise-linear CDF of the tabulated sampler."""
    if model.cdf is None:
        raise SamplerNotBuilt("call build_truncated_sampler first")
    return np.interp(x, model.grid, model.cdf)


def sample(model: NoiseModel, rng: np.random.Generator, count) -> np.ndarray:
    """Draw i.i.d. values by inverting the tabulated CDF.

    ``count`` may be an int or a shape tuple.  Output is a deterministic
    function of the generator state.
    """
    if model.cdf is None:
        raise SamplerNotBuilt("call build_truncated_sampler first")
    u = rng.random(count)
    if model.kind == "zero":
        return np.zeros_like(u)
    return np.interp(u, model.cdf, model.grid)


def tail_probability(model: NoiseModel, x: float, limit: float = FULL_SUPPORT_LIMIT) -> float:
    """P(u > x) under the untruncated heavy-tailed law (estimate)."""
    return tail_probability_bounds(model, x, limit)[2]


def tail_probability_bounds(model: NoiseModel, x: float, limit: float = FULL_SUPPORT_LIMIT):
    """(lower, upper, estimate) for P(u > x) under the untruncated heavy-tailed law.

    Quadrature on (x, limit] plus the analytic bracket for the remainder past
    ``limit``.
    """
    if model.kind != "example":
        raise ValueError("tail_probability is defined for the heavy-tailed law only")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x >= limit:
        lo, hi = example_tail_bounds(x)
        body = 0.0
    else:
        body = integrate(example_kernel, geometric_edges(x, limit), 64, 1e-14)
        lo, hi = example_tail_bounds(limit)
    cp = model.cp
    return cp * (body + lo), cp * (body + hi), cp * (body + 0.5 * (lo + hi))
