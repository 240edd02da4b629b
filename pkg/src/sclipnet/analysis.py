"""Offline checks and estimates: rate-exponent fits, sure-bound verification
of recorded traces, numerical facts about the heavy-tailed law, the
Phi_t(w)/w interval, and aggregation across runs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .clipping import Schedule, TheoremConstants, phi_ratio_interval, phi_ratio_w_range, phi_mean_ratio
from .errors import InsufficientData, MismatchedTraces, NonPositiveValues
from .noise import (NoiseModel, build_truncated_sampler, example_kernel, sample,
                    tail_probability_bounds)
from .quadrature import QuadratureSpec, geometric_edges, integrate
from .topology import MixingMatrix, spectral_gap
from .trace import MONITORS, Trace

MIN_FIT_POINTS = 30


# ---------------------------------------------------------------- rate fit

@dataclass(frozen=True)
class RateFit:
    window_start: int
    window_end: int
    slope: float
    intercept: float
    r_squared: float
    delta_hat: float
    points: int


def fit_rate_exponent(t, values=None, window: tuple[float, float] = (0.5, 1.0)) -> RateFit:
    """Least-squares line through (log(t+1), log value) over a tail window.

    ``t`` may be an :class:`AggregateSeries`, in which case its mean MSE is
    fitted.  The window is given as fractions of the last iteration.

    Raises
    ------
    InsufficientData
        Fewer than 30 points fall in the window.
    NonPositiveValues
        A value in the window is zero, negative or not finite.
    """
    if values is None:
        t, values = t.t, t.mean_mse
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    lo_f, hi_f = window
    if not 0.0 <= lo_f < hi_f <= 1.0:
        raise ValueError(f"window fractions must satisfy 0 <= start < end <= 1, got {window}")
    T = t.max()
    sel = (t >= lo_f * T) & (t <= hi_f * T)
    if sel.sum() < MIN_FIT_POINTS:
        raise InsufficientData(f"{int(sel.sum())} points in window, need {MIN_FIT_POINTS}")
    x, y = np.log(t[sel] + 1.0), values[sel]
    if not (np.all(np.isfinite(y)) and np.all(y > 0)):
        raise NonPositiveValues("rate fit needs positive finite values in the window")
    y = np.log(y)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot)
    ts = t[sel]
    return RateFit(int(ts[0]), int(ts[-1]), float(slope), float(intercept), r2, float(-slope), int(sel.sum()))


# ---------------------------------------------------------------- aggregation

@dataclass(eq=False)
class AggregateSeries:
    t: np.ndarray
    mean_mse: np.ndarray
    mean_gap_log10: np.ndarray
    consensus: np.ndarray
    violations: np.ndarray  # runs violating any monitor at each row
    diverged: np.ndarray  # runs flagged diverged at each row
    runs: int
    label: str = ""

    @property
    def final_gap_log10(self) -> float:
        return float(self.mean_gap_log10[-1])


def aggregate(traces) -> AggregateSeries:
    """Element-wise means over runs; diverged rows are left out of the means."""
    traces = list(traces)
    if not traces:
        raise MismatchedTraces("nothing to aggregate")
    t = traces[0].t
    label = traces[0].header.get("label", "")
    for tr in traces[1:]:
        if len(tr.t) != len(t) or not np.array_equal(tr.t, t):
            raise MismatchedTraces("traces have different iteration grids")
        if tr.header.get("label", "") != label:
            raise MismatchedTraces("traces come from different algorithms")
    stack = lambda get: np.array([get(tr) for tr in traces])
    viol = np.zeros(len(t), dtype=int)
    for tr in traces:
        bad = np.zeros(len(t), dtype=bool)
        for k in MONITORS:
            mon = tr.monitors.get(k)
            if mon is not None:
                bad |= ~mon.ok
        viol += bad
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return AggregateSeries(
            t=t.copy(),
            mean_mse=np.nanmean(stack(lambda tr: tr.mse), axis=0),
            mean_gap_log10=np.nanmean(stack(lambda tr: tr.gap_log10), axis=0),
            consensus=np.nanmean(stack(lambda tr: tr.consensus), axis=0),
            violations=viol,
            diverged=stack(lambda tr: tr.diverged).sum(axis=0),
            runs=len(traces),
            label=label,
        )


# ---------------------------------------------------------------- sure bounds

@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "n/a"
    first_violation: int | None = None
    worst_ratio: float | None = None  # max value / bound
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"


@dataclass
class Report:
    title: str
    rows: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"title": self.title, "passed": self.passed,
                "rows": [asdict(r) for r in self.rows], **self.extra}

    def table(self) -> str:
        if not self.rows:
            return f"{self.title}\n(no rows)\n"
        dicts = [asdict(r) for r in self.rows]
        keys = list(dicts[0])
        cell = lambda v: ("%.6g" % v) if isinstance(v, float) else ("-" if v is None else str(v))
        body = [[cell(d[k]) for k in keys] for d in dicts]
        width = [max(len(k), *(len(b[j]) for b in body)) for j, k in enumerate(keys)]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, width)).rstrip()
        out = [self.title, line(keys), line(["-" * w for w in width])] + [line(b) for b in body]
        out.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(out) + "\n"


SCLIP_KINDS = ("sclip_ef", "sclip_ef_network")

# same floating-point allowance as the on-line monitors
_RTOL, _ATOL = 1e-9, 1e-12


def _within(value: float, bound: float) -> bool:
    return value <= bound * (1.0 + _RTOL) + _ATOL


def verify_sure_bounds(trace: Trace, schedule: Schedule | None, W=None) -> Report:
    """Re-check the three sure bounds on every row of a trace.

    The bounds are recomputed here with plain Python loops, independently of
    the monitors written during the run.  ``W`` may be a mixing matrix, a raw
    array (its spectral gap is computed) or the gap itself; it defaults to the
    ``lambda`` recorded in the trace header.  Non-SClip traces get "n/a".
    """
    rep = Report("sure-bound check")
    kind = trace.header.get("algorithm", "")
    if kind not in SCLIP_KINDS or schedule is None:
        for k in MONITORS:
            rep.rows.append(CheckResult(k, "n/a", detail=f"not defined for {kind or 'this trace'}"))
        return rep
    if W is None:
        lam = float(trace.header.get("lambda", "0"))
    elif isinstance(W, MixingMatrix):
        lam = W.lam
    elif np.ndim(W) == 0:
        lam = float(W)
    else:
        lam = spectral_gap(np.asarray(W, dtype=float))
    n, d = int(trace.header["n"]), int(trace.header["d"])
    c_phi, c_eta = schedule.c_phi, schedule.c_eta

    # S_t partial sums of the consensus recursion, up to the last recorded t
    T = int(trace.t[-1])
    S = [0.0] * (T + 1)
    for k in range(T):
        S[k + 1] = lam * (S[k] + 2.0 * c_phi * c_eta * math.sqrt(d * n) / (k + 1) ** 0.7)

    def bound(name, t):
        if name == "m_bound":
            return c_phi if t == 0 else min(c_phi, 2.0 * c_phi / math.sqrt(t))
        if name == "consensus_bound":
            return S[t]
        return 20.0 / 3.0 * c_eta * c_phi * t ** 0.3

    values = {"m_bound": trace.m_inf, "consensus_bound": trace.consensus, "drift_bound": trace.drift_inf}
    for name in MONITORS:
        first, worst = None, 0.0
        for r, t in enumerate(trace.t):
            t = int(t)
            v, b = float(values[name][r]), bound(name, t)
            if math.isnan(v):
                continue
            if b > 0:
                worst = max(worst, v / b)
            if not _within(v, b) and first is None:
                first = t
        rep.rows.append(CheckResult(name, "fail" if first is not None else "pass", first, worst))
    return rep


# ---------------------------------------------------------------- noise facts

MASS_GRID = (1.0, 2.0, 5.0, 10.0, 50.0)
TAIL_GRID = (4.0, 10.0, 50.0)
MOMENT_ALPHAS = (1.1, 1.5)
MOMENT_LIMITS = (1e3, 1e6)


@dataclass
class FactRow:
    check: str
    param: float
    value: float
    reference: float
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def partial_abs_moment(model: NoiseModel, alpha: float, X: float, spec: QuadratureSpec | None = None) -> float:
    """Integral of |u|^alpha p(u) over [-X, X] for the untruncated law."""
    spec = spec or QuadratureSpec()
    f = lambda u: u ** alpha * model.full_density(u)
    return 2.0 * integrate(f, geometric_edges(0.0, X), spec.panels, 0.0, spec.max_doublings, rtol=1e-10)


def moment_growth_lower_bound(cp: float, alpha: float, X: float) -> float:
    """Lower bound on the partial alpha-moment over [-X, X] (X >= sqrt 2).

    Substituting w = ln(u^2+2) and using (e^w/2)^s >= 1 + s w for the
    exponent s = (alpha-1)/2 gives c_p (alpha-1) 2^(-(alpha+1)/2) ln(ln(X^2+2) / ln 4),
    which grows without bound in X.
    """
    return cp * (alpha - 1.0) / 2.0 ** ((alpha + 1.0) / 2.0) * math.log(math.log(X * X + 2.0) / math.log(4.0))


def verify_noise_facts(noise: NoiseModel | None = None, spec: QuadratureSpec | None = None,
                       samples: int = 1_000_000, seed: int = 0) -> Report:
    """Numerical checks of the heavy-tailed law.

    * mass of [-a, a] against 1 - sigma/a (full law, full-support sigma);
    * tail lower bound P(u > x) > (c_p/4)(x^2+2)^(-5/2) where ln(x^2+2) > 8/3;
    * first absolute moment against c_p / ln 2 (relative 1e-4);
    * partial alpha-moment against a lower bound that diverges in X;
    * sampler: empirical E|u| of the truncated law within 1% of quadrature.
    """
    spec = spec or QuadratureSpec()
    truncated = noise if noise is not None else NoiseModel("example")
    if truncated.kind != "example":
        raise ValueError("noise facts are stated for the heavy-tailed law")
    full = NoiseModel("example", truncation=None, grid_size=truncated.grid_size)
    cp, sigma_full = full.cp, full.sigma
    rep = Report("heavy-tailed law facts")
    row = lambda *a, **k: rep.rows.append(FactRow(*a, **k))

    for a in MASS_GRID:
        mass = 2.0 * integrate(full.full_density, geometric_edges(0.0, a), spec.panels, 1e-13, spec.max_doublings)
        ref = 1.0 - sigma_full / a
        row("central_mass", a, mass, ref, "pass" if mass >= ref else "fail")

    for x in TAIL_GRID:
        lo, _, _ = tail_probability_bounds(full, x)
        ref = cp / 4.0 * (x * x + 2.0) ** -2.5
        applies = math.log(x * x + 2.0) > 8.0 / 3.0
        status = ("pass" if lo > ref else "fail") if applies else "n/a"
        row("tail_lower_bound", x, lo, ref, status)

    closed = cp / math.log(2.0)
    rel = abs(sigma_full - closed) / closed
    row("first_abs_moment", math.inf, sigma_full, closed, "pass" if rel <= 1e-4 else "fail",
        detail=f"relative error {rel:.3g}")

    for alpha in MOMENT_ALPHAS:
        for X in MOMENT_LIMITS:
            val = partial_abs_moment(full, alpha, X, spec)
            ref = moment_growth_lower_bound(cp, alpha, X)
            row(f"moment_{alpha:g}_growth", X, val, ref, "pass" if val >= ref else "fail",
                detail="lower bound diverges as X grows")

    if samples:
        model = truncated if truncated.cdf is not None else build_truncated_sampler(truncated)
        u = sample(model, np.random.Generator(np.random.Philox(seed)), samples)
        emp = float(np.abs(u).mean())
        rel = abs(emp - model.sigma) / model.sigma
        row("sampler_abs_mean", float(samples), emp, model.sigma, "pass" if rel <= 0.01 else "fail",
            detail=f"relative error {rel:.3g}")
    rep.extra.update(cp=cp, sigma_full=sigma_full, sigma_truncated=truncated.sigma)
    return rep


# ---------------------------------------------------------------- Phi_t(w)/w

@dataclass
class HPhiRow:
    t: int
    w: float
    ratio: float
    lower: float
    upper: float
    status: str

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def hphi_w_grid(schedule: Schedule, consts: TheoremConstants, t: int, count: int = 20) -> np.ndarray:
    """``count`` values of w (half negative) spread geometrically over (0, w_max(t)]."""
    wmax = phi_ratio_w_range(schedule, consts.d, consts.L, t)
    pos = np.geomspace(wmax * 1e-3, wmax, count // 2)
    return np.concatenate([-pos[::-1], pos])


def verify_hphi_bounds(schedule: Schedule, consts: TheoremConstants, noise: NoiseModel,
                       t_grid=(1000, 10_000, 100_000), w_grid=None, tol: float = 1e-6,
                       spec: QuadratureSpec | None = None) -> Report:
    """Check c1/(t+1)^(4/5) <= Phi_t(w)/w <= c2/(t+1)^(4/5) on a (t, w) grid.

    ``w_grid`` is either an explicit sequence used for every t or None, for 20
    values covering the admissible range at each t.  Also reports the smallest t
    of the grid from which every row passes, and whether the ratio decreases in
    t at fixed w (on the w values admissible for all t).
    """
    c1, c2 = phi_ratio_interval(schedule, consts)
    rep = Report("Phi_t(w)/w interval")
    t_grid = [int(t) for t in t_grid]
    ratios = {}
    for t in t_grid:
        ws = hphi_w_grid(schedule, consts, t) if w_grid is None else np.asarray(w_grid, dtype=float)
        scale = (t + 1.0) ** 0.8
        for w in ws:
            r = phi_mean_ratio(float(w), schedule, t, noise, spec, rtol=tol)
            ratios[(t, float(w))] = r
            lo, hi = c1 / scale, c2 / scale
            rep.rows.append(HPhiRow(t, float(w), r, lo, hi, "pass" if lo <= r <= hi else "fail"))
    passing = None
    for t in reversed(t_grid):
        if all(r.passed for r in rep.rows if r.t == t):
            passing = t
        else:
            break
    common = hphi_w_grid(schedule, consts, t_grid[0]) if w_grid is None else np.asarray(w_grid, dtype=float)
    monotone = True
    for w in common:
        seq = [ratios.get((t, float(w))) or phi_mean_ratio(float(w), schedule, t, noise, spec, rtol=tol)
               for t in t_grid]
        monotone &= all(b < a for a, b in zip(seq, seq[1:]))
    rep.extra.update(c1=c1, c2=c2, smallest_passing_t=passing, decreasing_in_t=bool(monotone),
                     positive=bool(all(r.ratio > 0 for r in rep.rows)))
    return rep
