"""Iteration engines: SClip-EF and its network variant, plus DSGD and the
hard-clipping baselines, in single-server and decentralized form.

The single-step functions are plain NumPy and take the noise realization
``xi`` (shape (n, d)) explicitly.  ``run_trajectory`` drives the compiled
kernel (see ``sclipnet.kernels``) over many steps and evaluates the sure-bound
monitors of the SClip methods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from . import kernels
from .clipping import Schedule
from .kernels import numpy_impl
from .noise import NoiseModel
from .problem import QuadraticProblem, gradients
from .rng import BLOCK_SIZE, NoiseSource
from .topology import MixingMatrix
from .trace import Monitor, Trace

# kind -> (kernel code, decentralized?)
KINDS = {
    "sclip_ef": (kernels.SCLIP, False),
    "sclip_ef_network": (kernels.SCLIP, True),
    "dsgd": (kernels.PLAIN, True),
    "sgd": (kernels.PLAIN, False),
    "network_gclip": (kernels.GCLIP, True),
    "network_cclip": (kernels.CCLIP, True),
    "dist_gclip": (kernels.GCLIP, False),
    "dist_cclip": (kernels.CCLIP, False),
}
CLIP_VARIANTS = {"global": kernels.GCLIP, "component": kernels.CCLIP}

# relative slack granted to the sure-bound monitors for floating-point rounding
MONITOR_RTOL = 1e-9
MONITOR_ATOL = 1e-12


@dataclass(frozen=True)
class AlgoSpec:
    """Algorithm choice and its parameters.

    SClip methods need ``schedule``; the baselines use the step a/(t+1) and,
    for the clipping ones, threshold ``lam``.
    """

    kind: str
    schedule: Schedule | None = None
    a: float | None = None
    lam: float | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown algorithm kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.is_sclip:
            if self.schedule is None:
                raise ValueError(f"{self.kind} needs a schedule")
        else:
            if self.a is None or not self.a > 0:
                raise ValueError(f"{self.kind} needs a step constant a > 0")
            if self.code in (kernels.GCLIP, kernels.CCLIP) and not (self.lam is not None and self.lam > 0):
                raise ValueError(f"{self.kind} needs a clip threshold lam > 0")

    @property
    def code(self) -> int:
        return KINDS[self.kind][0]

    @property
    def network(self) -> bool:
        return KINDS[self.kind][1]

    @property
    def is_sclip(self) -> bool:
        return self.code == kernels.SCLIP

    @property
    def label(self) -> str:
        return self.name or self.kind

    def describe(self) -> str:
        if self.is_sclip:
            s = self.schedule
            return f"c_phi={s.c_phi!r} tau={s.tau!r} c_beta={s.c_beta!r} c_eta={s.c_eta!r}"
        out = f"a={self.a!r}"
        if self.lam is not None:
            out += f" lam={self.lam!r}"
        return out

    def kernel_args(self) -> tuple:
        """(c_phi, tau, c_beta, c_eta, a, lam) with unused slots filled by placeholders."""
        if self.is_sclip:
            s = self.schedule
            return (s.c_phi, s.tau, s.c_beta, s.c_eta, 1.0, math.inf)
        return (1.0, 1.0, 0.0, 1.0, float(self.a), math.inf if self.lam is None else float(self.lam))


@dataclass(eq=False)
class AlgoState:
    """Stacked local iterates ``X`` and estimators ``M`` (both n x d) at iteration ``t``.

    Single-server methods keep n identical rows in ``X``.
    """

    t: int
    X: np.ndarray
    M: np.ndarray
    diverged: bool = False

    @property
    def xbar(self) -> np.ndarray:
        return self.X.mean(axis=0)


def initial_state(n: int, d: int, x0=None) -> AlgoState:
    """All nodes start at the same point (zero by default) with m = 0."""
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},)")
    return AlgoState(0, np.tile(x0, (n, 1)), np.zeros((n, d)))


def _step(code, network, state, problem, W, xi, schedule=None, a=1.0, lam=math.inf):
    X, M = state.X.copy(), state.M.copy()
    G = gradients(problem, X) + xi
    if schedule is None:
        schedule = Schedule(1.0, 1.0, 0.0, 1.0)
    D, eta = numpy_impl.direction(code, G, M, state.t, schedule.c_phi, schedule.tau,
                                  schedule.c_beta, schedule.c_eta, a, lam)
    numpy_impl.mix(network, W, X, D, eta)
    return AlgoState(state.t + 1, X, M, state.diverged or numpy_impl.diverged(X))


def step_sclip_ef_network(state, problem, mixing: MixingMatrix, schedule: Schedule, xi) -> AlgoState:
    """m_i <- beta m_i + (1-beta) Psi(g_i - m_i);  x_i <- sum_j w_ij (x_j - eta m_j)."""
    return _step(kernels.SCLIP, True, state, problem, mixing.W, xi, schedule=schedule)


def step_sclip_ef(state, problem, schedule: Schedule, xi) -> AlgoState:
    """Server form: x <- x - (eta/n) sum_i m_i, with the same estimator update."""
    return _step(kernels.SCLIP, False, state, problem, None, xi, schedule=schedule)


def step_dsgd(state, problem, mixing: MixingMatrix, a: float, xi) -> AlgoState:
    return _step(kernels.PLAIN, True, state, problem, mixing.W, xi, a=a)


def step_sgd(state, problem, a: float, xi) -> AlgoState:
    return _step(kernels.PLAIN, False, state, problem, None, xi, a=a)


def step_network_clip(state, problem, mixing: MixingMatrix, a: float, lam: float,
                      variant: str, xi) -> AlgoState:
    """x_i <- sum_j w_ij (x_j - eta clip(g_j)), ``variant`` 'global' or 'component'."""
    return _step(CLIP_VARIANTS[variant], True, state, problem, mixing.W, xi, a=a, lam=lam)


def step_dist_clip(state, problem, a: float, lam: float, variant: str, xi) -> AlgoState:
    """x <- x - (eta/n) sum_i clip(g_i)."""
    return _step(CLIP_VARIANTS[variant], False, state, problem, None, xi, a=a, lam=lam)


def step(spec: AlgoSpec, state: AlgoState, problem, mixing: MixingMatrix | None, xi) -> AlgoState:
    W = mixing.W if spec.network else None
    if spec.is_sclip:
        return _step(spec.code, spec.network, state, problem, W, xi, schedule=spec.schedule)
    _, _, _, _, a, lam = spec.kernel_args()
    return _step(spec.code, spec.network, state, problem, W, xi, a=a, lam=lam)


# ---------------------------------------------------------------- monitors

def estimator_bound(c_phi: float, t) -> np.ndarray:
    """Bound on ||m^t||_inf: c_phi always, and 2 c_phi / sqrt(t) for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.minimum(c_phi, 2.0 * c_phi / np.sqrt(t))


def drift_bound(c_eta: float, c_phi: float, t) -> np.ndarray:
    return 20.0 / 3.0 * c_eta * c_phi * np.asarray(t, dtype=float) ** 0.3


def consensus_bounds(c_eta: float, c_phi: float, lam: float, n: int, d: int, T: int) -> np.ndarray:
    """S_0..S_T with S_0 = 0 and S_{t+1} = lam (S_t + 2 c_phi c_eta sqrt(dn) / (t+1)^0.7)."""
    a = 2.0 * c_phi * c_eta * math.sqrt(d * n) / np.arange(1, T + 1, dtype=float) ** 0.7
    out = np.zeros(T + 1)
    if T and lam > 0:
        out[1:] = lfilter([lam], [1.0, -lam], a)
    return out


def _check(value, bound) -> Monitor:
    ok = value <= bound * (1.0 + MONITOR_RTOL) + MONITOR_ATOL
    return Monitor(ok, bound - value)


def sclip_monitors(schedule: Schedule, lam: float, n: int, d: int, t, m_inf, consensus, drift):
    """Sure-bound checks (estimator, consensus, drift) for rows at iterations ``t`` of a trajectory."""
    t = np.asarray(t)
    T = int(t.max()) if t.size else 0
    s2 = consensus_bounds(schedule.c_eta, schedule.c_phi, lam, n, d, T)[t]
    return {
        "m_bound": _check(m_inf, estimator_bound(schedule.c_phi, t)),
        "consensus_bound": _check(consensus, s2),
        "drift_bound": _check(drift, drift_bound(schedule.c_eta, schedule.c_phi, t)),
    }


# ---------------------------------------------------------------- driver

def run_trajectory(spec: AlgoSpec, problem: QuadraticProblem, noise: NoiseModel,
                   mixing: MixingMatrix | None, T: int, master_seed: int, run: int = 0,
                   record_every: int = 1, backend: str | None = None, x0=None,
                   header: dict | None = None) -> Trace:
    """Run ``T`` iterations and return the recorded trace.

    Rows are kept at t = 0, record_every, 2 record_every, ... and always at T;
    monitor violation counts in the header cover every iteration.  A run whose
    iterates leave [-1e30, 1e30] is flagged diverged from that step on and its
    metrics become NaN; its noise is still drawn so checksums stay comparable.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    n, d = problem.n, problem.d
    if spec.network:
        if mixing is None or mixing.n != n:
            raise ValueError("decentralized algorithms need an n x n mixing matrix")
        W, lam = np.ascontiguousarray(mixing.W, dtype=float), float(mixing.lam)
    else:
        W, lam = np.eye(n), 0.0
    state = initial_state(n, d, x0)
    X, M = state.X, state.M
    xbar0 = X.mean(axis=0)
    A_mean = np.ascontiguousarray(problem.A_mean)
    args = [float(v) for v in spec.kernel_args()]
    advance = kernels.get_advance(backend)
    src = NoiseSource(noise, master_seed, run, n, d)

    out = np.empty((T + 1, len(kernels.METRICS)))
    numpy_impl.metrics(X, M, xbar0, problem.x_star, A_mean, out[0])
    stop = -1
    for t0 in range(0, T, BLOCK_SIZE):
        steps = min(BLOCK_SIZE, T - t0)
        xi = src.window(t0, steps)
        if stop >= 0:
            out[t0 + 1:t0 + 1 + steps] = np.nan
            continue
        s = advance(spec.code, spec.network, W, problem.A, problem.b, problem.x_star, A_mean,
                    X, M, xbar0, t0, xi, *args, out[t0 + 1:t0 + 1 + steps])
        if s >= 0:
            stop = t0 + 1 + s

    t_all = np.arange(T + 1)
    diverged = np.zeros(T + 1, dtype=bool)
    if stop >= 0:
        diverged[stop:] = True
    keep = np.unique(np.append(t_all[::record_every], T))
    gap, mse, cons, m_inf, drift = (out[:, j] for j in range(out.shape[1]))

    monitors: dict[str, Monitor | None] = dict.fromkeys(("m_bound", "consensus_bound", "drift_bound"))
    counts = {}
    if spec.is_sclip:
        full = sclip_monitors(spec.schedule, lam, n, d, t_all, m_inf, cons, drift)
        for k, mon in full.items():
            counts[k] = mon.violations
            monitors[k] = Monitor(mon.ok[keep], mon.slack[keep])
    hdr = {
        "algorithm": spec.kind,
        "label": spec.label,
        "params": spec.describe(),
        "seed": str(int(master_seed)),
        "run": str(int(run)),
        "n": str(n),
        "d": str(d),
        "T": str(T),
        "record_every": str(record_every),
        "lambda": repr(lam),
        "noise_checksum": src.checksum,
        "diverged_at": str(stop) if stop >= 0 else "none",
    }
    for k in ("m_bound", "consensus_bound", "drift_bound"):
        hdr[f"{k}_violations"] = str(counts[k]) if k in counts else "NA"
    if header:
        hdr = {**header, **hdr}
    return Trace(t=keep, gap=np.maximum(gap[keep], 0.0), mse=mse[keep], consensus=cons[keep],
                 m_inf=m_inf[keep], drift_inf=drift[keep], diverged=diverged[keep],
                 monitors=monitors, header=hdr)
