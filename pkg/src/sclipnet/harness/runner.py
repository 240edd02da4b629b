"""Multi-run experiment execution, grid search and plot-data emission."""
from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from ..algorithms import KINDS, AlgoSpec, run_trajectory
from ..analysis import AggregateSeries, aggregate, fit_rate_exponent
from ..clipping import PHI_TILDE_DEFAULT, Schedule, TheoremConstants, theorem_constants
from ..errors import EmptyGrid, SclipnetError, ValidationError
from ..noise import NoiseModel, build_truncated_sampler
from ..problem import QuadraticProblem, generate, load_problem
from ..rng import problem_stream
from ..topology import (MixingMatrix, build_cycle_with_degree, complete_graph, complete_uniform,
                        load_edge_list, metropolis_weights)
from ..trace import Trace
from .config import AlgorithmCfg, ExperimentConfig, SCHEDULE_KEYS

log = logging.getLogger(__name__)

# grid-search runs use their own noise streams, disjoint from experiment runs
GRID_RUN_OFFSET = 1_000_000


@dataclass(eq=False)
class Setup:
    problem: QuadraticProblem
    noise: NoiseModel
    mixing: MixingMatrix

    def constants(self, theorem=None) -> TheoremConstants:
        phi_tilde = PHI_TILDE_DEFAULT if theorem is None or theorem.phi_tilde is None else theorem.phi_tilde
        budget = None if theorem is None else theorem.budget
        p = self.problem
        return theorem_constants(p.mu, p.L, self.noise.sigma, p.d, phi_tilde, budget)


def build_setup(cfg: ExperimentConfig) -> Setup:
    pc = cfg.problem
    problem = load_problem(pc.file) if pc.file else generate(pc.n, pc.d, problem_stream(pc.seed))
    nc = cfg.noise
    noise = build_truncated_sampler(NoiseModel(nc.kind, nc.truncation, nc.grid_size, nc.stddev, nc.scale))
    tc, n = cfg.topology, problem.n
    if tc.kind == "complete":
        mixing = complete_uniform(n) if tc.weights == "uniform" else metropolis_weights(complete_graph(n))
    elif tc.kind == "cycle":
        mixing = metropolis_weights(build_cycle_with_degree(n, tc.degree, tc.odd))
    else:
        mixing = metropolis_weights(load_edge_list(tc.edge_list, n))
    return Setup(problem, noise, mixing)


def make_spec(acfg: AlgorithmCfg, setup: Setup) -> AlgoSpec:
    if KINDS[acfg.kind][0] != 0:
        return AlgoSpec(acfg.kind, a=acfg.a, lam=acfg.lam, name=acfg.name)
    if acfg.schedule is not None:
        sched = Schedule(**acfg.schedule)
    else:
        if setup.noise.sigma <= 0:
            raise ValidationError(f"algorithms.{acfg.name}.schedule",
                                  "theorem schedule needs noise with a positive first moment")
        sched = setup.constants(acfg.theorem).schedule(acfg.theorem.c_beta, acfg.theorem.c_phi)
    return AlgoSpec(acfg.kind, schedule=sched, name=acfg.name)


def with_params(cfg: ExperimentConfig, name: str, params: dict, setup: Setup | None = None) -> ExperimentConfig:
    """Copy of ``cfg`` with parameters of algorithm ``name`` overridden.

    Schedule fields on a theorem-mode algorithm start from its theorem schedule.
    """
    algos = []
    for a in cfg.algorithms:
        if a.name == name:
            sched_keys = {k: v for k, v in params.items() if k in SCHEDULE_KEYS}
            other = {k: v for k, v in params.items() if k not in SCHEDULE_KEYS}
            if sched_keys:
                base = a.schedule
                if base is None:
                    s = make_spec(a, setup or build_setup(cfg)).schedule
                    base = {k: getattr(s, k) for k in SCHEDULE_KEYS}
                other["schedule"] = {**base, **sched_keys}
            a = dataclasses.replace(a, **other)
        algos.append(a)
    return dataclasses.replace(cfg, algorithms=tuple(algos))


def _job(args) -> Trace:
    spec, setup, T, seed, run, record_every, backend, header = args
    return run_trajectory(spec, setup.problem, setup.noise, setup.mixing, T, seed, run=run,
                          record_every=record_every, backend=backend, header=header)


def _run_jobs(jobs, workers: int):
    """Run jobs, keeping going past failures; returns (results, errors) aligned with ``jobs``."""
    results, errors = [None] * len(jobs), [None] * len(jobs)
    if workers <= 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _job(job)
            except Exception as exc:  # noqa: BLE001 - recorded and reported, other runs continue
                errors[i] = exc
        return results, errors
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_job, job) for job in jobs]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result()
            except Exception as exc:  # noqa: BLE001
                errors[i] = exc
    return results, errors


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    traces: dict[str, list[Trace]]
    aggregates: dict[str, AggregateSeries]
    failures: list[str] = field(default_factory=list)
    crn_ok: bool = True
    summary: dict = field(default_factory=dict)
    out_dir: Path | None = None

    @property
    def violations(self) -> int:
        return int(sum(int(v) for trs in self.traces.values() for tr in trs
                       for v in tr.violations.values() if v is not None))

    @property
    def ok(self) -> bool:
        return not self.failures and self.crn_ok and self.violations == 0


def run_experiment(cfg: ExperimentConfig, out_dir=None, seed: int | None = None, workers: int | None = None,
                   write: bool = True, backend: str | None = None, setup: Setup | None = None,
                   run_offset: int = 0, runs: int | None = None, T: int | None = None) -> ExperimentResult:
    """Run every algorithm block for ``cfg.runs`` runs under common random numbers.

    Run ``r`` of every algorithm draws the same noise, which is confirmed by
    comparing the per-trace noise checksums.  A failing run is reported and the
    other runs are still aggregated and written.
    """
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(seed))
    setup = setup or build_setup(cfg)
    runs = cfg.runs if runs is None else runs
    T = cfg.T if T is None else T
    workers = cfg.workers if workers is None else workers
    specs = [make_spec(a, setup) for a in cfg.algorithms]
    digest = cfg.digest()
    jobs, keys = [], []
    for spec in specs:
        for r in range(runs):
            header = {"config_hash": digest, "experiment": cfg.name}
            jobs.append((spec, setup, T, cfg.seed, run_offset + r, cfg.record_every, backend, header))
            keys.append((spec.label, r))
    results, errors = _run_jobs(jobs, workers)

    traces: dict[str, list[Trace]] = {s.label: [] for s in specs}
    failures = []
    for (label, r), tr, err in zip(keys, results, errors):
        if err is not None:
            failures.append(f"{label} run {r}: {type(err).__name__}: {err}")
            log.error("run failed: %s", failures[-1])
        else:
            traces[label].append(tr)

    crn_ok = True
    for r in range(runs):
        rid = str(run_offset + r)
        sums = {tr.header["noise_checksum"] for trs in traces.values() for tr in trs if tr.header["run"] == rid}
        if len(sums) > 1:
            crn_ok = False
            log.error("noise checksums differ across algorithms for run %d", r)

    aggregates = {label: aggregate(trs) for label, trs in traces.items() if trs}
    res = ExperimentResult(cfg, traces, aggregates, failures, crn_ok)
    res.summary = _summary(res, specs, setup)
    if write:
        res.out_dir = write_outputs(res, Path(out_dir) if out_dir else cfg.output_dir)
    return res


def _summary(res: ExperimentResult, specs, setup: Setup) -> dict:
    try:
        c_s = setup.constants().c_s
    except (SclipnetError, ValueError):
        c_s = None
    algos = {}
    for spec in specs:
        trs = res.traces.get(spec.label, [])
        agg = res.aggregates.get(spec.label)
        entry = {
            "kind": spec.kind,
            "params": spec.describe(),
            "completed_runs": len(trs),
            "diverged_runs": sum(tr.any_diverged for tr in trs),
            "monitor_violations": {k: sum(tr.violations[k] or 0 for tr in trs) if spec.is_sclip else None
                                   for k in ("m_bound", "consensus_bound", "drift_bound")},
            "noise_checksums": [tr.header["noise_checksum"] for tr in trs],
        }
        if agg is not None:
            entry["final_mean_gap_log10"] = agg.final_gap_log10
            try:
                fit = fit_rate_exponent(agg)
                entry["rate_fit"] = dataclasses.asdict(fit)
            except SclipnetError as exc:
                entry["rate_fit"] = f"unavailable: {exc}"
        algos[spec.label] = entry
    return {
        "experiment": res.config.name,
        "config_hash": res.config.digest(),
        "seed": res.config.seed,
        "T": res.config.T,
        "runs": res.config.runs,
        "lambda": setup.mixing.lam,
        "mu": setup.problem.mu,
        "L": setup.problem.L,
        "sigma": setup.noise.sigma,
        "c_s": c_s,
        "crn_ok": res.crn_ok,
        "failures": res.failures,
        "algorithms": algos,
    }


def write_outputs(res: ExperimentResult, out: Path) -> Path:
    (out / "traces").mkdir(parents=True, exist_ok=True)
    for label, trs in res.traces.items():
        for tr in trs:
            tr.to_csv(out / "traces" / f"{label}_run{int(tr.header['run']):03d}.csv")
    for label, agg in res.aggregates.items():
        write_aggregate(agg, out / f"aggregate_{label}.csv")
    kinds = {label: e["kind"] for label, e in res.summary.get("algorithms", {}).items()}
    emit_plot_data(res.aggregates, out, kinds)
    (out / "summary.json").write_text(json.dumps(res.summary, indent=2, default=_json_default) + "\n")
    return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(type(o))


AGGREGATE_COLUMNS = ("t", "mean_mse", "mean_gap_log10", "consensus", "violations", "diverged")


def write_aggregate(agg: AggregateSeries, path) -> None:
    cols = [agg.t, agg.mean_mse, agg.mean_gap_log10, agg.consensus, agg.violations, agg.diverged]
    lines = [",".join(AGGREGATE_COLUMNS)]
    for r in range(len(agg.t)):
        lines.append(",".join([str(int(cols[0][r]))] + ["%.17g" % c[r] for c in cols[1:4]]
                              + [str(int(cols[4][r])), str(int(cols[5][r]))]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_series(path) -> tuple[np.ndarray, np.ndarray]:
    """(t, mse) from an aggregate CSV or a trace CSV, for rate fitting."""
    t, v = [], []
    names = None
    for ln in Path(path).read_text().splitlines():
        if not ln or ln.startswith("#"):
            continue
        if names is None:
            names = ln.split(",")
            col = names.index("mean_mse") if "mean_mse" in names else names.index("mse")
            continue
        cells = ln.split(",")
        t.append(float(cells[0]))
        v.append(float(cells[col]))
    if names is None:
        raise ValueError(f"{path}: empty file")
    return np.array(t), np.array(v)


# ---------------------------------------------------------------- plot data

def panel_of(kind: str) -> str:
    return "network" if KINDS[kind][1] else "server"


def emit_plot_data(aggregates: dict[str, AggregateSeries], out_dir, kinds: dict[str, str] | None = None,
                   render: bool = False) -> list[Path]:
    """One CSV per panel (network / server) of mean log10 relative gap per algorithm.

    ``kinds`` maps labels to algorithm kinds; by default it is read from the
    aggregate label when that is a kind name, else the label goes to "network".
    """
    if not aggregates:
        warnings.warn("no algorithms to plot; nothing written", RuntimeWarning)
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kinds = kinds or {}
    panels: dict[str, list[str]] = {}
    for label in aggregates:
        kind = kinds.get(label, label if label in KINDS else "sclip_ef_network")
        panels.setdefault(panel_of(kind), []).append(label)
    written = []
    for panel, labels in panels.items():
        t = aggregates[labels[0]].t
        lines = [",".join(["t"] + labels)]
        for r in range(len(t)):
            lines.append(",".join([str(int(t[r]))] + ["%.17g" % aggregates[l].mean_gap_log10[r] for l in labels]))
        path = out_dir / f"plot_{panel}.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
        if render:
            written.extend(_render(path, aggregates, labels, panel))
    return written


def _render(csv_path: Path, aggregates, labels, panel) -> list[Path]:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        warnings.warn("matplotlib not installed; skipping image rendering", RuntimeWarning)
        return []
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for l in labels:
        agg = aggregates[l]
        ax.plot(agg.t, agg.mean_gap_log10, label=l)
    ax.set_xlabel("iteration t")
    ax.set_ylabel("mean log10 relative gap")
    ax.set_title(panel)
    ax.legend(fontsize=7)
    fig.tight_layout()
    png = csv_path.with_suffix(".png")
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return [png]


# ---------------------------------------------------------------- grid search

@dataclass
class GridResult:
    algorithm: str
    metric: str
    best: dict
    leaderboard: list  # [(params, score)] in evaluation order

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "metric": self.metric, "best": self.best,
                "leaderboard": [{"params": p, "score": s} for p, s in self.leaderboard]}


def score(agg: AggregateSeries, metric: str) -> float:
    """finalMeanGap: mean final log10 gap; meanGapAUC: time average of the mean log10 gap.

    Any diverged run scores +inf.
    """
    if agg.diverged.any():
        return math.inf
    g = agg.mean_gap_log10
    if metric == "finalMeanGap":
        val = float(g[-1])
    elif metric == "meanGapAUC":
        t = agg.t.astype(float)
        val = float(trapezoid(g, t) / (t[-1] - t[0])) if len(t) > 1 else float(g[0])
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return val if math.isfinite(val) or val == -math.inf else math.inf


def grid_search(cfg: ExperimentConfig, workers: int | None = None, backend: str | None = None,
                setup: Setup | None = None) -> GridResult:
    """Evaluate the Cartesian product of the grid and return the minimizer.

    Candidates are visited in lexicographic order of their parameter values
    (keys sorted by name); a later candidate replaces the incumbent only if it
    scores strictly lower, so ties go to the lexicographically first point.
    """
    gs = cfg.grid_search
    if gs is None:
        raise ValidationError("grid_search", "missing grid_search block")
    if not gs.params or any(len(v) == 0 for v in gs.params.values()):
        raise EmptyGrid("grid_search.params has no points")
    setup = setup or build_setup(cfg)
    keys = sorted(gs.params)
    points = sorted(itertools.product(*(gs.params[k] for k in keys)))
    base = dataclasses.replace(cfg, algorithms=(cfg.algorithm(gs.algorithm),), grid_search=None)
    board = []
    best, best_score = None, math.inf
    for values in points:
        params = dict(zip(keys, values))
        trial = with_params(base, gs.algorithm, params, setup)
        res = run_experiment(trial, workers=workers, write=False, backend=backend, setup=setup,
                             run_offset=GRID_RUN_OFFSET, runs=gs.runs, T=gs.T or cfg.T)
        agg = res.aggregates.get(gs.algorithm)
        s = math.inf if agg is None or res.failures else score(agg, gs.metric)
        board.append((params, s))
        if best is None or s < best_score:
            best, best_score = params, s
    return GridResult(gs.algorithm, gs.metric, best, board)
