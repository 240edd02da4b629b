"""Experiment configuration: YAML file -> validated ``ExperimentConfig``.

Schema (every key optional unless noted; unknown keys are rejected)::

    name: str                        # experiment label
    seed: int                        # master seed of all noise streams (default 0)
    T: int                           # iterations per run (default 100000)
    runs: int                        # independent runs (default 10)
    record_every: int                # trace row stride (default 1)
    workers: int                     # parallel processes (default 1)
    output: str                      # output directory (default "out/<name>")
    problem:  {n: 20, d: 10, seed: 0, file: null}
    topology: {kind: cycle | complete | edge_list, degree: 4, odd: reject | chord,
               weights: metropolis | uniform, edge_list: path}
    noise:    {kind: example | gaussian | laplace | zero, truncation: [-100, 100],
               grid_size: 4096, stddev: 1.0, scale: 1.0}
    algorithms:                      # list; default [sclip_ef_network, theorem schedule]
      - name: str                    # unique label (default: kind)
        kind: str                    # required
        schedule: theorem | {c_phi, tau, c_beta, c_eta}   # SClip kinds
        theorem: {c_beta: 0.5, c_phi: null, phi_tilde: null, budget: null}
        a: float                     # baselines
        lam: float                   # clipping baselines
    grid_search:
      algorithm: str                 # name of the algorithm block to tune
      params: {a: [...], lam: [...]} # or schedule fields c_phi, tau, c_beta, c_eta
      metric: finalMeanGap | meanGapAUC
      runs: 3
      T: null                        # defaults to the experiment T
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..algorithms import KINDS
from ..errors import ParseError, ValidationError

SCHEDULE_KEYS = ("c_phi", "tau", "c_beta", "c_eta")
METRICS = ("finalMeanGap", "meanGapAUC")


@dataclass(frozen=True)
class ProblemCfg:
    n: int = 20
    d: int = 10
    seed: int = 0
    file: str | None = None


@dataclass(frozen=True)
class TopologyCfg:
    kind: str = "cycle"
    degree: int = 4
    odd: str = "reject"
    weights: str = "metropolis"
    edge_list: str | None = None


@dataclass(frozen=True)
class NoiseCfg:
    kind: str = "example"
    truncation: tuple[float, float] | None = (-100.0, 100.0)
    grid_size: int = 4096
    stddev: float = 1.0
    scale: float = 1.0


@dataclass(frozen=True)
class TheoremCfg:
    c_beta: float = 0.5
    c_phi: float | None = None
    phi_tilde: float | None = None
    budget: float | None = None


@dataclass(frozen=True)
class AlgorithmCfg:
    name: str
    kind: str
    schedule: dict | None = None  # None means theorem mode for SClip kinds
    theorem: TheoremCfg = TheoremCfg()
    a: float | None = None
    lam: float | None = None


@dataclass(frozen=True)
class GridSearchCfg:
    algorithm: str
    params: dict
    metric: str = "finalMeanGap"
    runs: int = 3
    T: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    T: int = 100_000
    runs: int = 10
    record_every: int = 1
    workers: int = 1
    output: str | None = None
    problem: ProblemCfg = ProblemCfg()
    topology: TopologyCfg = TopologyCfg()
    noise: NoiseCfg = NoiseCfg()
    algorithms: tuple[AlgorithmCfg, ...] = field(
        default_factory=lambda: (AlgorithmCfg("sclip_ef_network", "sclip_ef_network"),))
    grid_search: GridSearchCfg | None = None
    source: str | None = field(default=None, compare=False)

    @property
    def output_dir(self) -> Path:
        return Path(self.output or f"out/{self.name}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    def digest(self) -> str:
        """Short hash of the resolved configuration (written to trace headers)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def algorithm(self, name: str) -> AlgorithmCfg:
        for a in self.algorithms:
            if a.name == name:
                return a
        raise KeyError(name)


# ---------------------------------------------------------------- validation helpers

def _mapping(raw, path):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ValidationError(path, "expected a mapping")
    return raw


def _reject_unknown(raw: dict, allowed, path: str):
    for key in raw:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}" if path else str(key), "unknown key")


def _int(raw, key, path, default, minimum=None):
    v = raw.get(key, default)
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(_p(path, key), f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ValidationError(_p(path, key), f"must be >= {minimum}")
    return v


def _float(raw, key, path, default, positive=False, optional=False):
    v = raw.get(key, default)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(_p(path, key), f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(_p(path, key), "must be positive")
    return float(v)


def _choice(raw, key, path, default, options):
    v = raw.get(key, default)
    if v not in options:
        raise ValidationError(_p(path, key), f"must be one of {list(options)}, got {v!r}")
    return v


def _p(path, key):
    return f"{path}.{key}" if path else key


def _problem(raw) -> ProblemCfg:
    raw = _mapping(raw, "problem")
    _reject_unknown(raw, ProblemCfg.__dataclass_fields__, "problem")
    return ProblemCfg(n=_int(raw, "n", "problem", 20, 1), d=_int(raw, "d", "problem", 10, 1),
                      seed=_int(raw, "seed", "problem", 0, 0), file=raw.get("file"))


def _topology(raw) -> TopologyCfg:
    raw = _mapping(raw, "topology")
    _reject_unknown(raw, TopologyCfg.__dataclass_fields__, "topology")
    cfg = TopologyCfg(
        kind=_choice(raw, "kind", "topology", "cycle", ("cycle", "complete", "edge_list")),
        degree=_int(raw, "degree", "topology", 4, 1),
        odd=_choice(raw, "odd", "topology", "reject", ("reject", "chord")),
        weights=_choice(raw, "weights", "topology", "metropolis", ("metropolis", "uniform")),
        edge_list=raw.get("edge_list"),
    )
    if cfg.kind == "edge_list" and not cfg.edge_list:
        raise ValidationError("topology.edge_list", "required when kind is edge_list")
    if cfg.weights == "uniform" and cfg.kind != "complete":
        raise ValidationError("topology.weights", "uniform weights need the complete graph")
    return cfg


def _noise(raw) -> NoiseCfg:
    raw = _mapping(raw, "noise")
    _reject_unknown(raw, NoiseCfg.__dataclass_fields__, "noise")
    trunc = raw.get("truncation", [-100.0, 100.0])
    if trunc is not None:
        if not (isinstance(trunc, (list, tuple)) and len(trunc) == 2):
            raise ValidationError("noise.truncation", "expected [lo, hi] or null")
        trunc = (float(trunc[0]), float(trunc[1]))
        if not trunc[0] < trunc[1]:
            raise ValidationError("noise.truncation", "needs lo < hi")
    return NoiseCfg(kind=_choice(raw, "kind", "noise", "example", ("example", "gaussian", "laplace", "zero")),
                    truncation=trunc, grid_size=_int(raw, "grid_size", "noise", 4096, 1024),
                    stddev=_float(raw, "stddev", "noise", 1.0, positive=True),
                    scale=_float(raw, "scale", "noise", 1.0, positive=True))


def _algorithm(raw, i) -> AlgorithmCfg:
    path = f"algorithms[{i}]"
    raw = _mapping(raw, path)
    _reject_unknown(raw, AlgorithmCfg.__dataclass_fields__, path)
    if "kind" not in raw:
        raise ValidationError(f"{path}.kind", "required")
    kind = _choice(raw, "kind", path, None, tuple(KINDS))
    name = raw.get("name", kind)
    if not isinstance(name, str) or not name:
        raise ValidationError(f"{path}.name", "expected a nonempty string")
    sclip = KINDS[kind][0] == 0
    schedule, theorem = None, TheoremCfg()
    if sclip:
        sched = raw.get("schedule", "theorem")
        if sched != "theorem":
            sched = _mapping(sched, f"{path}.schedule")
            _reject_unknown(sched, SCHEDULE_KEYS, f"{path}.schedule")
            for k in SCHEDULE_KEYS:
                if k not in sched:
                    raise ValidationError(f"{path}.schedule.{k}", "required")
            schedule = {k: _float(sched, k, f"{path}.schedule", None) for k in SCHEDULE_KEYS}
        th = _mapping(raw.get("theorem"), f"{path}.theorem")
        _reject_unknown(th, TheoremCfg.__dataclass_fields__, f"{path}.theorem")
        theorem = TheoremCfg(**{k: _float(th, k, f"{path}.theorem", getattr(TheoremCfg, k), optional=True)
                                for k in TheoremCfg.__dataclass_fields__})
        for k in ("a", "lam"):
            if k in raw:
                raise ValidationError(f"{path}.{k}", f"not used by {kind}")
        return AlgorithmCfg(name, kind, schedule, theorem)
    for k in ("schedule", "theorem"):
        if k in raw:
            raise ValidationError(f"{path}.{k}", f"not used by {kind}")
    if "a" not in raw:
        raise ValidationError(f"{path}.a", "required")
    a = _float(raw, "a", path, None, positive=True)
    lam = _float(raw, "lam", path, None, positive=True, optional=True)
    if kind not in ("dsgd", "sgd") and lam is None:
        raise ValidationError(f"{path}.lam", "required for clipping baselines")
    return AlgorithmCfg(name, kind, None, TheoremCfg(), a, lam)


def _grid(raw, algorithms) -> GridSearchCfg | None:
    if raw is None:
        return None
    raw = _mapping(raw, "grid_search")
    _reject_unknown(raw, GridSearchCfg.__dataclass_fields__, "grid_search")
    target = raw.get("algorithm")
    names = [a.name for a in algorithms]
    if target not in names:
        raise ValidationError("grid_search.algorithm", f"must name one of {names}, got {target!r}")
    params = _mapping(raw.get("params"), "grid_search.params")
    allowed = ("a", "lam") + SCHEDULE_KEYS
    _reject_unknown(params, allowed, "grid_search.params")
    clean = {}
    for k, vals in params.items():
        if not isinstance(vals, (list, tuple)):
            raise ValidationError(f"grid_search.params.{k}", "expected a list of values")
        clean[k] = [float(v) for v in vals]
    T = raw.get("T")
    return GridSearchCfg(target, clean, _choice(raw, "metric", "grid_search", "finalMeanGap", METRICS),
                         _int(raw, "runs", "grid_search", 3, 1),
                         None if T is None else _int(raw, "T", "grid_search", None, 1))


TOP_KEYS = ("name", "seed", "T", "runs", "record_every", "workers", "output",
            "problem", "topology", "noise", "algorithms", "grid_search")


def parse_config(raw, source: str | None = None) -> ExperimentConfig:
    raw = _mapping(raw, "")
    _reject_unknown(raw, TOP_KEYS, "")
    algos_raw = raw.get("algorithms")
    if algos_raw is None:
        algos = ExperimentConfig().algorithms
    else:
        if not isinstance(algos_raw, list):
            raise ValidationError("algorithms", "expected a list")
        algos = tuple(_algorithm(a, i) for i, a in enumerate(algos_raw))
    seen = set()
    for i, a in enumerate(algos):
        if a.name in seen:
            raise ValidationError(f"algorithms[{i}].name", f"duplicate algorithm name {a.name!r}")
        seen.add(a.name)
    name = raw.get("name", "experiment")
    out = raw.get("output")
    return ExperimentConfig(
        name=str(name), seed=_int(raw, "seed", "", 0, 0), T=_int(raw, "T", "", 100_000, 1),
        runs=_int(raw, "runs", "", 10, 1), record_every=_int(raw, "record_every", "", 1, 1),
        workers=_int(raw, "workers", "", 1, 1), output=None if out is None else str(out),
        problem=_problem(raw.get("problem")), topology=_topology(raw.get("topology")),
        noise=_noise(raw.get("noise")), algorithms=algos, grid_search=_grid(raw.get("grid_search"), algos),
        source=source,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment file.

    Raises
    ------
    ParseError
        The file is not valid YAML.
    ValidationError
        A value is missing, malformed or unknown; the message names its field path.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_config(raw, source=str(path))
