"""Command-line entry point (``sclipnet``)."""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from . import analysis
from .clipping import Schedule
from .errors import ConfigError, SclipnetError
from .harness.config import ExperimentConfig, load_config
from .harness.runner import build_setup, grid_search, make_spec, read_series, run_experiment
from .kernels import BACKENDS
from .trace import read_trace


def _write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n")
    print(f"report written to {path}")


def _schedule_from_header(params: str) -> Schedule | None:
    vals = dict(re.findall(r"(\w+)=([^\s]+)", params or ""))
    try:
        return Schedule(*(float(vals[k]) for k in ("c_phi", "tau", "c_beta", "c_eta")))
    except KeyError:
        return None


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run_experiment(cfg, out_dir=args.out, seed=args.seed, workers=args.workers, backend=args.backend)
    if args.plot:
        from .harness.runner import emit_plot_data
        kinds = {k: v["kind"] for k, v in res.summary["algorithms"].items()}
        emit_plot_data(res.aggregates, res.out_dir, kinds, render=True)
    print(f"{'algorithm':<24}{'runs':>6}{'diverged':>10}{'final log10 gap':>18}{'violations':>12}")
    for label, e in res.summary["algorithms"].items():
        viol = e["monitor_violations"]
        v = "NA" if viol["m_bound"] is None else str(sum(viol.values()))
        gap = e.get("final_mean_gap_log10", float("nan"))
        print(f"{label:<24}{e['completed_runs']:>6}{e['diverged_runs']:>10}{gap:>18.4f}{v:>12}")
    print(f"common random numbers: {'ok' if res.crn_ok else 'MISMATCH'}")
    for f in res.failures:
        print(f"failed: {f}")
    print(f"outputs in {res.out_dir}")
    return 0 if res.ok else 1


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    res = grid_search(cfg, workers=args.workers, backend=args.backend)
    print(f"grid search over {res.algorithm} ({res.metric})")
    for params, s in res.leaderboard:
        mark = "*" if params == res.best else " "
        print(f" {mark} {params}  {s:.6g}")
    out = Path(args.out) if args.out else cfg.output_dir
    _write_json(out / "grid_search.json", res.to_dict())
    return 0


def cmd_verify(args) -> int:
    if args.what == "noise":
        rep = analysis.verify_noise_facts(samples=args.samples, seed=args.sample_seed)
    elif args.what == "lemmas":
        if not args.trace:
            raise SystemExit("verify lemmas needs a trace file")
        tr = read_trace(args.trace)
        rep = analysis.verify_sure_bounds(tr, _schedule_from_header(tr.header.get("params", "")))
    else:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        setup = build_setup(cfg)
        acfg = cfg.algorithm(args.algorithm) if args.algorithm else next(
            (a for a in cfg.algorithms if a.kind.startswith("sclip")), None)
        if acfg is None:
            raise SystemExit("no SClip algorithm in the configuration")
        consts = setup.constants(acfg.theorem)
        sched = make_spec(acfg, setup).schedule
        t_grid = [int(float(t)) for t in args.t_grid.split(",")]
        rep = analysis.verify_hphi_bounds(sched, consts, setup.noise, t_grid, tol=args.tol)
    print(rep.table(), end="")
    for k, v in rep.extra.items():
        print(f"{k}: {v}")
    _write_json(args.report or f"verify_{args.what}_report.json", rep.to_dict())
    return 0 if rep.passed else 1


def cmd_fit_rate(args) -> int:
    t, v = read_series(args.csv)
    lo, hi = (float(x) for x in args.window.split(","))
    fit = analysis.fit_rate_exponent(t, v, (lo, hi))
    for k, val in fit.__dict__.items():
        print(f"{k:<14}{val}")
    if args.report:
        _write_json(args.report, fit.__dict__)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sclipnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--backend", choices=BACKENDS)
    r.add_argument("--plot", action="store_true", help="also render PNG panels (needs matplotlib)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="grid search from the config's grid_search block")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s.add_argument("--backend", choices=BACKENDS)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="numerical checks")
    v.add_argument("what", choices=("noise", "lemmas", "hphi"))
    v.add_argument("trace", nargs="?", help="trace CSV (verify lemmas)")
    v.add_argument("--config", help="experiment config (verify hphi)")
    v.add_argument("--algorithm", help="algorithm block whose schedule is checked (verify hphi)")
    v.add_argument("--t-grid", default="1000,10000,100000")
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--samples", type=int, default=1_000_000)
    v.add_argument("--sample-seed", type=int, default=0)
    v.add_argument("--report", help="path of the JSON report")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fit-rate", help="fit the MSE decay exponent of a trace or aggregate CSV")
    f.add_argument("csv")
    f.add_argument("--window", default="0.5,1.0")
    f.add_argument("--report")
    f.set_defaults(func=cmd_fit_rate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SclipnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
