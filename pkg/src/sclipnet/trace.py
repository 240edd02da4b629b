"""Per-run trace records and their CSV persistence.

A trace file starts with ``# key: value`` comment lines (config hash,
algorithm, seed, noise checksum, ...) followed by a header row and one row
per recorded iteration, columns in the order of ``COLUMNS``.  Floats are
written with ``%.17g`` so a file round-trips bit for bit; ``NA`` marks a
monitor that does not apply to the algorithm.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = (
    "t", "gap", "gap_log10", "mse", "consensus", "m_inf", "drift_inf",
    "m_bound_ok", "m_bound_slack", "consensus_bound_ok", "consensus_bound_slack", "drift_bound_ok", "drift_bound_slack",
    "diverged",
)
MONITORS = ("m_bound", "consensus_bound", "drift_bound")
NA = "NA"


@dataclass(frozen=True)
class Monitor:
    """Sure-bound check per recorded row: ``ok = value <= bound`` up to tolerance."""

    ok: np.ndarray
    slack: np.ndarray  # bound - value

    @property
    def violations(self) -> int:
        return int((~self.ok).sum())

    def first_violation(self) -> int | None:
        bad = np.flatnonzero(~self.ok)
        return int(bad[0]) if bad.size else None


@dataclass(eq=False)
class Trace:
    t: np.ndarray
    gap: np.ndarray
    mse: np.ndarray
    consensus: np.ndarray
    m_inf: np.ndarray
    drift_inf: np.ndarray
    diverged: np.ndarray
    monitors: dict[str, Monitor | None] = field(default_factory=dict)
    header: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def gap_log10(self) -> np.ndarray:
        """log10 of the optimality gap relative to the gap at t = 0."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log10(self.gap / self.gap[0])

    @property
    def any_diverged(self) -> bool:
        return bool(self.diverged.any())

    @property
    def violations(self) -> dict[str, int | None]:
        return {k: (None if self.monitors.get(k) is None else self.monitors[k].violations)
                for k in MONITORS}

    def body(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(COLUMNS) + "\n")
        cols = [self.gap, self.gap_log10, self.mse, self.consensus, self.m_inf, self.drift_inf]
        for r in range(len(self.t)):
            cells = [str(int(self.t[r]))] + [_fmt(c[r]) for c in cols]
            for k in MONITORS:
                mon = self.monitors.get(k)
                if mon is None:
                    cells += [NA, NA]
                else:
                    cells += [str(int(mon.ok[r])), _fmt(mon.slack[r])]
            cells.append(str(int(self.diverged[r])))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_csv(self, path) -> None:
        head = "".join(f"# {k}: {v}\n" for k, v in self.header.items())
        Path(path).write_text(head + self.body())


def _fmt(v: float) -> str:
    return "%.17g" % v


def _parse(cell: str) -> float:
    return np.nan if cell == NA else float(cell)


def body_of(path) -> str:
    """Everything after the comment header of a trace file."""
    lines = Path(path).read_text().splitlines(keepends=True)
    return "".join(ln for ln in lines if not ln.startswith("#"))


def read_trace(path) -> Trace:
    header: dict[str, str] = {}
    rows = []
    names = None
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            header[key.strip()] = val.strip()
        elif names is None:
            names = ln.split(",")
            if tuple(names) != COLUMNS:
                raise ValueError(f"{path}: unexpected columns {names}")
        elif ln:
            rows.append(ln.split(","))
    if names is None:
        raise ValueError(f"{path}: no header row")
    raw = np.array(rows, dtype=object).reshape(len(rows), len(COLUMNS))
    col = {name: raw[:, j] for j, name in enumerate(COLUMNS)}
    num = lambda name: np.array([_parse(c) for c in col[name]], dtype=float)
    monitors: dict[str, Monitor | None] = {}
    for k in MONITORS:
        if len(rows) and col[f"{k}_ok"][0] == NA:
            monitors[k] = None
        else:
            monitors[k] = Monitor(num(f"{k}_ok").astype(bool), num(f"{k}_slack"))
    return Trace(
        t=num("t").astype(np.int64), gap=num("gap"), mse=num("mse"), consensus=num("consensus"),
        m_inf=num("m_inf"), drift_inf=num("drift_inf"), diverged=num("diverged").astype(bool),
        monitors=monitors, header=header,
    )
