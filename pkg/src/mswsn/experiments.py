"""Scenario sweeps, per-run metrics and plot data.

A grid cell is one ``(mode, n, L_fraction, theta)`` combination.  Each cell
runs ``repeats`` seeds and writes its own result file, so an interrupted
sweep picks up where it stopped.  Seeds depend only on ``(base seed, n,
repeat)``: every cell with the same n sees the same deployments, which
keeps comparisons across L and theta free of deployment noise.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import run_simulation
from .model import Mode, NetworkConfig, SensorNode

log = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "mode", "n", "L_fraction", "theta", "seed", "lifetime_s", "rounds",
    "reclusterings", "delivered", "stranded", "T_L_s", "num_chs_initial",
]
CELL_COLUMNS = ["repeat", *RESULT_COLUMNS, "trace_hash", "error"]
STAT_COLUMNS = ["runs", "mean", "std", "min", "max"]
FIGURE_FAMILIES = ("lifetime_vs_L", "lifetime_vs_n", "lifetime_vs_theta", "variance_vs_time", "alternatives")


@dataclass(frozen=True)
class Cell:
    mode: Mode
    n: int
    L_fraction: float | None
    theta: float | None

    @property
    def key(self) -> str:
        L = "na" if self.L_fraction is None else f"{self.L_fraction:g}"
        th = "na" if self.theta is None else f"{self.theta:g}"
        return f"{self.mode.value}_n{self.n}_L{L}_th{th}"

    def config(self, base: NetworkConfig, seed: int) -> NetworkConfig:
        kw: dict = {"mode": self.mode, "n": self.n, "rng_seed": seed}
        if self.L_fraction is not None:
            kw.update(L_fraction=self.L_fraction, L_absolute=None)
        if self.theta is not None:
            kw["theta"] = self.theta
        return replace(base, **kw)


@dataclass(frozen=True)
class ScenarioGrid:
    n_values: tuple[int, ...] = (400, 600, 800, 1000)
    L_fractions: tuple[float, ...] = (0.05, 0.1, 0.25, 0.5)
    theta_values: tuple[float, ...] = (45.0, 60.0, 67.5, 75.0, 90.0)
    repeats: int = 5
    modes: tuple[Mode, ...] = (Mode.PREFIX,)

    def __post_init__(self):
        for name in ("n_values", "L_fractions", "theta_values", "modes"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def cells(self) -> list[Cell]:
        out = []
        for mode in self.modes:
            if mode is Mode.UNCONSTRAINED:
                # L and theta play no part without a tour budget
                out.extend(Cell(mode, n, None, None) for n in self.n_values)
                continue
            for n, L, th in itertools.product(self.n_values, self.L_fractions, self.theta_values):
                out.append(Cell(mode, n, float(L), float(th)))
        return out


def derive_seed(base_seed: int, n: int, repeat: int) -> int:
    return int(np.random.SeedSequence([base_seed, n, repeat]).generate_state(1)[0])


def variance_of_residual(nodes: Sequence[SensorNode] | np.ndarray) -> float:
    """Population variance of residual energy over alive nodes (J^2)."""
    if isinstance(nodes, np.ndarray):
        energy = nodes.astype(float)
    else:
        energy = np.array([nd.residual_energy for nd in nodes], dtype=float)
    energy = energy[energy > 0]
    if energy.size == 0:
        raise ValueError("no alive node")
    return float(np.var(energy))


def variance_quartile_ratio(series: Sequence[tuple[float, float]], end: float) -> float:
    """Mean variance over the last quarter of ``[0, end]`` divided by the
    mean over the first quarter."""
    if not end > 0:
        raise ValueError("end must be positive")
    first = [v for t, v in series if t <= 0.25 * end]
    last = [v for t, v in series if t >= 0.75 * end]
    if not first or not last:
        raise ValueError("no variance samples in the first or last quarter")
    lo = float(np.mean(first))
    return math.inf if lo == 0 else float(np.mean(last)) / lo


def _run(args) -> tuple[dict, list[tuple[float, float]]]:
    cell, repeat, cfg = args
    row = {
        "repeat": repeat,
        "mode": cell.mode.value,
        "n": cell.n,
        "L_fraction": "" if cell.L_fraction is None else cell.L_fraction,
        "theta": "" if cell.theta is None else cell.theta,
        "seed": cfg.rng_seed,
    }
    try:
        tr = run_simulation(cfg, keep_events=False)
    except Exception as exc:  # recorded; one bad run must not sink the sweep
        row.update({c: "" for c in CELL_COLUMNS if c not in row})
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row, []
    s = tr.summary()
    row.update(
        lifetime_s="" if s["lifetime_s"] is None else repr(s["lifetime_s"]),
        rounds=s["rounds"],
        reclusterings=s["reclusterings"],
        delivered=s["delivered"],
        stranded=s["stranded"],
        T_L_s=repr(s["T_L_s"]),
        num_chs_initial=s["num_chs_initial"],
        trace_hash=s["trace_hash"],
        error="",
    )
    return row, tr.variance_series


def _write_atomic(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_grid(
    grid: ScenarioGrid,
    base: NetworkConfig,
    out_dir=None,
    workers: int = 1,
) -> list[dict]:
    """Run every (cell, repeat) and return the result rows in cell order.

    With ``out_dir``, each finished cell is written to ``cells/<key>.csv``
    (plus its variance series) and skipped on the next call.
    """
    cells = grid.cells()
    cell_dir = None
    done: dict[str, list[dict]] = {}
    if out_dir is not None:
        cell_dir = Path(out_dir) / "cells"
        cell_dir.mkdir(parents=True, exist_ok=True)
        for cell in cells:
            p = cell_dir / f"{cell.key}.csv"
            if p.exists():
                rows = _read_csv(p)
                if len(rows) == grid.repeats:
                    done[cell.key] = rows

    todo = [c for c in cells if c.key not in done]
    jobs = [
        (cell, r, cell.config(base, derive_seed(base.rng_seed, cell.n, r)))
        for cell in todo
        for r in range(grid.repeats)
    ]
    if todo:
        log.info("grid: %d cells cached, %d to run (%d jobs)", len(done), len(todo), len(jobs))

    def finish(cell: Cell, outs: list) -> None:
        rows = [o[0] for o in outs]
        for row in rows:
            if row["error"]:
                log.warning("run failed: %s seed %s: %s", cell.key, row["seed"], row["error"])
        if cell_dir is not None:
            _write_atomic(cell_dir / f"{cell.key}.csv", CELL_COLUMNS, ([r[c] for c in CELL_COLUMNS] for r in rows))
            _write_atomic(
                cell_dir / f"{cell.key}.variance.csv",
                ["seed", "time", "variance_j2"],
                ((r["seed"], repr(t), repr(v)) for r, (_, series) in zip(rows, outs) for t, v in series),
            )
        done[cell.key] = [{c: str(r[c]) for c in CELL_COLUMNS} for r in rows]

    # results arrive in job order, so each cell is saved the moment its
    # last repeat is in; a killed sweep loses at most the cells in flight
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 and len(jobs) > 1 else None
    try:
        outputs = pool.map(_run, jobs) if pool else map(_run, jobs)
        pending: list = []
        for (cell, _, _), out in zip(jobs, outputs):
            pending.append(out)
            if len(pending) == grid.repeats:
                finish(cell, pending)
                pending = []
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)

    results = [row for cell in cells for row in done[cell.key]]
    if out_dir is not None:
        write_results(Path(out_dir) / "results.csv", results)
        failures = [r for r in results if r["error"]]
        _write_atomic(
            Path(out_dir) / "failures.csv",
            ["mode", "n", "L_fraction", "theta", "seed", "error"],
            ([r["mode"], r["n"], r["L_fraction"], r["theta"], r["seed"], r["error"]] for r in failures),
        )
    return results


SENSITIVITY_COLUMNS = [
    "reclustering_threshold", "repeat", "seed", "lifetime_s", "reclusterings",
    "delivered", "stranded", "variance_ratio", "error",
]


def _run_threshold(args) -> dict:
    threshold, repeat, cfg = args
    row = {"reclustering_threshold": threshold, "repeat": repeat, "seed": cfg.rng_seed}
    try:
        tr = run_simulation(cfg, keep_events=False)
    except Exception as exc:
        row.update({c: "" for c in SENSITIVITY_COLUMNS if c not in row})
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    end = tr.lifetime_s if tr.lifetime_s is not None else tr.end_time
    try:
        ratio = repr(variance_quartile_ratio(tr.variance_series, end))
    except ValueError:
        ratio = ""
    row.update(
        lifetime_s="" if tr.lifetime_s is None else repr(tr.lifetime_s),
        reclusterings=tr.reclusterings,
        delivered=tr.delivered,
        stranded=tr.stranded,
        variance_ratio=ratio,
        error="",
    )
    return row


def threshold_sensitivity(
    base: NetworkConfig,
    thresholds: Sequence[float],
    repeats: int = 5,
    out_dir=None,
    workers: int = 1,
) -> list[dict]:
    """Sweep the reclustering threshold on one scenario.

    The threshold has no canonical value, so it is reported as a
    sensitivity rather than fixed.  Seeds follow :func:`derive_seed`, so
    every threshold sees the same deployments.
    """
    if not thresholds or repeats < 1:
        raise ValueError("need at least one threshold and one repeat")
    jobs = [
        (float(t), r, replace(base, reclustering_threshold=float(t), rng_seed=derive_seed(base.rng_seed, base.n, r)))
        for t in thresholds
        for r in range(repeats)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_threshold, jobs))
    else:
        rows = [_run_threshold(j) for j in jobs]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "threshold_runs.csv", SENSITIVITY_COLUMNS,
                      ([_fmt(r[c]) for c in SENSITIVITY_COLUMNS] for r in rows))
        summary = []
        for t in dict.fromkeys(float(x) for x in thresholds):
            mine = [r for r in rows if r["reclustering_threshold"] == t and not r["error"] and r["lifetime_s"] != ""]
            if not mine:
                continue
            s = spread([float(r["lifetime_s"]) for r in mine])
            recl = float(np.mean([r["reclusterings"] for r in mine]))
            summary.append([t, *(s[c] for c in STAT_COLUMNS), recl])
        _write_atomic(out / "threshold_sensitivity.csv",
                      ["reclustering_threshold", "runs", "mean_s", "std_s", "min_s", "max_s", "mean_reclusterings"],
                      ([_fmt(x) for x in row] for row in summary))
    return rows


def write_results(path, rows: Iterable[dict]) -> None:
    _write_atomic(Path(path), RESULT_COLUMNS, ([r[c] for c in RESULT_COLUMNS] for r in rows))


def read_results(path) -> list[dict]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"results file not found: {p}")
    return _read_csv(p)


def spread(values: Sequence[float]) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    return {
        "runs": int(v.size),
        "mean": float(v.mean()),
        "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "min": float(v.min()),
        "max": float(v.max()),
    }


def _num(text: str) -> float | None:
    return None if text == "" else float(text)


def _sort_key(value: str):
    """Numbers in numeric order, then words, then blanks."""
    if value == "":
        return (2, 0.0, "")
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def _family(rows: list[dict], group: Sequence[str], axis: str) -> list[list]:
    """Lifetime statistics over repeats, one row per (group..., axis) value."""
    buckets: dict[tuple, list[float]] = {}
    for r in rows:
        lt = _num(r["lifetime_s"])
        if lt is None:
            continue
        buckets.setdefault(tuple(r[g] for g in group) + (r[axis],), []).append(lt)
    out = []
    for key in sorted(buckets, key=lambda k: (k[0],) + tuple(_sort_key(x) for x in k[1:])):
        s = spread(buckets[key])
        out.append([*key, *(s[c] for c in STAT_COLUMNS)])
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_family(path: Path, header: list[str], rows: list[list]) -> None:
    _write_atomic(path, header, ([_fmt(x) for x in row] for row in rows))


def emit_plots(results, out_dir, cells_dir=None, figures: bool = True) -> list[Path]:
    """Write one CSV per figure family (and an SVG rendering of each).

    ``results`` is a results CSV path or the rows themselves; variance
    series are read from ``cells_dir`` (default: ``<results dir>/cells``).
    Output depends on the inputs alone, so regenerating is byte-identical.
    """
    if isinstance(results, (str, os.PathLike)):
        if cells_dir is None:
            cells_dir = Path(results).parent / "cells"
        results = read_results(results)
    rows = list(results)
    if not rows:
        raise ValueError("no results to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = ["runs", "mean_s", "std_s", "min_s", "max_s"]
    written = []

    fam = {
        "lifetime_vs_L": (["mode", "n", "theta"], "L_fraction"),
        "lifetime_vs_n": (["mode", "L_fraction", "theta"], "n"),
        "lifetime_vs_theta": (["mode", "n", "L_fraction"], "theta"),
    }
    tables = {}
    for name, (group, axis) in fam.items():
        table = _family(rows, group, axis)
        tables[name] = (group, axis, table)
        p = out / f"{name}.csv"
        _write_family(p, [*group, axis, *stats], table)
        written.append(p)

    # prefix vs orienteering at matching (n, L, theta)
    means: dict[tuple, dict[str, float]] = {}
    for r in _family(rows, ["n", "L_fraction", "theta"], "mode"):
        means.setdefault(tuple(r[:3]), {})[r[3]] = r[5]
    alt = []
    for key in sorted(means, key=lambda k: tuple(_sort_key(x) for x in k)):
        m = means[key]
        if Mode.PREFIX.value in m and Mode.ORIENTEERING.value in m:
            a, b = m[Mode.PREFIX.value], m[Mode.ORIENTEERING.value]
            alt.append([*key, a, b, a / b if b else math.nan])
    p = out / "alternatives.csv"
    _write_family(p, ["n", "L_fraction", "theta", "prefix_mean_s", "orienteering_mean_s", "prefix_over_orienteering"], alt)
    written.append(p)

    var_rows = []
    if cells_dir is not None and Path(cells_dir).is_dir():
        seen = sorted({(r["mode"], r["n"], r["L_fraction"], r["theta"]) for r in rows},
                      key=lambda k: (k[0],) + tuple(_sort_key(x) for x in k[1:]))
        for mode, n, L, th in seen:
            cell = Cell(Mode(mode), int(n), _num(L), _num(th))
            vp = Path(cells_dir) / f"{cell.key}.variance.csv"
            if vp.exists():
                for v in _read_csv(vp):
                    var_rows.append([mode, n, L, th, v["seed"], v["time"], v["variance_j2"]])
    p = out / "variance_vs_time.csv"
    _write_family(p, ["mode", "n", "L_fraction", "theta", "seed", "time_s", "variance_j2"], var_rows)
    written.append(p)

    if figures:
        from . import plots

        written.extend(plots.render_all(out, tables, alt, var_rows))
    return written
