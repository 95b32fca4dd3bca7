"""Command-line entry point: ``mswsn {simulate,grid,sensitivity,plots,validate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import default_config_path, dump_config, load_config
from .engine import Simulation
from .experiments import ScenarioGrid, emit_plots, run_grid, threshold_sensitivity
from .model import ConfigError, Mode

log = logging.getLogger("mswsn")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _modes(text: str) -> tuple[Mode, ...]:
    return tuple(Mode(x.strip().lower()) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mswsn", description="Mobile-sink WSN data-gathering simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=Path, default=None, help="config file (default: shipped default.conf)")
        p.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="set one config key after the file is read; repeatable")
        p.add_argument("--seed", type=int, default=None, help="shorthand for --override deployment.seed=N")
        if out:
            p.add_argument("--out", type=Path, required=True, help="output directory (created if absent)")

    p = sub.add_parser("simulate", help="run one simulation and write its trace")
    common(p)
    p.add_argument("--no-events", action="store_true", help="skip the per-debit events.csv")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("grid", help="run a scenario sweep (resumable)")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n", type=_ints, default=ScenarioGrid.n_values, help="comma list, e.g. 400,600")
    p.add_argument("--L", type=_floats, default=ScenarioGrid.L_fractions, help="comma list of L fractions")
    p.add_argument("--theta", type=_floats, default=ScenarioGrid.theta_values, help="comma list, degrees")
    p.add_argument("--repeats", type=int, default=ScenarioGrid.repeats)
    p.add_argument("--modes", type=_modes, default=ScenarioGrid.modes, help="comma list of modes")

    p = sub.add_parser("sensitivity", help="sweep the reclustering threshold on one scenario")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--thresholds", type=_floats, default=(0.02, 0.05, 0.1, 0.2), help="comma list of fractions")
    p.add_argument("--repeats", type=int, default=ScenarioGrid.repeats)

    p = sub.add_parser("plots", help="write figure-family CSVs and SVGs from grid results")
    p.add_argument("--out", type=Path, required=True, help="grid output directory")
    p.add_argument("--results", type=Path, default=None, help="results CSV (default: OUT/results.csv)")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("validate", help="parse the config and print the effective settings")
    common(p, out=False)
    return ap


def _effective(args):
    path = args.config if args.config is not None else default_config_path()
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"deployment.seed={args.seed}")
    return load_config(path, overrides)


def _dump(cfg, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective.conf").write_text(dump_config(cfg))


def cmd_simulate(args) -> int:
    cfg = _effective(args)
    _dump(cfg, args.out)
    sim = Simulation(cfg, keep_events=not args.no_events)
    trace = sim.run()
    trace.write(args.out)
    if not args.no_figures:
        from .plots import render_trace

        render_trace(args.out, trace)
    s = trace.summary()
    print(json.dumps({k: s[k] for k in ("lifetime_s", "rounds", "reclusterings", "delivered", "stranded")}))
    return 0


def cmd_grid(args) -> int:
    cfg = _effective(args)
    _dump(cfg, args.out)
    grid = ScenarioGrid(args.n, args.L, args.theta, args.repeats, args.modes)
    rows = run_grid(grid, cfg, args.out, workers=args.workers)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} runs, {failed} failed; results in {args.out / 'results.csv'}")
    return 0


def cmd_sensitivity(args) -> int:
    cfg = _effective(args)
    _dump(cfg, args.out)
    for t in args.thresholds:
        replace(cfg, reclustering_threshold=t)  # validates each value up front
    rows = threshold_sensitivity(cfg, args.thresholds, args.repeats, args.out, workers=args.workers)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} runs, {failed} failed; summary in {args.out / 'threshold_sensitivity.csv'}")
    return 0


def cmd_plots(args) -> int:
    results = args.results if args.results is not None else args.out / "results.csv"
    if not results.is_file():
        raise ConfigError(f"results file not found: {results}")
    files = emit_plots(results, args.out / "plots", figures=not args.no_figures)
    print(f"wrote {len(files)} files to {args.out / 'plots'}")
    return 0


def cmd_validate(args) -> int:
    cfg = _effective(args)
    sys.stdout.write(dump_config(cfg))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "grid": cmd_grid,
    "sensitivity": cmd_sensitivity,
    "plots": cmd_plots,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"mswsn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
