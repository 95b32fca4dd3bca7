"""SVG renderings of the figure-family tables.

SVG keeps every artifact plain text; a fixed hash salt and no date stamp
make re-rendering byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "mswsn",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "figure.figsize": (5.0, 3.4),
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _label(group: list[str], key: tuple) -> str:
    return ", ".join(f"{g}={v}" for g, v in zip(group, key) if v != "")


def _lines(ax, group, table, x_is_numeric=True):
    series: dict[tuple, list] = {}
    for row in table:
        series.setdefault(tuple(row[: len(group)]), []).append(row)
    for key, rows in series.items():
        x = [float(r[len(group)]) for r in rows]
        mean = [r[len(group) + 2] for r in rows]
        std = [r[len(group) + 3] for r in rows]
        ax.errorbar(x, mean, yerr=std, marker="o", ms=3, capsize=2, lw=1, label=_label(group, key))
    if len(series) <= 12:
        ax.legend()


def render_all(out: Path, tables: dict, alt: list, var_rows: list) -> list[Path]:
    written = []
    titles = {
        "lifetime_vs_L": "L (fraction of full tour time)",
        "lifetime_vs_n": "number of nodes",
        "lifetime_vs_theta": "theta (degrees)",
    }
    with plt.rc_context(STYLE):
        for name, (group, axis, table) in tables.items():
            fig, ax = plt.subplots()
            _lines(ax, group, table)
            ax.set_xlabel(titles[name])
            ax.set_ylabel("lifetime (s)")
            written.append(_save(fig, out / f"{name}.svg"))

        fig, ax = plt.subplots()
        if alt:
            labels = [_label(["n", "L", "theta"], tuple(r[:3])) for r in alt]
            pos = range(len(alt))
            ax.bar([p - 0.2 for p in pos], [r[3] for r in alt], width=0.4, label="prefix")
            ax.bar([p + 0.2 for p in pos], [r[4] for r in alt], width=0.4, label="orienteering")
            ax.set_xticks(list(pos), labels, rotation=30, ha="right", fontsize=6)
            ax.legend()
        ax.set_ylabel("mean lifetime (s)")
        written.append(_save(fig, out / "alternatives.svg"))

        fig, ax = plt.subplots()
        series: dict[tuple, tuple[list, list]] = {}
        for mode, n, L, th, seed, t, v in var_rows:
            xs, ys = series.setdefault((mode, n, L, th, seed), ([], []))
            xs.append(float(t))
            ys.append(float(v))
        for key, (xs, ys) in series.items():
            ax.plot(xs, ys, lw=0.8, label=_label(["mode", "n", "L", "theta", "seed"], key))
        if 0 < len(series) <= 8:
            ax.legend()
        ax.set_xlabel("time (s)")
        ax.set_ylabel("variance of residual energy (J$^2$)")
        written.append(_save(fig, out / "variance_vs_time.svg"))
    return written


def render_trace(out, trace) -> list[Path]:
    """Residual-variance and alive-node curves of a single run."""
    out = Path(out)
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if trace.variance_series:
            t, v = zip(*trace.variance_series)
            ax.plot(t, v, lw=1)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("variance of residual energy (J$^2$)")
        written.append(_save(fig, out / "variance.svg"))

        fig, ax = plt.subplots()
        t = [0.0] + [r.start_time + r.duration for r in trace.rounds]
        alive = [len(trace.ledger.residual)] + [r.alive for r in trace.rounds]
        ax.step(t, alive, where="post", lw=1)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("alive nodes")
        written.append(_save(fig, out / "alive.svg"))
    return written
