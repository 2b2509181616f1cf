"""PNG figures drawn from the same numbers that go into the CSV files.

Only the CLI's ``--plot`` path imports this module, so matplotlib stays off
the simulation path. The Agg backend is forced because runs are headless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import metrics as M  # noqa: E402

MODE_STYLE = {
    "mp": {"color": "#1b6ca8", "marker": "o"},
    "ecmp": {"color": "#e08a1e", "marker": "s"},
    "sp": {"color": "#b8312f", "marker": "^"},
}

RC = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _style(mode: str) -> dict:
    return MODE_STYLE.get(mode, {"color": "0.3", "marker": "x"})


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def delay_histogram(path, runs: Sequence[M.RunMetrics], bin_width: float) -> Path:
    """Per-packet delay distribution, one step curve per run."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for m in runs:
            bins = M.delay_distribution(m, bin_width)
            if not bins:
                continue
            total = sum(b.count for b in bins)
            xs = [b.lo for b in bins] + [bins[-1].hi]
            ys = [b.count / total for b in bins]
            ax.stairs(ys, xs, label=m.mode, color=_style(m.mode)["color"])
        ax.set_xlabel("end-to-end delay (s)")
        ax.set_ylabel("fraction of packets")
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        return _save(fig, path)


def utilization_histogram(path, runs: Sequence[M.RunMetrics], epsilon: float = 0.0) -> Path:
    """Number of links per utilization decile, grouped bars per run."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        width = M.UTIL_BIN / (len(runs) + 1)
        for n, m in enumerate(runs):
            hist, used = M.utilization_distribution(m, epsilon)
            ax.bar([b.lo + (n + 0.5) * width for b in hist], [b.count for b in hist],
                   width=width, color=_style(m.mode)["color"],
                   label=f"{m.mode} (used {used:.0%})")
        ax.set_xlim(0, 1)
        ax.set_xlabel("link utilization")
        ax.set_ylabel("links")
        if runs:
            ax.legend()
        return _save(fig, path)


SWEEP_FIGURES = {
    "avg_delay": "average delay (s)",
    "throughput": "throughput (pkt/s)",
    "avg_util": "average link utilization",
}


def sweep_curves(out_dir, rows: Sequence[Mapping[str, str]]) -> Dict[str, Path]:
    """One figure per sweep statistic, mean over repetitions against load.

    ``rows`` are sweep CSV records as returned by :func:`metrics.read_csv`.
    """
    out_dir = Path(out_dir)
    series: Dict[str, Dict[float, Dict[str, list]]] = {}
    for row in rows:
        per_load = series.setdefault(row["mode"], {}).setdefault(float(row["load"]), {})
        for key in SWEEP_FIGURES:
            if row[key] != "":
                per_load.setdefault(key, []).append(float(row[key]))
    written = {}
    for key, label in SWEEP_FIGURES.items():
        with plt.rc_context(RC):
            fig, ax = plt.subplots()
            for mode, per_load in series.items():
                loads = sorted(l for l in per_load if per_load[l].get(key))
                ys = [sum(per_load[l][key]) / len(per_load[l][key]) for l in loads]
                ax.plot(loads, ys, label=mode, **_style(mode))
            ax.set_xlabel("load point (pkt/s)")
            ax.set_ylabel(label)
            if key == "avg_delay":
                ax.set_yscale("log")
            if series:
                ax.legend()
            written[key] = _save(fig, out_dir / f"sweep_{key}.png")
    return written
