"""Run measurements and the statistics reported for them.

All statistics are pure functions of a :class:`RunMetrics`. CSV output uses
nine significant digits for every float so repeated runs compare byte for byte.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

Link = Tuple[int, int]

SUMMARY_HEADER = ["mode", "load", "avg_delay", "throughput", "avg_util",
                  "used_link_fraction", "delivered", "injected", "dropped"]
SWEEP_HEADER = SUMMARY_HEADER[:2] + ["repetition", "seed"] + SUMMARY_HEADER[2:]
DELAY_HIST_HEADER = ["bin_lo", "bin_hi", "count"]
LINK_UTIL_HEADER = ["from", "to", "avg_util"]

UTIL_BIN = 0.1


@dataclass
class RunMetrics:
    mode: str
    load_point: float
    sim_time: float
    delay_samples: List[float] = field(default_factory=list)
    delivered: int = 0
    injected: int = 0
    dropped: int = 0
    in_flight: int = 0
    per_link_utilization: Dict[Link, List[float]] = field(default_factory=dict)
    link_avg_utilization: Dict[Link, float] = field(default_factory=dict)
    drops_by_reason: Dict[str, int] = field(default_factory=dict)
    per_flow: List[Dict[str, int]] = field(default_factory=list)
    hop_limit_drops: int = 0
    hop_sum: int = 0
    control_packets: int = 0
    guard_rejections: int = 0
    min_forward_violations: Dict[str, int] = field(default_factory=dict)

    def check(self) -> None:
        if self.delivered + self.dropped > self.injected:
            raise ValueError("delivered + dropped exceeds injected")
        if len(self.delay_samples) != self.delivered:
            raise ValueError("one delay sample per delivered packet required")
        for link, samples in self.per_link_utilization.items():
            if any(not 0.0 <= u <= 1.0 for u in samples):
                raise ValueError(f"utilization sample outside [0, 1] on {link}")


@dataclass(frozen=True)
class Bin:
    lo: float
    hi: float
    count: int


def _bin_index(x: float, width: float) -> int:
    k = math.floor(x / width)
    # boundary values belong to the upper bin even when x / width rounds down
    if math.isclose((k + 1) * width, x, rel_tol=1e-12, abs_tol=1e-15):
        k += 1
    return k


def _histogram(values: Iterable[float], width: float, last: Optional[int] = None) -> List[Bin]:
    counts: Dict[int, int] = {}
    for x in values:
        k = _bin_index(x, width)
        if last is not None:
            k = min(k, last)
        counts[k] = counts.get(k, 0) + 1
    return [Bin(k * width, (k + 1) * width, counts[k]) for k in sorted(counts)]


def delay_distribution(m: RunMetrics, bin_width: float) -> List[Bin]:
    """Half-open ``[k*w, (k+1)*w)`` bins of end-to-end delay; empty bins omitted."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    return _histogram(m.delay_samples, bin_width)


def average_delay(m: RunMetrics) -> Optional[float]:
    if not m.delay_samples:
        return None
    return math.fsum(m.delay_samples) / len(m.delay_samples)


def throughput(m: RunMetrics) -> float:
    if not m.sim_time > 0:
        raise ValueError("measured time must be positive")
    return m.delivered / m.sim_time


def utilization_distribution(m: RunMetrics, epsilon: float = 0.0) -> Tuple[List[Bin], float]:
    """Decile histogram of per-link average utilization, and the used-link fraction.

    Links at or below ``epsilon`` count as unused and stay out of the histogram.
    """
    averages = list(m.link_avg_utilization.values())
    used = [u for u in averages if u > epsilon]
    hist = _histogram(used, UTIL_BIN, last=int(round(1 / UTIL_BIN)) - 1)
    fraction = len(used) / len(averages) if averages else 0.0
    return hist, fraction


def average_utilization(m: RunMetrics) -> float:
    averages = list(m.link_avg_utilization.values())
    if not averages:
        return 0.0
    return math.fsum(averages) / len(averages)


def merge(a: RunMetrics, b: RunMetrics) -> RunMetrics:
    """Pool two runs of the same configuration (e.g. repetitions)."""
    links = set(a.link_avg_utilization) | set(b.link_avg_utilization)
    total = a.sim_time + b.sim_time
    avg = {
        l: (a.link_avg_utilization.get(l, 0.0) * a.sim_time
            + b.link_avg_utilization.get(l, 0.0) * b.sim_time) / total
        for l in sorted(links)
    }
    samples = {l: a.per_link_utilization.get(l, []) + b.per_link_utilization.get(l, [])
               for l in sorted(set(a.per_link_utilization) | set(b.per_link_utilization))}
    reasons = dict(a.drops_by_reason)
    for k, v in b.drops_by_reason.items():
        reasons[k] = reasons.get(k, 0) + v
    return RunMetrics(
        mode=a.mode, load_point=a.load_point, sim_time=total,
        delay_samples=a.delay_samples + b.delay_samples,
        delivered=a.delivered + b.delivered, injected=a.injected + b.injected,
        dropped=a.dropped + b.dropped, in_flight=a.in_flight + b.in_flight,
        per_link_utilization=samples, link_avg_utilization=avg, drops_by_reason=reasons,
        hop_limit_drops=a.hop_limit_drops + b.hop_limit_drops,
        control_packets=a.control_packets + b.control_packets,
        guard_rejections=a.guard_rejections + b.guard_rejections,
    )


# --- CSV ---------------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def summary_row(m: RunMetrics, used_epsilon: float = 0.0) -> List[str]:
    _, used = utilization_distribution(m, used_epsilon)
    return [m.mode, fmt(float(m.load_point)), fmt(average_delay(m)), fmt(throughput(m)),
            fmt(average_utilization(m)), fmt(used), fmt(m.delivered), fmt(m.injected),
            fmt(m.dropped)]


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


def write_summary(path, runs: Sequence[RunMetrics], used_epsilon: float = 0.0) -> None:
    _write(path, SUMMARY_HEADER, [summary_row(m, used_epsilon) for m in runs])


def write_sweep(path, rows: Sequence[Tuple[int, int, RunMetrics]], used_epsilon: float = 0.0) -> None:
    out = []
    for rep, seed, m in rows:
        r = summary_row(m, used_epsilon)
        out.append(r[:2] + [str(rep), str(seed)] + r[2:])
    _write(path, SWEEP_HEADER, out)


def write_delay_hist(path, m: RunMetrics, bin_width: float) -> None:
    _write(path, DELAY_HIST_HEADER,
           [[fmt(b.lo), fmt(b.hi), fmt(b.count)] for b in delay_distribution(m, bin_width)])


def write_link_util(path, m: RunMetrics) -> None:
    _write(path, LINK_UTIL_HEADER,
           [[str(a), str(b), fmt(u)] for (a, b), u in sorted(m.link_avg_utilization.items())])


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
