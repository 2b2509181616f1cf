"""Command-line front end.

    lfmroute validate --topology FILE
    lfmroute run      --scenario FILE [--out DIR] [--trace FILE] [--plot]
    lfmroute compare  --scenario FILE [--out DIR] [--plot]
    lfmroute sweep    --scenario FILE [--out DIR] [--jobs N] [--plot]

Exit codes: 0 success, 1 usage or validation error, 2 invariant violation
during a run, 3 I/O error.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import metrics as M
from .forwarding import Mode
from .scenario import Scenario, ScenarioError, load_scenario
from .simulator import InvariantViolation, Simulation
from .topology import MEASUREMENT_PAIR, TopologyError, resolve_topology

log = logging.getLogger("lfmroute")

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits 2 by default, which is reserved for invariant failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


class RunFailed(Exception):
    def __init__(self, exc: InvariantViolation, label: str):
        super().__init__(f"{label}: {exc}")
        self.violation = exc
        self.label = label


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lfmroute", description="Loop-free multipath routing simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a topology file and report path diversity")
    v.add_argument("--topology", help="topology file or builtin:NAME (default builtin:network1)")

    def scenario_cmd(name, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--scenario", required=True, help="scenario (or sweep) file")
        c.add_argument("--topology", help="override the scenario's topology")
        c.add_argument("--mode", help="override the routing mode: mp, sp or ecmp")
        c.add_argument("--seed", type=int, help="override the scenario seed")
        c.add_argument("--out", default="out", help="output directory (default ./out)")
        c.add_argument("--fast-control", action="store_true",
                       help="divide every protocol timer by ten")
        c.add_argument("--plot", action="store_true", help="also render PNG figures")
        return c

    r = scenario_cmd("run", "simulate one scenario")
    r.add_argument("--trace", help="write the event trace to this file")
    scenario_cmd("compare", "run a scenario under mp, sp and ecmp with identical traffic")
    s = scenario_cmd("sweep", "run every load point of a sweep file")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


# -- commands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    topo = resolve_topology(args.topology or "builtin:network1", Path.cwd())
    n, m = len(topo), len(topo.links)
    print(f"nodes {n}  links {m}  connected yes")
    pairs = list(itertools.combinations(sorted(topo.nodes), 2))
    counts = {pair: topo.disjoint_path_count(*pair) for pair in pairs}
    for (a, b), c in counts.items():
        print(f"pair {a} {b}  disjoint_paths {c}")
    if all(x in topo.nodes for x in MEASUREMENT_PAIR):
        s, t = MEASUREMENT_PAIR
        print(f"measurement pair {s} {t}: {counts[(s, t)]} node-disjoint paths")
    return EXIT_OK


def _load(args) -> Scenario:
    sc = load_scenario(args.scenario)
    return sc.with_overrides(topology=args.topology, mode=args.mode, seed=args.seed,
                             fast_control=args.fast_control)


def _simulate(sc: Scenario, mode: Mode, rate=None, seed=None, trace=None) -> M.RunMetrics:
    spec = sc.traffic(rate, seed)
    label = f"mode={mode.value} load={spec.load_point:g} seed={spec.seed}"
    log.info("running %s", label)
    try:
        return Simulation(sc.topology, spec, sc.routing(mode), sc.timers, trace).run()
    except InvariantViolation as exc:
        raise RunFailed(exc, label) from None


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary_line(m: M.RunMetrics) -> str:
    d = M.average_delay(m)
    delay = "n/a" if d is None else f"{d:.6g}s"
    return (f"{m.mode} load={m.load_point:g} avg_delay={delay} "
            f"throughput={M.throughput(m):.6g} delivered={m.delivered} "
            f"injected={m.injected} dropped={m.dropped}")


def cmd_run(args) -> int:
    sc = _load(args)
    out = _outdir(args)
    if args.trace:
        with open(args.trace, "w") as fh:
            m = _simulate(sc, sc.mode, trace=fh)
    else:
        m = _simulate(sc, sc.mode)
    M.write_summary(out / "summary.csv", [m], sc.used_epsilon)
    M.write_delay_hist(out / "delay_hist.csv", m, sc.delay_bin)
    M.write_link_util(out / "link_util.csv", m)
    if args.plot:
        from . import plotting
        plotting.delay_histogram(out / "delay_hist.png", [m], sc.delay_bin)
        plotting.utilization_histogram(out / "link_util.png", [m], sc.used_epsilon)
    print(_summary_line(m))
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args)
    out = _outdir(args)
    runs = [_simulate(sc, mode) for mode in Mode]
    M.write_summary(out / "compare.csv", runs, sc.used_epsilon)
    for m in runs:
        M.write_delay_hist(out / f"delay_hist_{m.mode}.csv", m, sc.delay_bin)
        M.write_link_util(out / f"link_util_{m.mode}.csv", m)
        print(_summary_line(m))
    if args.plot:
        from . import plotting
        plotting.delay_histogram(out / "compare_delay_hist.png", runs, sc.delay_bin)
        plotting.utilization_histogram(out / "compare_link_util.png", runs, sc.used_epsilon)
    return EXIT_OK


def _sweep_point(job):
    sc, mode, rate, rep, seed = job
    return rep, seed, _simulate(sc, mode, rate, seed)


def cmd_sweep(args) -> int:
    sc = _load(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    points = sc.sweep_points()
    out = _outdir(args)
    jobs = [(sc, mode, rate, rep, seed) for mode, rate, rep, seed in points]
    if args.jobs == 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    M.write_sweep(out / "sweep.csv", rows, sc.used_epsilon)
    for _, _, m in rows:
        print(_summary_line(m))
    if args.plot:
        from . import plotting
        plotting.sweep_curves(out, M.read_csv(out / "sweep.csv"))
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RunFailed as exc:
        trace_path = Path(getattr(args, "out", ".")) / "violation_trace.txt"
        try:
            trace_path.parent.mkdir(parents=True, exist_ok=True)
            trace_path.write_text("\n".join(exc.violation.trace) + "\n")
        except OSError:
            trace_path = None
        print(f"invariant violation: {exc}", file=sys.stderr)
        if trace_path is not None:
            print(f"event trace: {trace_path}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ScenarioError, TopologyError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
