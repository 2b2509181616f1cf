"""Scenario and sweep files.

One ``key = value`` setting per line; ``#`` starts a comment. ``flow`` may
repeat, every other key may appear once. A minimal scenario::

    topology = builtin:network1
    mode = mp
    seed = 7
    duration = 2000
    flow = 0 2 23

Sweep files are scenario files with ``sweep_rates`` (and optionally
``repetitions`` and ``modes``). Each swept rate replaces the arrival rate of
every ``flow`` line, or the per-source rate of ``all_pairs``.

Paths in ``topology`` are resolved relative to the scenario file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .forwarding import Mode, RoutingMode
from .protocol import TimerConfig
from .simulator import CONTROL_KINDS, Flow, SizeLaw, TrafficSpec
from .topology import Topology, resolve_topology


class ScenarioError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


_FLOAT_KEYS = {
    "duration", "warmup", "service_rate", "hello_period", "update_period",
    "neighbor_remove_multiplier", "timeout_multiplier", "move_timeout", "k",
    "acceptance_floor", "ecmp_tolerance", "control_latency", "control_loss",
    "delay_bin", "used_epsilon", "all_pairs",
}
_INT_KEYS = {"seed", "hop_limit", "queue_limit", "repetitions"}
_OTHER_KEYS = {"topology", "mode", "flow", "size", "control_loss_kinds", "sweep_rates", "modes"}
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _OTHER_KEYS

_TIMER_KEYS = {
    "hello_period": "hello_period",
    "update_period": "update_period",
    "neighbor_remove_multiplier": "neighbor_remove_multiplier",
    "timeout_multiplier": "timeout_multiplier",
    "move_timeout": "move_timeout",
    "k": "k_threshold",
    "acceptance_floor": "acceptance_floor",
}


@dataclass
class Scenario:
    topology_ref: str = "builtin:network1"
    base_dir: Optional[Path] = None
    mode: Mode = Mode.MP
    seed: int = 1
    duration: float = 2000.0
    warmup: Optional[float] = None  # None: five update periods
    service_rate: float = 25.0
    flows: List[Tuple[int, int, float]] = field(default_factory=list)
    all_pairs: Optional[float] = None
    size_law: SizeLaw = SizeLaw()
    timers: TimerConfig = TimerConfig()
    ecmp_tolerance: float = 1e-6
    control_latency: float = 0.001
    control_loss: float = 0.0
    control_loss_kinds: frozenset = CONTROL_KINDS
    hop_limit: int = 64
    queue_limit: Optional[int] = None
    delay_bin: float = 0.05
    used_epsilon: float = 0.0
    sweep_rates: Optional[List[float]] = None
    repetitions: int = 1
    modes: Optional[List[Mode]] = None
    _topology: Optional[Topology] = field(default=None, repr=False)

    # -- derived ----------------------------------------------------------

    @property
    def topology(self) -> Topology:
        if self._topology is None:
            self._topology = resolve_topology(self.topology_ref, self.base_dir)
        return self._topology

    def routing(self, mode: Optional[Mode] = None) -> RoutingMode:
        return RoutingMode(mode or self.mode, self.ecmp_tolerance)

    def effective_warmup(self) -> float:
        if self.warmup is not None:
            return self.warmup
        return 5 * self.timers.update_period

    def build_flows(self, rate: Optional[float] = None) -> Tuple[Flow, ...]:
        """Flows of this scenario, with every rate replaced by ``rate`` when given."""
        if self.all_pairs is not None:
            per_source = self.all_pairs if rate is None else rate
            nodes = sorted(self.topology.nodes)
            share = per_source / (len(nodes) - 1)
            return tuple(Flow(s, d, share, self.size_law) for s in nodes for d in nodes if s != d)
        return tuple(Flow(s, d, r if rate is None else rate, self.size_law)
                     for s, d, r in self.flows)

    def load_point(self, rate: Optional[float] = None) -> float:
        if rate is not None:
            return rate
        if self.all_pairs is not None:
            return self.all_pairs
        return sum(r for _, _, r in self.flows)

    def traffic(self, rate: Optional[float] = None, seed: Optional[int] = None) -> TrafficSpec:
        return TrafficSpec(
            flows=self.build_flows(rate),
            service_rate=self.service_rate,
            duration=self.duration,
            warmup=self.effective_warmup(),
            seed=self.seed if seed is None else seed,
            queue_limit=self.queue_limit,
            hop_limit=self.hop_limit,
            control_latency=self.control_latency,
            control_loss=self.control_loss,
            control_loss_kinds=self.control_loss_kinds,
            load_point=self.load_point(rate),
        )

    def sweep_points(self) -> List[Tuple[Mode, float, int, int]]:
        """(mode, rate, repetition, seed) for every sweep run, in output order.

        Repetition ``r`` uses seed ``seed + r`` at every load point and in
        every mode, so curves share their random numbers.
        """
        if not self.sweep_rates:
            raise ScenarioError("sweep requires a non-empty sweep_rates")
        modes = self.modes or [self.mode]
        return [(m, rate, r, self.seed + r)
                for m in modes for rate in self.sweep_rates for r in range(self.repetitions)]

    def with_overrides(self, topology: Optional[str] = None, mode: Optional[str] = None,
                       seed: Optional[int] = None, fast_control: bool = False) -> "Scenario":
        s = replace(self)
        if topology is not None:
            s.topology_ref, s.base_dir, s._topology = topology, Path.cwd(), None
        if mode is not None:
            s.mode = Mode.parse(mode)
            s.modes = None
        if seed is not None:
            s.seed = seed
        if fast_control:
            s.timers = s.timers.fast()
        s.check()
        return s

    def check(self) -> None:
        """Cross-field validation that needs the topology."""
        topo = self.topology
        if self.flows and self.all_pairs is not None:
            raise ScenarioError("use either flow lines or all_pairs, not both")
        for s, d, _ in self.flows:
            for n in (s, d):
                if n not in topo.nodes:
                    raise ScenarioError(f"flow {s} -> {d}: node {n} is not in the topology")
        if self.all_pairs is not None and len(topo) < 2:
            raise ScenarioError("all_pairs needs at least two nodes")
        # building the traffic spec runs the remaining range checks
        try:
            self.traffic()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None


def _split(raw: str) -> List[str]:
    return raw.replace(",", " ").split()


def parse_scenario(text: str, base_dir: Optional[Path] = None) -> Scenario:
    """Parse scenario text; topology references are not loaded yet."""
    sc = Scenario(base_dir=base_dir)
    seen: Dict[str, int] = {}
    timer_args = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ScenarioError(f"unknown key {key!r}", lineno)
        if key != "flow":
            if key in seen:
                raise ScenarioError(f"{key!r} already set on line {seen[key]}", lineno)
            seen[key] = lineno
        if not value:
            raise ScenarioError(f"{key!r} has no value", lineno)
        try:
            _apply(sc, key, value, timer_args)
        except ScenarioError as exc:
            raise ScenarioError(str(exc), lineno) from None
        except ValueError as exc:
            raise ScenarioError(f"{key}: {exc}", lineno) from None
    try:
        sc.timers = TimerConfig(**timer_args)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return sc


def _apply(sc: Scenario, key: str, value: str, timer_args: dict) -> None:
    if key in _INT_KEYS:
        try:
            n = int(value)
        except ValueError:
            raise ScenarioError(f"{key} must be an integer, got {value!r}") from None
        if key in ("repetitions", "hop_limit") and n < 1:
            raise ScenarioError(f"{key} must be at least 1")
        setattr(sc, key, n)
        return
    if key in _FLOAT_KEYS:
        try:
            x = float(value)
        except ValueError:
            raise ScenarioError(f"{key} must be a number, got {value!r}") from None
        if key in _TIMER_KEYS:
            timer_args[_TIMER_KEYS[key]] = x
        elif key == "all_pairs":
            if not x > 0:
                raise ScenarioError("all_pairs rate must be positive")
            sc.all_pairs = x
        elif key == "ecmp_tolerance":
            if not 0 <= x < 1:
                raise ScenarioError("ecmp_tolerance must lie in [0, 1)")
            sc.ecmp_tolerance = x
        elif key == "delay_bin" and not x > 0:
            raise ScenarioError("delay_bin must be positive")
        else:
            setattr(sc, key, x)
        return
    if key == "topology":
        sc.topology_ref = value
    elif key == "mode":
        sc.mode = Mode.parse(value)
    elif key == "flow":
        toks = value.split()
        if len(toks) != 3:
            raise ScenarioError("expected 'flow = <source> <destination> <rate>'")
        try:
            s, d, r = int(toks[0]), int(toks[1]), float(toks[2])
        except ValueError:
            raise ScenarioError(f"bad flow {value!r}") from None
        if s == d:
            raise ScenarioError(f"flow from {s} to itself")
        if not r > 0:
            raise ScenarioError("flow rate must be positive")
        sc.flows.append((s, d, r))
    elif key == "size":
        toks = value.split()
        if len(toks) != 2:
            raise ScenarioError("expected 'size = fixed|exponential <mean_bits>'")
        sc.size_law = SizeLaw(toks[0], float(toks[1]))
    elif key == "control_loss_kinds":
        kinds = frozenset(_split(value))
        unknown = kinds - CONTROL_KINDS
        if unknown:
            raise ScenarioError(f"unknown control packet kinds {sorted(unknown)}")
        sc.control_loss_kinds = kinds
    elif key == "sweep_rates":
        rates = [float(t) for t in _split(value)]
        if not rates:
            raise ScenarioError("sweep_rates is empty")
        if any(not r > 0 for r in rates):
            raise ScenarioError("sweep rates must be positive")
        sc.sweep_rates = rates
    elif key == "modes":
        modes = [Mode.parse(t) for t in _split(value)]
        if len(set(modes)) != len(modes):
            raise ScenarioError("modes listed twice")
        sc.modes = modes


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), base_dir=path.resolve().parent)
