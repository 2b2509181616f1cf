"""Deterministic discrete-event kernel.

One exponential server per link direction, Poisson sources, control packets
delivered after a fixed latency outside the data queues, and a global check
of the forwarding graphs after every event that can change routing state.

Randomness is split into independent named streams (per flow, per link
server, per router, control loss) so that changing the routing mode never
perturbs the offered traffic.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, FrozenSet, Iterator, List, Optional, Sequence, TextIO, Tuple

from .forwarding import Mode, RoutingMode, select_next_hop, split_table
from .metrics import RunMetrics
from .protocol import (ForwardMoveRequest, ForwardMoveResponse, Hello, NeighborUpdate,
                       NodeState, Schedule, Send, TimerConfig, format_packet, init_node,
                       utilization_from_busy_time)
from .topology import NodeId, Topology

log = logging.getLogger(__name__)

CONTROL_KINDS = frozenset({"Hello", "NeighborUpdate", "ForwardMoveRequest", "ForwardMoveResponse"})

# event kinds, ordered only by (time, seq)
TRAFFIC_GEN = "TrafficGen"
SERVICE_COMPLETE = "ServiceComplete"
CONTROL_DELIVER = "ControlDeliver"
TIMER_FIRE = "TimerFire"
MEASURE_TICK = "MeasureTick"
WARMUP_END = "WarmupEnd"

CAPACITY_TOL = 1e-9


class InvariantViolation(Exception):
    def __init__(self, message: str, trace: Sequence[str] = ()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class SizeLaw:
    kind: str = "exponential"
    mean_bits: float = 8000.0

    def __post_init__(self):
        if self.kind not in ("fixed", "exponential"):
            raise ValueError(f"unknown size law {self.kind!r}")
        if not self.mean_bits > 0:
            raise ValueError("packet size must be positive")

    def draw(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            return self.mean_bits
        return rng.expovariate(1.0 / self.mean_bits)


@dataclass(frozen=True)
class Flow:
    source: NodeId
    destination: NodeId
    rate: float
    size_law: SizeLaw = SizeLaw()

    def __post_init__(self):
        if self.source == self.destination:
            raise ValueError(f"flow from {self.source} to itself")
        if not self.rate > 0:
            raise ValueError("arrival rate must be positive")


@dataclass(frozen=True)
class TrafficSpec:
    flows: Tuple[Flow, ...] = ()
    service_rate: float = 25.0
    duration: float = 1000.0
    warmup: float = 150.0
    seed: int = 1
    queue_limit: Optional[int] = None
    hop_limit: int = 64
    control_latency: float = 0.001
    control_loss: float = 0.0
    control_loss_kinds: FrozenSet[str] = CONTROL_KINDS
    load_point: Optional[float] = None

    def __post_init__(self):
        if not self.service_rate > 0:
            raise ValueError("service rate must be positive")
        if not 0 <= self.warmup < self.duration:
            raise ValueError("warmup must lie in [0, duration)")
        if self.queue_limit is not None and self.queue_limit < 1:
            raise ValueError("queue limit must be at least 1")
        if not self.control_latency > 0:
            raise ValueError("control latency must be positive")
        if not 0.0 <= self.control_loss <= 1.0:
            raise ValueError("control loss must lie in [0, 1]")
        unknown = set(self.control_loss_kinds) - CONTROL_KINDS
        if unknown:
            raise ValueError(f"unknown control packet kinds {sorted(unknown)}")


def stream(seed: int, *name) -> random.Random:
    """Independent, reproducible substream for ``name`` under ``seed``."""
    return random.Random("/".join(str(p) for p in (seed,) + name))


def generate_traffic(flow: Flow, rng: random.Random, size_rng: random.Random,
                     until: float) -> Iterator[Tuple[float, float]]:
    """Poisson arrival times and packet sizes of one flow on ``[0, until)``."""
    t = rng.expovariate(flow.rate)
    while t < until:
        yield t, flow.size_law.draw(size_rng)
        t += rng.expovariate(flow.rate)


class DataPacket:
    __slots__ = ("id", "flow", "source", "destination", "size", "created_at", "hop_count", "measured")

    def __init__(self, pid, flow, source, destination, size, created_at, measured):
        self.id = pid
        self.flow = flow
        self.source = source
        self.destination = destination
        self.size = size
        self.created_at = created_at
        self.hop_count = 0
        self.measured = measured


class LinkQueue:
    """FIFO toward one neighbour; the head packet is the one in service."""

    __slots__ = ("src", "dst", "fifo", "busy", "busy_since", "window_busy", "window_start",
                 "total_busy", "capacity_limit", "rng")

    def __init__(self, src: NodeId, dst: NodeId, rng: random.Random,
                 capacity_limit: Optional[int] = None):
        self.src = src
        self.dst = dst
        self.fifo: Deque[DataPacket] = deque()
        self.busy = False
        self.busy_since = 0.0
        self.window_busy = 0.0
        self.window_start = 0.0
        self.total_busy = 0.0
        self.capacity_limit = capacity_limit
        self.rng = rng

    def _account(self, now: float) -> None:
        if self.busy:
            dt = now - self.busy_since
            self.window_busy += dt
            self.total_busy += dt
            self.busy_since = now

    def full(self) -> bool:
        return self.capacity_limit is not None and len(self.fifo) >= self.capacity_limit

    def start_service(self, now: float, service_rate: float) -> float:
        """Mark busy and return the completion time of the head packet."""
        if not self.busy:
            self.busy = True
            self.busy_since = now
        return now + self.rng.expovariate(service_rate)

    def go_idle(self, now: float) -> None:
        self._account(now)
        self.busy = False

    def busy_total(self, now: float) -> float:
        self._account(now)
        return self.total_busy

    def sample_utilization(self, now: float, previous: float = 0.0) -> float:
        self._account(now)
        window = now - self.window_start
        if window <= 0:
            return previous
        u = utilization_from_busy_time(min(self.window_busy, window), window)
        self.window_busy = 0.0
        self.window_start = now
        return u


def sample_utilization(queue: LinkQueue, now: float, previous: float = 0.0) -> float:
    return queue.sample_utilization(now, previous)


class Simulation:
    def __init__(self, topology: Topology, spec: TrafficSpec,
                 mode: RoutingMode = RoutingMode(), timers: TimerConfig = TimerConfig(),
                 trace: Optional[TextIO] = None, check_invariants: bool = True):
        self.topology = topology
        self.spec = spec
        self.mode = mode
        self.timers = timers
        self.trace = trace
        self.check_enabled = check_invariants
        for f in spec.flows:
            if f.source not in topology.nodes or f.destination not in topology.nodes:
                raise ValueError(f"flow {f.source}->{f.destination} uses an unknown node")
        self.now = 0.0
        self._heap: List = []
        self._seq = 0
        self.nodes: Dict[NodeId, NodeState] = {}
        for k in sorted(topology.nodes):
            caps = {j: topology.link_capacity(k, j) for j in topology.neighbors(k)}
            self.nodes[k] = init_node(k, sorted(caps), caps, timers, self.would_create_cycle)
        self.queues: Dict[Tuple[NodeId, NodeId], LinkQueue] = {
            (a, b): LinkQueue(a, b, stream(spec.seed, "service", a, b), spec.queue_limit)
            for a, b in topology.directed_links()
        }
        self._last_util: Dict[Tuple[NodeId, NodeId], float] = {k: 0.0 for k in self.queues}
        self._route_rng = {k: stream(spec.seed, "route", k) for k in topology.nodes}
        self._loss_rng = stream(spec.seed, "loss")
        self._split_cache: Dict[Tuple[NodeId, NodeId], object] = {}
        self._checked_version = -1
        self._recent: Deque[str] = deque(maxlen=64)
        self._pid = 0
        self._traffic = [
            generate_traffic(f, stream(spec.seed, "traffic", i), stream(spec.seed, "size", i), spec.duration)
            for i, f in enumerate(spec.flows)
        ]
        self._in_network: Dict[int, DataPacket] = {}
        self._busy_at_warmup: Dict[Tuple[NodeId, NodeId], float] = {}
        self._per_flow = [{"injected": 0, "delivered": 0, "dropped": 0} for _ in spec.flows]
        self.metrics = RunMetrics(
            mode=str(mode), load_point=self._load_point(),
            sim_time=spec.duration - spec.warmup,
            per_link_utilization={k: [] for k in self.queues},
        )

    def _load_point(self) -> float:
        if self.spec.load_point is not None:
            return self.spec.load_point
        return math.fsum(f.rate for f in self.spec.flows)

    # -- scheduling -------------------------------------------------------

    def _push(self, t: float, kind: str, payload) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, payload))

    def _apply(self, k: NodeId, effects) -> None:
        for eff in effects:
            if isinstance(eff, Send):
                self.deliver_control(k, eff.to, eff.packet)
            else:
                self._push(eff.at, TIMER_FIRE, (k, eff.key, eff.at))
        self._split_cache_drop(k)

    def deliver_control(self, src: NodeId, dst: NodeId, pkt) -> None:
        if not self.topology.has_link(src, dst):
            raise InvariantViolation(f"control packet between non-adjacent {src} and {dst}")
        self.metrics.control_packets += 1
        kind = type(pkt).__name__
        if self.spec.control_loss > 0 and kind in self.spec.control_loss_kinds:
            if self._loss_rng.random() < self.spec.control_loss:
                self._log(f"lost\t{src}->{dst}\t{format_packet(pkt)}")
                return
        self._push(self.now + self.spec.control_latency, CONTROL_DELIVER, (src, dst, pkt))

    def _split_cache_drop(self, k: NodeId) -> None:
        for key in [key for key in self._split_cache if key[0] == k]:
            del self._split_cache[key]

    def _log(self, line: str) -> None:
        self._recent.append(line)
        if self.trace is not None:
            self.trace.write(f"{self.now:.9f}\t{line}\n")

    # -- forwarding graph -------------------------------------------------

    def would_create_cycle(self, k: NodeId, l: NodeId, d: NodeId) -> bool:
        """True when adding edge k->l to the forward graph of ``d`` closes a cycle."""
        seen = {l}
        stack = [l]
        while stack:
            n = stack.pop()
            if n == k:
                return True
            e = self.nodes[n].main_table.get(d)
            if e is None:
                continue
            for m in e.forward_set:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    def forward_graph(self, d: NodeId) -> Dict[NodeId, List[NodeId]]:
        return {k: sorted(n.forward_set(d)) for k, n in self.nodes.items()}

    def check_invariants(self) -> None:
        for k, node in self.nodes.items():
            nbrs = set(node.neighbor_table)
            for d, e in node.main_table.items():
                if not e.forward_set <= nbrs:
                    self._fail(f"node {k}: forward set {sorted(e.forward_set)} for {d} not within neighbours")
                if d == k and e.forward_set:
                    self._fail(f"node {k}: non-empty forward set for itself")
                if set(e.per_forward_capacity) != e.forward_set:
                    self._fail(f"node {k}: capacity keys differ from forward set for {d}")
                fresh = sum(e.per_forward_capacity[i] for i in sorted(e.per_forward_capacity))
                if abs(fresh - e.total_capacity) > CAPACITY_TOL:
                    self._fail(f"node {k}: stale total capacity for {d}")
        version = sum(n.routing_version for n in self.nodes.values())
        if version == self._checked_version:
            return  # forward sets unchanged since the last full graph check
        self._checked_version = version
        for d in sorted(self.topology.nodes):
            graph = self.forward_graph(d)
            for k, succ in graph.items():
                for i in succ:
                    if k in graph[i]:
                        self._fail(f"destination {d}: {k} and {i} are forward to each other")
            cycle = find_cycle(graph)
            if cycle:
                self._fail(f"destination {d}: forwarding loop {cycle}")

    def _fail(self, message: str) -> None:
        raise InvariantViolation(f"t={self.now:.9f}: {message}", list(self._recent))

    def min_forward_violations(self) -> List[Tuple[NodeId, NodeId]]:
        bad = []
        for k, node in self.nodes.items():
            for d in sorted(self.topology.nodes):
                if d != k and not node.forward_set(d):
                    bad.append((k, d))
        return bad

    # -- data plane -------------------------------------------------------

    def _forward(self, pkt: DataPacket, x: NodeId) -> None:
        d = pkt.destination
        if x == d:
            self._deliver(pkt)
            return
        if pkt.hop_count >= self.spec.hop_limit:
            self.metrics.hop_limit_drops += 1
            self._drop(pkt, "hop_limit")
            return
        table = self._split_cache.get((x, d))
        if table is None:
            entry = self.nodes[x].main_table.get(d)
            if entry is None or not entry.forward_set:
                self._drop(pkt, "no_route")
                return
            table = split_table(entry)
            self._split_cache[(x, d)] = table
        nh = select_next_hop(table, self.mode, self._route_rng[x])
        if nh not in self.nodes[x].main_table[d].forward_set:
            self._fail(f"node {x} chose backward neighbour {nh} for {d}")
        q = self.queues[(x, nh)]
        if q.full():
            self._drop(pkt, "overflow")
            return
        pkt.hop_count += 1
        q.fifo.append(pkt)
        if not q.busy:
            self._push(q.start_service(self.now, self.spec.service_rate), SERVICE_COMPLETE, q)

    def _deliver(self, pkt: DataPacket) -> None:
        self._in_network.pop(pkt.id, None)
        if pkt.measured:
            self.metrics.delivered += 1
            self.metrics.delay_samples.append(self.now - pkt.created_at)
            self.metrics.hop_sum += pkt.hop_count
            self._per_flow[pkt.flow]["delivered"] += 1

    def _drop(self, pkt: DataPacket, reason: str) -> None:
        self._in_network.pop(pkt.id, None)
        self._log(f"drop\t{reason}\tpkt{pkt.id}")
        if pkt.measured:
            self.metrics.dropped += 1
            self.metrics.drops_by_reason[reason] = self.metrics.drops_by_reason.get(reason, 0) + 1
            self._per_flow[pkt.flow]["dropped"] += 1

    # -- event handlers ---------------------------------------------------

    def _on_traffic(self, i: int, size: float) -> None:
        f = self.spec.flows[i]
        self._pid += 1
        measured = self.now >= self.spec.warmup
        pkt = DataPacket(self._pid, i, f.source, f.destination, size, self.now, measured)
        if self.trace is not None:
            self._log(f"{TRAFFIC_GEN}\t{f.source}->{f.destination}\tpkt{pkt.id}\t{size:.9g}")
        self._in_network[pkt.id] = pkt
        if measured:
            self.metrics.injected += 1
            self._per_flow[i]["injected"] += 1
        self._forward(pkt, f.source)
        nxt = next(self._traffic[i], None)
        if nxt is not None:
            self._push(nxt[0], TRAFFIC_GEN, (i, nxt[1]))

    def _on_service(self, q: LinkQueue) -> None:
        pkt = q.fifo.popleft()
        if self.trace is not None:
            self._log(f"{SERVICE_COMPLETE}\t{q.src}->{q.dst}\tpkt{pkt.id}")
        if q.fifo:
            self._push(q.start_service(self.now, self.spec.service_rate), SERVICE_COMPLETE, q)
        else:
            q.go_idle(self.now)
        self._forward(pkt, q.dst)

    def _on_measure(self) -> None:
        measuring = self.now > self.spec.warmup
        for k in sorted(self.nodes):
            samples = {}
            for j in sorted(self.topology.neighbors(k)):
                q = self.queues[(k, j)]
                u = q.sample_utilization(self.now, self._last_util[(k, j)])
                self._last_util[(k, j)] = u
                samples[j] = u
                if measuring:
                    self.metrics.per_link_utilization[(k, j)].append(u)
            self._apply(k, self.nodes[k].set_utilizations(samples, self.now))
        nxt = self.now + self.timers.update_period
        if nxt <= self.spec.duration:
            self._push(nxt, MEASURE_TICK, None)

    def _on_warmup_end(self) -> None:
        self._busy_at_warmup = {k: q.busy_total(self.now) for k, q in self.queues.items()}
        self.metrics.min_forward_violations["warmup"] = len(self.min_forward_violations())

    # -- main loop --------------------------------------------------------

    def run(self) -> RunMetrics:
        spec = self.spec
        self._push(0.0, MEASURE_TICK, "start")
        self._push(spec.warmup, WARMUP_END, None)
        for i, gen in enumerate(self._traffic):
            first = next(gen, None)
            if first is not None:
                self._push(first[0], TRAFFIC_GEN, (i, first[1]))
        heap = self._heap
        check = self.check_enabled
        while heap and heap[0][0] <= spec.duration:
            t, seq, kind, payload = heapq.heappop(heap)
            self.now = t
            if kind == SERVICE_COMPLETE:
                self._on_service(payload)
                continue
            if kind == TRAFFIC_GEN:
                self._on_traffic(*payload)
                continue
            routing_changed = True
            if kind == CONTROL_DELIVER:
                src, dst, pkt = payload
                self._log(f"{CONTROL_DELIVER}\t{src}->{dst}\t{format_packet(pkt)}")
                self._apply(dst, self.nodes[dst].handle(pkt, t))
            elif kind == TIMER_FIRE:
                k, key, at = payload
                if self.nodes[k].timer_deadlines.get(key) != at:
                    continue
                self._log(f"{TIMER_FIRE}\t{k}\t{':'.join(map(str, key))}")
                self._apply(k, self.nodes[k].on_timer(key, t))
            elif kind == MEASURE_TICK:
                if payload == "start":
                    # sample utilization before the periodic announcements go out
                    self._push(t + self.timers.update_period, MEASURE_TICK, None)
                    for k in sorted(self.nodes):
                        self._apply(k, self.nodes[k].start(t))
                else:
                    self._log(MEASURE_TICK)
                    self._on_measure()
            elif kind == WARMUP_END:
                routing_changed = False
                self._on_warmup_end()
            if check and routing_changed:
                self.check_invariants()
        return self._finish()

    def _finish(self) -> RunMetrics:
        m = self.metrics
        end = self.spec.duration
        self.now = end
        for k, q in self.queues.items():
            busy = q.busy_total(end) - self._busy_at_warmup.get(k, 0.0)
            m.link_avg_utilization[k] = min(1.0, max(0.0, busy / m.sim_time))
        m.in_flight = sum(1 for p in self._in_network.values() if p.measured)
        m.per_flow = self._per_flow
        m.guard_rejections = sum(n.stats["guard_rejections"] for n in self.nodes.values())
        m.min_forward_violations["end"] = len(self.min_forward_violations())
        m.check()
        return m


def find_cycle(graph: Dict[NodeId, List[NodeId]]) -> Optional[List[NodeId]]:
    """Return one directed cycle as a node list, or None."""
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {k: WHITE for k in graph}
    parent: Dict[NodeId, NodeId] = {}
    for root in sorted(graph):
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(graph[root]))]
        colour[root] = GREY
        while stack:
            n, it = stack[-1]
            for m in it:
                if colour.get(m, WHITE) == GREY:
                    cycle = [m, n]
                    while cycle[-1] != m:
                        cycle.append(parent[cycle[-1]])
                    return list(reversed(cycle[1:]))
                if colour.get(m, WHITE) == WHITE:
                    colour[m] = GREY
                    parent[m] = n
                    stack.append((m, iter(graph.get(m, []))))
                    break
            else:
                colour[n] = BLACK
                stack.pop()
    return None


def run(topology: Topology, spec: TrafficSpec, mode: RoutingMode = RoutingMode(),
        timers: TimerConfig = TimerConfig(), trace: Optional[TextIO] = None) -> RunMetrics:
    return Simulation(topology, spec, mode, timers, trace).run()
