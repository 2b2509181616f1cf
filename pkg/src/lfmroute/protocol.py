"""Per-router state machine for loop-free multipath routing.

Each router keeps, per destination, a *forward set* of neighbours it may send
traffic to; every other neighbour is implicitly in the backward set. Routers
exchange available-capacity announcements and grow their forward sets through
a request/response handshake in which the requested neighbour gives up the
opposite edge, so the per-destination forwarding graph stays acyclic.

Handlers never look at a clock. They receive ``now`` from the caller, mutate
the :class:`NodeState` and return a list of effects (:class:`Send` and
:class:`Schedule`) for the driver to carry out.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Set, Tuple, Union

log = logging.getLogger(__name__)

NodeId = int
TimerKey = Tuple

BACKWARD = "B"
FORWARD = "F"
ACCEPT = "accept"
REJECT = "reject"

# capacity the destination advertises for itself; adjacent routers use the
# direct-link branch of the path capacity instead
SENTINEL = math.inf


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class TimerConfig:
    hello_period: float = 15.0
    update_period: float = 30.0
    neighbor_remove_multiplier: float = 3.0
    timeout_multiplier: float = 5.0
    move_timeout: float = 30.0
    k_threshold: float = 0.1
    acceptance_floor: float = 0.9

    def __post_init__(self):
        for name in ("hello_period", "update_period", "move_timeout"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 2 <= self.neighbor_remove_multiplier <= 4:
            raise ValueError("neighbor_remove_multiplier must lie in [2, 4]")
        if not 5 <= self.timeout_multiplier <= 6:
            raise ValueError("timeout_multiplier must lie in [5, 6]")
        if not 0 < self.k_threshold < 1:
            raise ValueError("k_threshold must lie in (0, 1)")
        if not 0 <= self.acceptance_floor <= 1:
            raise ValueError("acceptance_floor must lie in [0, 1]")

    @property
    def neighbor_remove_interval(self) -> float:
        return self.neighbor_remove_multiplier * self.hello_period

    @property
    def timeout_interval(self) -> float:
        return self.timeout_multiplier * self.update_period

    def fast(self) -> "TimerConfig":
        """Same ratios, every timer constant divided by ten."""
        return replace(
            self,
            hello_period=self.hello_period / 10,
            update_period=self.update_period / 10,
            move_timeout=self.move_timeout / 10,
        )


# --- packets -----------------------------------------------------------------


@dataclass(frozen=True)
class Hello:
    sender: NodeId
    link_capacity_hint: Optional[float] = None
    ack: bool = False


class UpdateEntry(NamedTuple):
    destination: NodeId
    capacity: float
    tag: str
    # the same announcement computed as if every link were idle
    nominal: float = 0.0


@dataclass(frozen=True)
class NeighborUpdate:
    sender: NodeId
    entries: Tuple[UpdateEntry, ...]


@dataclass(frozen=True)
class ForwardMoveRequest:
    sender: NodeId
    destination: NodeId
    request_id: int
    # capacity the requester expects to gain through the responder
    gain: float = 0.0


@dataclass(frozen=True)
class ForwardMoveResponse:
    sender: NodeId
    destination: NodeId
    request_id: int
    verdict: str


ControlPacket = Union[Hello, NeighborUpdate, ForwardMoveRequest, ForwardMoveResponse]


def _num(x: Optional[float]) -> str:
    if x is None:
        return "-"
    return "inf" if math.isinf(x) else f"{x:.9g}"


def format_packet(pkt: ControlPacket) -> str:
    """Canonical one-line, tab-separated rendering used in traces."""
    if isinstance(pkt, Hello):
        return "\t".join(["Hello", str(pkt.sender), _num(pkt.link_capacity_hint), "ack" if pkt.ack else "req"])
    if isinstance(pkt, NeighborUpdate):
        body = ",".join(f"{e.destination}:{_num(e.capacity)}:{e.tag}:{_num(e.nominal)}"
                        for e in pkt.entries)
        return "\t".join(["NeighborUpdate", str(pkt.sender), body])
    if isinstance(pkt, ForwardMoveRequest):
        return "\t".join(["ForwardMoveRequest", str(pkt.sender), str(pkt.destination),
                          str(pkt.request_id), _num(pkt.gain)])
    if isinstance(pkt, ForwardMoveResponse):
        return "\t".join(["ForwardMoveResponse", str(pkt.sender), str(pkt.destination),
                          str(pkt.request_id), pkt.verdict])
    raise TypeError(f"not a control packet: {pkt!r}")


# --- effects -----------------------------------------------------------------


class Send(NamedTuple):
    to: NodeId
    packet: ControlPacket


class Schedule(NamedTuple):
    key: TimerKey
    at: float


Effect = Union[Send, Schedule]


# --- tables ------------------------------------------------------------------


@dataclass
class NeighborEntry:
    neighbor: NodeId
    link_capacity: float
    utilization: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.utilization <= 1.0:
            raise ValueError(f"utilization {self.utilization} outside [0, 1]")


@dataclass
class DestinationEntry:
    destination: NodeId
    forward_set: Set[NodeId] = field(default_factory=set)
    per_forward_capacity: Dict[NodeId, float] = field(default_factory=dict)
    total_capacity: float = 0.0
    learned_backward_capacity: Dict[NodeId, float] = field(default_factory=dict)
    learned_forward_capacity: Dict[NodeId, float] = field(default_factory=dict)
    learned_nominal: Dict[NodeId, float] = field(default_factory=dict)
    per_forward_nominal: Dict[NodeId, float] = field(default_factory=dict)
    nominal_total: float = 0.0


@dataclass
class PendingMove:
    request_id: int
    deadline: float
    gain: float


def utilization_from_busy_time(busy: float, window: float) -> float:
    if window <= 0:
        raise ValueError("observation window must be positive")
    return min(1.0, max(0.0, busy / window))


def available_capacity(u: float, c: float) -> float:
    return (1.0 - u) * c


class NodeState:
    """Routing tables and handshake state of one router."""

    def __init__(self, self_id: NodeId, capacities: Dict[NodeId, float],
                 config: TimerConfig = TimerConfig(),
                 cycle_guard: Optional[Callable[[NodeId, NodeId, NodeId], bool]] = None):
        self.self_id = self_id
        self.config = config
        self.cycle_guard = cycle_guard
        self.neighbor_table: Dict[NodeId, NeighborEntry] = {
            j: NeighborEntry(j, float(c)) for j, c in sorted(capacities.items())
        }
        self.main_table: Dict[NodeId, DestinationEntry] = {}
        self.pending_moves: Dict[Tuple[NodeId, NodeId], PendingMove] = {}
        # (d, l) -> time before which a rejected request is not repeated
        self.move_backoff: Dict[Tuple[NodeId, NodeId], float] = {}
        # bumped on every forward-set change so observers can skip rescans
        self.routing_version = 0
        self.timer_deadlines: Dict[TimerKey, float] = {}
        self.stats = {"ignored_updates": 0, "guard_rejections": 0, "requests_sent": 0,
                      "accepted": 0, "rejected": 0, "commits": 0}
        self._next_request_id = 0
        self._dirty = False
        for j in self.neighbor_table:
            self._adopt_adjacent_destination(j)

    # -- queries ----------------------------------------------------------

    def neighbors(self) -> List[NodeId]:
        return sorted(self.neighbor_table)

    def entry(self, d: NodeId) -> DestinationEntry:
        if d not in self.main_table:
            self.main_table[d] = DestinationEntry(d)
        return self.main_table[d]

    def forward_set(self, d: NodeId) -> Set[NodeId]:
        e = self.main_table.get(d)
        return set(e.forward_set) if e else set()

    def backward_set(self, d: NodeId) -> Set[NodeId]:
        return set(self.neighbor_table) - self.forward_set(d)

    def available(self, j: NodeId) -> float:
        n = self.neighbor_table[j]
        return available_capacity(n.utilization, n.link_capacity)

    def path_capacity(self, i: NodeId, d: NodeId) -> float:
        """Capacity from this router to ``d`` through neighbour ``i``."""
        if i not in self.neighbor_table:
            raise ProtocolError(f"node {self.self_id}: {i} is not a neighbour")
        avail = self.available(i)
        if i == d:
            return avail
        e = self.main_table.get(d)
        learned = e.learned_backward_capacity.get(i, 0.0) if e else 0.0
        return min(avail, learned)

    def nominal_path_capacity(self, i: NodeId, d: NodeId) -> float:
        """Path capacity through ``i`` with every link taken as idle."""
        cap = self.neighbor_table[i].link_capacity
        if i == d:
            return cap
        e = self.main_table.get(d)
        return min(cap, e.learned_nominal.get(i, 0.0) if e else 0.0)

    def total_capacity(self, d: NodeId) -> float:
        e = self.entry(d)
        return sum(self.path_capacity(i, d) for i in e.forward_set)

    # -- table maintenance ------------------------------------------------

    def _adopt_adjacent_destination(self, j: NodeId) -> None:
        e = self.entry(j)
        e.forward_set.add(j)
        self.routing_version += 1
        self._recompute(j)

    def _recompute(self, d: NodeId) -> bool:
        e = self.entry(d)
        per = {i: self.path_capacity(i, d) for i in sorted(e.forward_set)}
        total = sum(per.values())
        nominal = {i: self.nominal_path_capacity(i, d) for i in sorted(e.forward_set)}
        changed = (per != e.per_forward_capacity or total != e.total_capacity
                   or nominal != e.per_forward_nominal)
        e.per_forward_capacity = per
        e.total_capacity = total
        e.per_forward_nominal = nominal
        e.nominal_total = sum(nominal.values())
        if changed:
            self._dirty = True
        return changed

    def _recompute_all(self) -> None:
        for d in sorted(self.main_table):
            self._recompute(d)

    def _fresh_id(self) -> int:
        self._next_request_id += 1
        return self._next_request_id

    def _schedule(self, key: TimerKey, at: float, effects: List[Effect]) -> None:
        self.timer_deadlines[key] = at
        effects.append(Schedule(key, at))

    def _flush(self, effects: List[Effect]) -> List[Effect]:
        if self._dirty:
            self._dirty = False
            for j in self.neighbors():
                effects.append(Send(j, self.build_neighbor_update(j)))
        return effects

    # -- announcements ----------------------------------------------------

    def build_neighbor_update(self, recipient: NodeId) -> NeighborUpdate:
        entries = []
        for d in sorted(self.main_table):
            e = self.main_table[d]
            if recipient in e.forward_set:
                value = max(0.0, e.total_capacity - e.per_forward_capacity[recipient])
                nominal = max(0.0, e.nominal_total - e.per_forward_nominal[recipient])
                entries.append(UpdateEntry(d, value, FORWARD, nominal))
            else:
                entries.append(UpdateEntry(d, e.total_capacity, BACKWARD, e.nominal_total))
        entries.append(UpdateEntry(self.self_id, SENTINEL, BACKWARD, SENTINEL))
        entries.sort()
        return NeighborUpdate(self.self_id, tuple(entries))

    # -- move decisions ---------------------------------------------------

    def _move_term(self, l: NodeId, d: NodeId) -> float:
        """min(announced capacity via l, available capacity of link to l)."""
        e = self.entry(d)
        total = e.total_capacity
        if l in e.learned_forward_capacity:
            value = e.learned_forward_capacity[l]
        elif total == 0 and l in e.learned_backward_capacity:
            # bootstrap: with nothing to lose, a plain backward announcement is enough
            value = e.learned_backward_capacity[l]
        else:
            return 0.0
        return min(value, self.available(l))

    def evaluate_move_condition(self, l: NodeId, d: NodeId) -> bool:
        if l not in self.neighbor_table:
            raise ProtocolError(f"node {self.self_id}: {l} is not a neighbour")
        e = self.entry(d)
        if l in e.forward_set:
            raise ProtocolError(f"node {self.self_id}: {l} already forward for {d}")
        term = self._move_term(l, d)
        if e.total_capacity == 0:
            return term > 0
        return term > self.config.k_threshold * e.total_capacity

    def _scan_moves(self, d: NodeId, now: float, effects: List[Effect]) -> None:
        if d == self.self_id:
            return
        e = self.entry(d)
        for l in self.neighbors():
            if l in e.forward_set or (d, l) in self.pending_moves:
                continue
            if self.move_backoff.get((d, l), -math.inf) > now:
                continue
            if self.evaluate_move_condition(l, d):
                self._send_request(d, l, self._move_term(l, d), now, effects)

    def _send_request(self, d: NodeId, l: NodeId, gain: float, now: float,
                      effects: List[Effect]) -> None:
        rid = self._fresh_id()
        deadline = now + self.config.move_timeout
        self.pending_moves[(d, l)] = PendingMove(rid, deadline, gain)
        self.stats["requests_sent"] += 1
        effects.append(Send(l, ForwardMoveRequest(self.self_id, d, rid, gain)))
        self._schedule(("move", d, l), deadline, effects)

    # -- lifecycle --------------------------------------------------------

    def start(self, now: float) -> List[Effect]:
        """Initial Hello and announcement round, and periodic timers."""
        effects: List[Effect] = []
        for j in self.neighbors():
            effects.append(Send(j, Hello(self.self_id, self.neighbor_table[j].link_capacity)))
        self._dirty = True
        self._flush(effects)
        self._schedule(("hello",), now + self.config.hello_period, effects)
        self._schedule(("update",), now + self.config.update_period, effects)
        for j in self.neighbors():
            self._schedule(("remove", j), now + self.config.neighbor_remove_interval, effects)
            self._schedule(("timeout", j), now + self.config.timeout_interval, effects)
        return effects

    def set_utilization(self, j: NodeId, u: float, now: float) -> List[Effect]:
        return self.set_utilizations({j: u}, now)

    def set_utilizations(self, samples: Dict[NodeId, float], now: float) -> List[Effect]:
        """Install fresh per-link utilization samples, then re-announce once."""
        effects: List[Effect] = []
        for j, u in samples.items():
            if not 0.0 <= u <= 1.0:
                raise ValueError(f"utilization {u} outside [0, 1]")
            if j in self.neighbor_table:
                self.neighbor_table[j].utilization = u
        self._recompute_all()
        for d in sorted(self.main_table):
            self._scan_moves(d, now, effects)
        return self._flush(effects)

    # -- packet handlers --------------------------------------------------

    def handle(self, pkt: ControlPacket, now: float) -> List[Effect]:
        if isinstance(pkt, Hello):
            return self.handle_hello(pkt, now)
        if isinstance(pkt, NeighborUpdate):
            return self.handle_neighbor_update(pkt, now)
        if isinstance(pkt, ForwardMoveRequest):
            return self.handle_move_request(pkt, now)
        if isinstance(pkt, ForwardMoveResponse):
            return self.handle_move_response(pkt, now)
        raise TypeError(f"not a control packet: {pkt!r}")

    def handle_hello(self, pkt: Hello, now: float) -> List[Effect]:
        effects: List[Effect] = []
        j = pkt.sender
        if j not in self.neighbor_table:
            if pkt.link_capacity_hint is None:
                log.debug("node %d: hello from unknown %d without capacity", self.self_id, j)
                return effects
            self.neighbor_table[j] = NeighborEntry(j, float(pkt.link_capacity_hint))
            self._adopt_adjacent_destination(j)
            self._schedule(("timeout", j), now + self.config.timeout_interval, effects)
        elif pkt.link_capacity_hint is not None and pkt.link_capacity_hint != self.neighbor_table[j].link_capacity:
            self.neighbor_table[j].link_capacity = float(pkt.link_capacity_hint)
            self._recompute_all()
        self._schedule(("remove", j), now + self.config.neighbor_remove_interval, effects)
        if not pkt.ack:
            hint = self.neighbor_table[j].link_capacity
            effects.append(Send(j, Hello(self.self_id, hint, ack=True)))
        return self._flush(effects)

    def handle_neighbor_update(self, pkt: NeighborUpdate, now: float) -> List[Effect]:
        effects: List[Effect] = []
        j = pkt.sender
        if j not in self.neighbor_table:
            self.stats["ignored_updates"] += 1
            log.debug("node %d: update from non-neighbour %d ignored", self.self_id, j)
            return effects
        self._schedule(("timeout", j), now + self.config.timeout_interval, effects)
        for d, value, tag, nominal in pkt.entries:
            if d == self.self_id:
                continue
            e = self.entry(d)
            e.learned_nominal[j] = nominal
            if tag == FORWARD:
                e.learned_forward_capacity[j] = value
                e.learned_backward_capacity.pop(j, None)
            else:
                e.learned_backward_capacity[j] = value
                e.learned_forward_capacity.pop(j, None)
            self._recompute(d)
        for d in sorted(self.main_table):
            self._scan_moves(d, now, effects)
        return self._flush(effects)

    def handle_move_request(self, pkt: ForwardMoveRequest, now: float) -> List[Effect]:
        effects: List[Effect] = []
        s, d = pkt.sender, pkt.destination
        verdict = self._judge_request(s, d, pkt.gain)
        if verdict == ACCEPT:
            self.stats["accepted"] += 1
            e = self.entry(d)
            if s in e.forward_set:
                e.forward_set.discard(s)
                self.routing_version += 1
                self._recompute(d)
                self._dirty = True
        else:
            self.stats["rejected"] += 1
        effects.append(Send(s, ForwardMoveResponse(self.self_id, d, pkt.request_id, verdict)))
        if verdict == ACCEPT:
            self._scan_moves(d, now, effects)
        return self._flush(effects)

    def _judge_request(self, s: NodeId, d: NodeId, gain: float) -> str:
        if s not in self.neighbor_table:
            return REJECT
        if d == self.self_id:
            return ACCEPT
        if (d, s) in self.pending_moves and self.self_id < s:
            # both sides asked each other; the lower id keeps its request
            return REJECT
        e = self.entry(d)
        current = e.total_capacity
        if s in e.forward_set:
            remaining = e.forward_set - {s}
            loss = e.per_forward_capacity.get(s, 0.0)
        else:
            remaining = e.forward_set
            loss = 0.0
        if not remaining:
            return REJECT
        if current - loss < self.config.acceptance_floor * current:
            return REJECT
        if s in e.forward_set:
            # a path that is only busy because we load it still counts at idle value
            nominal_loss = e.per_forward_nominal.get(s, 0.0)
            if e.nominal_total - nominal_loss < self.config.acceptance_floor * e.nominal_total:
                return REJECT
        # the requester must gain clearly more than we lose; without the
        # margin two routers hand the same edge back and forth on noise
        if not gain - loss > self.config.k_threshold * current:
            return REJECT
        return ACCEPT

    def handle_move_response(self, pkt: ForwardMoveResponse, now: float) -> List[Effect]:
        effects: List[Effect] = []
        s, d = pkt.sender, pkt.destination
        pending = self.pending_moves.get((d, s))
        if pending is None or pending.request_id != pkt.request_id:
            return effects
        del self.pending_moves[(d, s)]
        self.timer_deadlines.pop(("move", d, s), None)
        if pkt.verdict != ACCEPT:
            self.move_backoff[(d, s)] = now + self.config.move_timeout
            return effects
        e = self.entry(d)
        if s in e.forward_set or s not in self.neighbor_table:
            return effects
        if self.cycle_guard is not None and self.cycle_guard(self.self_id, s, d):
            self.stats["guard_rejections"] += 1
            log.info("node %d: cycle guard refused %d as forward for %d", self.self_id, s, d)
            return effects
        e.forward_set.add(s)
        self.routing_version += 1
        if s in e.learned_forward_capacity:
            # after giving us up, s keeps exactly what it announced to us
            e.learned_backward_capacity[s] = e.learned_forward_capacity.pop(s)
        self.stats["commits"] += 1
        self._recompute(d)
        self._dirty = True
        self._scan_moves(d, now, effects)
        return self._flush(effects)

    # -- timers -----------------------------------------------------------

    def on_timer(self, key: TimerKey, now: float) -> List[Effect]:
        if self.timer_deadlines.get(key) != now:
            return []  # superseded
        del self.timer_deadlines[key]
        effects: List[Effect] = []
        kind = key[0]
        if kind == "hello":
            for j in self.neighbors():
                effects.append(Send(j, Hello(self.self_id, self.neighbor_table[j].link_capacity)))
            self._schedule(("hello",), now + self.config.hello_period, effects)
        elif kind == "update":
            for j in self.neighbors():
                effects.append(Send(j, self.build_neighbor_update(j)))
            self._schedule(("update",), now + self.config.update_period, effects)
        elif kind == "remove":
            self._remove_neighbor(key[1])
        elif kind == "timeout":
            j = key[1]
            for e in self.main_table.values():
                e.learned_forward_capacity.pop(j, None)
                if j != e.destination:
                    e.learned_backward_capacity[j] = 0.0
                    e.learned_nominal[j] = 0.0
            self._recompute_all()
        elif kind == "move":
            _, d, l = key
            if (d, l) in self.pending_moves:
                old = self.pending_moves.pop((d, l))
                self._send_request(d, l, old.gain, now, effects)
        else:
            raise ProtocolError(f"unknown timer {key!r}")
        for d in sorted(self.main_table):
            self._scan_moves(d, now, effects)
        return self._flush(effects)

    def _remove_neighbor(self, j: NodeId) -> None:
        self.neighbor_table.pop(j, None)
        for e in self.main_table.values():
            if j in e.forward_set:
                e.forward_set.discard(j)
                self.routing_version += 1
            e.learned_backward_capacity.pop(j, None)
            e.learned_forward_capacity.pop(j, None)
            e.learned_nominal.pop(j, None)
        for key in [k for k in self.pending_moves if k[1] == j]:
            del self.pending_moves[key]
            self.timer_deadlines.pop(("move",) + key, None)
        self.timer_deadlines.pop(("timeout", j), None)
        self._recompute_all()
        self._dirty = True


def init_node(self_id: NodeId, neighbors, capacities: Dict[NodeId, float],
              config: TimerConfig = TimerConfig(), cycle_guard=None) -> NodeState:
    missing = set(neighbors) - set(capacities)
    if missing:
        raise ValueError(f"no capacity for neighbours {sorted(missing)}")
    return NodeState(self_id, {j: capacities[j] for j in neighbors}, config, cycle_guard)
