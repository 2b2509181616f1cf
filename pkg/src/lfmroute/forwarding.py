"""Next-hop selection over a router's forward set.

MP draws each packet's next hop with probability proportional to the capacity
reachable through it. SP always takes the best successor. ECMP spreads packets
uniformly over the successors tied for best nominal capacity.
"""

from __future__ import annotations

import bisect
import enum
import random
from dataclasses import dataclass
from typing import List, Tuple

from .protocol import DestinationEntry, NodeId


class Mode(enum.Enum):
    MP = "mp"
    SP = "sp"
    ECMP = "ecmp"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown routing mode {text!r} (expected mp, sp or ecmp)") from None


@dataclass(frozen=True)
class RoutingMode:
    mode: Mode = Mode.MP
    ecmp_tolerance: float = 1e-6

    def __str__(self) -> str:
        return self.mode.value


@dataclass(frozen=True)
class SplitTable:
    destination: NodeId
    entries: Tuple[Tuple[NodeId, float], ...]
    capacities: Tuple[float, ...]
    nominal: Tuple[float, ...] = ()

    @property
    def next_hops(self) -> List[NodeId]:
        return [hop for hop, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def split_table(entry: DestinationEntry) -> SplitTable:
    """Split ratios: each forward neighbour's capacity over the total.

    With zero total capacity the ratios are all zero; selection then falls
    back to the capacity-free rule in :func:`select_next_hop`.
    """
    hops = sorted(entry.forward_set)
    caps = tuple(entry.per_forward_capacity.get(h, 0.0) for h in hops)
    total = sum(caps)
    if total > 0:
        ratios = [c / total for c in caps]
    else:
        ratios = [0.0] * len(hops)
    nominal = tuple(entry.per_forward_nominal.get(h, 0.0) for h in hops)
    return SplitTable(entry.destination, tuple(zip(hops, ratios)), caps, nominal)


def _best(table: SplitTable) -> NodeId:
    best_hop, best_cap = None, -1.0
    for (hop, _), cap in zip(table.entries, table.capacities):
        if cap > best_cap:  # entries sorted by id, so ties keep the lowest
            best_hop, best_cap = hop, cap
    return best_hop


def select_next_hop(table: SplitTable, mode: RoutingMode, rng: random.Random) -> NodeId:
    """Pick the next hop for one packet.

    ECMP compares successors on nominal (idle-network) capacity, the analogue
    of a static link-cost metric; a table built without nominal values falls
    back to the live capacities.
    """
    if not table.entries:
        raise ValueError(f"empty forward set for destination {table.destination}")
    if len(table.entries) == 1:
        return table.entries[0][0]
    if mode.mode is Mode.SP:
        return _best(table)
    if mode.mode is Mode.ECMP:
        costs = table.nominal or table.capacities
        top = max(costs)
        if top <= 0:
            return table.entries[0][0]
        tied = [hop for (hop, _), c in zip(table.entries, costs)
                if c >= top * (1.0 - mode.ecmp_tolerance)]
        if len(tied) == 1:
            return tied[0]
        return tied[rng.randrange(len(tied))]
    if max(table.capacities) <= 0:
        return _best(table)
    cumulative = []
    acc = 0.0
    for _, ratio in table.entries:
        acc += ratio
        cumulative.append(acc)
    x = rng.random() * acc
    idx = bisect.bisect_right(cumulative, x)
    # x can land on the rounding tail of the last bucket
    idx = min(idx, len(cumulative) - 1)
    while table.entries[idx][1] == 0.0:
        idx -= 1
    return table.entries[idx][0]
