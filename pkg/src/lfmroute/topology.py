"""Static network graph: parsing, validation and queries.

Topology files are line oriented::

    # comment
    node 0
    node 1
    link 0 1 10e6

``node <id>`` declares a router; ids must form the dense range ``0..N-1``.
``link <a> <b> <capacity_bps>`` declares a bidirectional link whose capacity
applies to each direction independently. Every ``node`` line must come before
the first ``link`` line. Anything after ``#`` is ignored, as are blank lines.
Any other directive is a parse error.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple

import networkx as nx

NodeId = int


class TopologyError(Exception):
    """Base class for topology problems."""


class TopologyParseError(TopologyError):
    def __init__(self, lineno: int, line: str, reason: str):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line.strip()!r}")


class TopologyValidationError(TopologyError):
    pass


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    capacity: float

    @property
    def key(self) -> Tuple[NodeId, NodeId]:
        return (min(self.a, self.b), max(self.a, self.b))


@dataclass(frozen=True)
class Topology:
    nodes: FrozenSet[NodeId]
    links: Tuple[Link, ...]
    adjacency: Dict[NodeId, FrozenSet[NodeId]] = field(compare=False)
    _capacity: Dict[Tuple[NodeId, NodeId], float] = field(compare=False, repr=False)

    @classmethod
    def build(cls, nodes: Iterable[NodeId], links: Iterable[Link]) -> "Topology":
        """Validate and freeze a node/link collection."""
        nodes = frozenset(nodes)
        expected = set(range(len(nodes)))
        if nodes != expected:
            missing = sorted(expected - nodes)
            extra = sorted(nodes - expected)
            raise TopologyValidationError(
                f"node ids must be dense 0..{len(nodes) - 1}; missing {missing}, out of range {extra}"
            )
        adj: Dict[NodeId, set] = {n: set() for n in nodes}
        caps: Dict[Tuple[NodeId, NodeId], float] = {}
        ordered = []
        for link in links:
            if link.a == link.b:
                raise TopologyValidationError(f"self-loop on node {link.a}")
            for end in (link.a, link.b):
                if end not in nodes:
                    raise TopologyValidationError(f"link ({link.a},{link.b}) uses undeclared node {end}")
            if not link.capacity > 0:
                raise TopologyValidationError(
                    f"link ({link.a},{link.b}) has non-positive capacity {link.capacity}"
                )
            if link.key in caps:
                raise TopologyValidationError(f"duplicate link ({link.a},{link.b})")
            caps[link.key] = float(link.capacity)
            adj[link.a].add(link.b)
            adj[link.b].add(link.a)
            ordered.append(link)
        topo = cls(
            nodes=nodes,
            links=tuple(ordered),
            adjacency={n: frozenset(v) for n, v in adj.items()},
            _capacity=caps,
        )
        unreachable = topo.unreachable_from(0) if nodes else set()
        if unreachable:
            raise TopologyValidationError(
                f"disconnected graph: node {min(unreachable)} unreachable from node 0"
            )
        return topo

    def __len__(self) -> int:
        return len(self.nodes)

    def neighbors(self, k: NodeId) -> FrozenSet[NodeId]:
        try:
            return self.adjacency[k]
        except KeyError:
            raise KeyError(f"unknown node {k}") from None

    def link_capacity(self, k: NodeId, i: NodeId) -> float:
        try:
            return self._capacity[(min(k, i), max(k, i))]
        except KeyError:
            raise KeyError(f"no link ({k},{i})") from None

    def has_link(self, k: NodeId, i: NodeId) -> bool:
        return (min(k, i), max(k, i)) in self._capacity

    def directed_links(self) -> List[Tuple[NodeId, NodeId]]:
        """Every (from, to) channel, sorted."""
        out = []
        for link in self.links:
            out.append((link.a, link.b))
            out.append((link.b, link.a))
        return sorted(out)

    def unreachable_from(self, start: NodeId) -> set:
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            for m in self.adjacency[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return set(self.nodes) - seen

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(self.nodes))
        for link in self.links:
            g.add_edge(link.a, link.b, capacity=link.capacity)
        return g

    def disjoint_path_count(self, s: NodeId, t: NodeId) -> int:
        """Maximum number of internally node-disjoint s-t paths."""
        if s == t:
            raise ValueError("source and target must differ")
        g = self.to_networkx()
        if g.has_edge(s, t):
            # node_connectivity is undefined across a direct edge; count it separately
            g.remove_edge(s, t)
            return 1 + nx.node_connectivity(g, s, t)
        return nx.node_connectivity(g, s, t)

    def to_text(self) -> str:
        lines = [f"node {n}" for n in sorted(self.nodes)]
        lines += [f"link {l.a} {l.b} {l.capacity:g}" for l in self.links]
        return "\n".join(lines) + "\n"


def neighbors(t: Topology, k: NodeId) -> FrozenSet[NodeId]:
    return t.neighbors(k)


def link_capacity(t: Topology, k: NodeId, i: NodeId) -> float:
    return t.link_capacity(k, i)


def _parse_int(tok: str, lineno: int, line: str, what: str) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise TopologyParseError(lineno, line, f"{what} must be an integer") from None
    if value < 0:
        raise TopologyParseError(lineno, line, f"{what} must be non-negative")
    return value


def _lines(source: str) -> Iterator[Tuple[int, str, List[str]]]:
    for lineno, raw in enumerate(source.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if toks:
            yield lineno, raw, toks


def load_topology(source: str) -> Topology:
    """Parse and validate topology file content."""
    nodes: List[NodeId] = []
    seen_nodes = set()
    links: List[Link] = []
    for lineno, raw, toks in _lines(source):
        directive = toks[0]
        if directive == "node":
            if len(toks) != 2:
                raise TopologyParseError(lineno, raw, "expected 'node <id>'")
            if links:
                raise TopologyParseError(lineno, raw, "node declared after first link")
            n = _parse_int(toks[1], lineno, raw, "node id")
            if n in seen_nodes:
                raise TopologyValidationError(f"duplicate node {n} (line {lineno})")
            seen_nodes.add(n)
            nodes.append(n)
        elif directive == "link":
            if len(toks) != 4:
                raise TopologyParseError(lineno, raw, "expected 'link <a> <b> <capacity_bps>'")
            a = _parse_int(toks[1], lineno, raw, "link endpoint")
            b = _parse_int(toks[2], lineno, raw, "link endpoint")
            try:
                cap = float(toks[3])
            except ValueError:
                raise TopologyParseError(lineno, raw, "capacity must be a number") from None
            links.append(Link(a, b, cap))
        else:
            raise TopologyParseError(lineno, raw, f"unknown directive {directive!r}")
    if not nodes:
        raise TopologyValidationError("topology declares no nodes")
    return Topology.build(nodes, links)


def load_topology_file(path) -> Topology:
    return load_topology(Path(path).read_text())


DEFAULT_TOPOLOGY = "network1.topo"
MEASUREMENT_PAIR = (0, 2)


def default_topology() -> Topology:
    """The shipped 8-node, 12-link default network."""
    return load_topology(default_topology_text())


def default_topology_text() -> str:
    return resources.files("lfmroute.data").joinpath(DEFAULT_TOPOLOGY).read_text()


def resolve_topology(spec: str, base: Optional[Path] = None) -> Topology:
    """Load ``builtin:network1`` or a path (relative to ``base``)."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        text = resources.files("lfmroute.data").joinpath(f"{name}.topo").read_text()
        return load_topology(text)
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    return load_topology_file(path)


def path_graph(n: int, capacity: float = 10e6) -> Topology:
    return Topology.build(range(n), [Link(i, i + 1, capacity) for i in range(n - 1)])


def random_topology(n: int, rng: random.Random, extra_links: Optional[int] = None,
                    max_capacity: float = 10e6) -> Topology:
    """Random connected graph: a random spanning tree plus extra chords."""
    order = list(range(n))
    rng.shuffle(order)
    pairs = set()
    for idx in range(1, n):
        a = order[idx]
        b = order[rng.randrange(idx)]
        pairs.add((min(a, b), max(a, b)))
    all_pairs = [p for p in itertools.combinations(range(n), 2) if p not in pairs]
    if extra_links is None:
        extra_links = rng.randint(0, min(len(all_pairs), n))
    pairs.update(rng.sample(all_pairs, min(extra_links, len(all_pairs))))
    levels = [max_capacity * f for f in (0.2, 0.5, 1.0)]
    links = [Link(a, b, rng.choice(levels)) for a, b in sorted(pairs)]
    return Topology.build(range(n), links)
