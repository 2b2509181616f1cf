"""Quiet-network fixed point: with no traffic every announced capacity must
settle to the value a brute-force recursion over the final forward sets gives."""

import functools
import random

import pytest

from lfmroute.protocol import TimerConfig
from lfmroute.simulator import Simulation, TrafficSpec
from lfmroute.topology import path_graph, random_topology

from conftest import TRIANGLE
from lfmroute.topology import load_topology


def oracle_capacities(topo, forward):
    """C[k][d] by recursion over the forward DAG, links idle."""

    @functools.lru_cache(maxsize=None)
    def total(k, d):
        if k == d:
            return float("inf")
        return sum(share(k, i, d) for i in forward[d][k])

    @functools.lru_cache(maxsize=None)
    def share(k, i, d):
        link = topo.link_capacity(k, i)
        if i == d:
            return link
        return min(link, announced(i, k, d))

    def announced(i, k, d):
        if k in forward[d][i]:
            return total(i, d) - share(i, k, d)
        return total(i, d)

    return {(k, d): total(k, d) for d in topo.nodes for k in topo.nodes if k != d}


def quiet_run(topo, seconds=240.0):
    spec = TrafficSpec(flows=(), duration=seconds, warmup=10.0, seed=1)
    sim = Simulation(topo, spec, timers=TimerConfig().fast())
    sim.run()
    return sim


def topologies():
    rng = random.Random(2024)
    out = [("triangle", load_topology(TRIANGLE)), ("path4", path_graph(4))]
    for i in range(6):
        n = rng.randint(3, 5)
        out.append((f"random{i}", random_topology(n, rng)))
    return out


@pytest.mark.parametrize("name, topo", topologies(), ids=[n for n, _ in topologies()])
def test_quiet_network_matches_fixed_point(name, topo):
    sim = quiet_run(topo)
    forward = {d: {k: sorted(sim.nodes[k].forward_set(d)) for k in topo.nodes} for d in topo.nodes}
    expected = oracle_capacities(topo, forward)
    for (k, d), c in expected.items():
        got = sim.nodes[k].main_table[d].total_capacity
        assert got == pytest.approx(c, rel=1e-9), (k, d)
        assert forward[d][k], f"router {k} lost its route to {d}"


@pytest.mark.parametrize("name, topo", topologies()[:4], ids=[n for n, _ in topologies()[:4]])
def test_quiet_network_stops_moving(name, topo):
    a, b = quiet_run(topo, 240.0), quiet_run(topo, 480.0)
    for d in topo.nodes:
        assert a.forward_graph(d) == b.forward_graph(d)
