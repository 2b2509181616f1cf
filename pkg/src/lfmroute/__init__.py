"""Loop-free multipath routing with capacity-proportional traffic splitting.

A discrete-event simulator for a distance-vector protocol that keeps, per
destination, a forward set of next hops whose union is acyclic, and splits
traffic over it in proportion to the spare capacity reachable through each
hop. Single-path and equal-cost baselines run on the same control plane.
"""

from .forwarding import Mode, RoutingMode, SplitTable, select_next_hop, split_table
from .metrics import RunMetrics, average_delay, average_utilization, throughput
from .protocol import NodeState, TimerConfig, init_node
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulator import Flow, InvariantViolation, Simulation, SizeLaw, TrafficSpec, run
from .topology import Topology, default_topology, load_topology, load_topology_file

__version__ = "0.1.0"

__all__ = [
    "Flow", "InvariantViolation", "Mode", "NodeState", "RoutingMode", "RunMetrics",
    "Scenario", "ScenarioError", "Simulation", "SizeLaw", "SplitTable", "TimerConfig",
    "Topology", "TrafficSpec", "average_delay", "average_utilization", "default_topology",
    "init_node", "load_scenario", "load_topology", "load_topology_file", "parse_scenario",
    "run", "select_next_hop", "split_table", "throughput",
]
