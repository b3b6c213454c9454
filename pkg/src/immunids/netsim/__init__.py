from .engine import run_simulation
from .routing import RoutingTable, apply_event
from .scenario import (DELAYING, DROPPING, MISBEHAVIOR_KINDS, NONE, WORMHOLE, ConfigError, Connection,
                       ConnectionsSpec, InfeasiblePlan, MisbehaviorPlan, ScenarioConfig,
                       connection_duration, generate_connections, plan_misbehavior)
from .topology import Topology, build_topology, line_topology
from .trace import (EVENT_KINDS, ConnectionInfo, EventTrace, SimulationStats, TraceParseError,
                    load_binary, read_trace, save_binary, write_trace)

__all__ = [
    "run_simulation", "RoutingTable", "apply_event", "DELAYING", "DROPPING", "MISBEHAVIOR_KINDS",
    "NONE", "WORMHOLE", "ConfigError", "Connection", "ConnectionsSpec", "InfeasiblePlan",
    "MisbehaviorPlan", "ScenarioConfig", "connection_duration", "generate_connections",
    "plan_misbehavior", "Topology", "build_topology", "line_topology", "EVENT_KINDS",
    "ConnectionInfo", "EventTrace", "SimulationStats", "TraceParseError", "read_trace", "write_trace",
    "load_binary", "save_binary",
]
