"""Inducing target flows in selfish routing games from equilibrium queries.

The hidden game sits behind a counted oracle; algorithms see only the graph,
the commodities and the oracle's responses.
"""

from .core import Commodity, DirectedGraph, Flow, Network, RoutingGame, validate_flow
from .equilibrium import solve_epsilon_equilibrium, total_slack
from .latency import PolyLatency, StandardnessParams, check_standard
from .oracle import AdversaryOracle, StackelbergOracle, TollOracle

__all__ = [
    "AdversaryOracle",
    "Commodity",
    "DirectedGraph",
    "Flow",
    "Network",
    "PolyLatency",
    "RoutingGame",
    "StackelbergOracle",
    "StandardnessParams",
    "TollOracle",
    "check_standard",
    "solve_epsilon_equilibrium",
    "total_slack",
    "validate_flow",
]

__version__ = "0.1.0"
