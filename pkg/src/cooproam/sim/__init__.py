"""Discrete-event simulation of cooperative roaming scenarios."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .core import RunReport, Simulator, UnknownStream, run, session_redirect
from .events import EventQueue, SimEvent
from .medium import Topology, medium_visibility, multicast_scope, subnet_hops

__all__ = [
    "ConfigError", "EventQueue", "RunReport", "ScenarioConfig", "SimEvent", "Simulator", "Topology",
    "UnknownStream", "load_config", "medium_visibility", "multicast_scope", "parse_config", "run",
    "session_redirect", "subnet_hops",
]
