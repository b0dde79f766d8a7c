"""Joint scheduling of mobile storage fleets and microgrid dispatch for
outage load restoration, trained with a twin-critic deterministic
policy-gradient agent on a simulated road/power test system."""

from .config import (ConfigError, ScenarioConfig, TD3Hyper, load_scenario,
                     resolve_scenario)
from .env import Action, RestorationEnv, RewardBreakdown
from .td3 import ReplayBuffer, TD3Agent, Transition
from .transport import AtNode, OnEdge, TransportNetwork, load_network

__version__ = "0.1.0"

__all__ = [
    "Action", "AtNode", "ConfigError", "OnEdge", "ReplayBuffer",
    "RestorationEnv", "RewardBreakdown", "ScenarioConfig", "TD3Agent",
    "TD3Hyper", "Transition", "TransportNetwork", "load_network",
    "load_scenario", "resolve_scenario",
]
