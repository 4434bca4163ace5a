"""Tabular average-reward RL laboratory built around KL-UCRL."""
from .agents import AgentConfig, CountsTable, KlUcrlAgent, OptimisticPlan, OracleAgent, Ucrl2Agent
from .envs import RiverSwimConfig, TwoStateHardConfig, make_ergodic_riverswim, make_two_state_hard
from .mdp_core import GainBias, MdpProfile, StationaryPolicy, TabularMdp, mdp_profile

__all__ = [
    "AgentConfig", "CountsTable", "GainBias", "KlUcrlAgent", "MdpProfile", "OptimisticPlan",
    "OracleAgent", "RiverSwimConfig", "StationaryPolicy", "TabularMdp", "TwoStateHardConfig",
    "Ucrl2Agent", "make_ergodic_riverswim", "make_two_state_hard", "mdp_profile",
]
__version__ = "0.1.0"
