"""Distributed user association for energy-harvesting small cells.

Probability models of harvested, consumed and residual energy; the
harvest-use cell protocol; the EXP4-SB sleeping-bandit learner; and a
discrete-event simulator that compares it against baseline policies.
"""
from .bandit import Exp4SB
from .energy import SbsConfig
from .estimators import SuccessProbability
from .sim import PolicyKind, SimConfig, run, run_replications

__all__ = ["Exp4SB", "PolicyKind", "SbsConfig", "SimConfig", "SuccessProbability", "run", "run_replications"]
__version__ = "0.1.0"
