"""Stochastic sandpile and activated random walk on the cycle Z_n.

Simulation, the SS/ARW coupling, exact quotient-chain verification and
stabilization-time sweeps.
"""

from .coupling import CoupledRun, arw_chain_step, derive_ss_outcome, run_coupled, run_coupled_fast, stabilize_arw_full
from .field import InstructionField, Policy, stabilize_arw, stabilize_ss, verify_abelian, verify_least_action
from .ring import SLEEP, ArwConfig, ArwInstruction, SandpileConfig, SsOutcome, classify, project

__version__ = "0.1.0"

__all__ = [
    "SLEEP",
    "ArwConfig",
    "ArwInstruction",
    "CoupledRun",
    "InstructionField",
    "Policy",
    "SandpileConfig",
    "SsOutcome",
    "arw_chain_step",
    "classify",
    "derive_ss_outcome",
    "project",
    "run_coupled",
    "run_coupled_fast",
    "stabilize_arw",
    "stabilize_arw_full",
    "stabilize_ss",
    "verify_abelian",
    "verify_least_action",
]
