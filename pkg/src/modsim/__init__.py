"""Simulation of AI-assisted moderation queues with limited human review."""

from .fluid import FluidSolution, average_regret, solve_w_fluid, threshold_stationary
from .model import (CostDistribution, EnvConfig, Moments, Normal, Schedule, TwoPoint, TypeParams,
                    ValidationError, moments, validate_env)
from .policies import make_policy
from .sim import (ContractViolation, Simulator, Trace, draw_exogenous, littles_law,
                  loss_decomposition, realized_loss, run)

__version__ = "0.1.0"

__all__ = ["FluidSolution", "average_regret", "solve_w_fluid", "threshold_stationary",
           "CostDistribution", "EnvConfig", "Moments", "Normal", "Schedule", "TwoPoint",
           "TypeParams", "ValidationError", "moments", "validate_env", "make_policy",
           "ContractViolation", "Simulator", "Trace", "draw_exogenous", "littles_law",
           "loss_decomposition", "realized_loss", "run"]
