"""Learning and planning for principal-agent MDPs with contracts."""
from .core import Pamdp, agent_best_response, evaluate_values, principal_value, simulate_episode
from .errors import (GenerationFailed, InvalidInputError, NotInducible, NumericalFailure,
                     PamdpLabError, PlanningInfeasible)

__version__ = "0.1.0"

__all__ = ["Pamdp", "agent_best_response", "evaluate_values", "principal_value", "simulate_episode",
           "GenerationFailed", "InvalidInputError", "NotInducible", "NumericalFailure",
           "PamdpLabError", "PlanningInfeasible"]
