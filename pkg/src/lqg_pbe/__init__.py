"""Linear perfect Bayesian equilibria of multi-player LQG games with a hidden Gaussian state."""
from .belief_filters import PublicRecursion, build_public_recursion
from .equilibrium_solver import (IllPosedStageGame, LQGEquilibrium, QuadraticValues, SolverOptions,
                                 SolveResult, StageSingularError, backward_pass, solve_equilibrium,
                                 stage_best_response, stage_expected_reward)
from .game_model import GameSpec, make_game, random_game, validate_game
from .strategy import StrategyProfile

__all__ = [
    "GameSpec", "make_game", "random_game", "validate_game", "StrategyProfile",
    "PublicRecursion", "build_public_recursion", "SolverOptions", "SolveResult", "QuadraticValues",
    "LQGEquilibrium", "solve_equilibrium", "backward_pass", "stage_best_response",
    "stage_expected_reward", "IllPosedStageGame", "StageSingularError",
]
__version__ = "0.1.0"
