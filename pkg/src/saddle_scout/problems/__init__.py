from saddle_scout.problems.base import BaseProblem
from saddle_scout.problems.problem_registry import ProblemRegistry, get_registry

__all__ = ["BaseProblem", "ProblemRegistry", "get_registry"]
