"""
Problem Registry - name -> factory for every energy pack
"""

from typing import Any, Callable, Dict, List

import logging

from saddle_scout.errors import ConfigError
from saddle_scout.problems.base import BaseProblem
from saddle_scout.problems.bec import BecProblem, Grid2D
from saddle_scout.problems.thomson import ThomsonProblem
from saddle_scout.problems.toy_sphere import QuadraticProblem

logger = logging.getLogger('SaddleScout.Registry')


def _thomson(options: Dict[str, Any]) -> BaseProblem:
    return ThomsonProblem(options.get("n", 5), options.get("seed_config", "pp"), options.get("seed_file"))


def _bec(options: Dict[str, Any]) -> BaseProblem:
    grid = Grid2D(options.get("m", 8.0), options.get("n", 64))
    return BecProblem(grid, options.get("beta", 300.0), guess=options.get("guess", "tf"))


def _toy_sphere(options: Dict[str, Any]) -> BaseProblem:
    return QuadraticProblem.ladder(options.get("dim", 3), options.get("anisotropy", 1.0),
                                   constrained=options.get("constrained", True))


class ProblemRegistry:
    """
    Central registry of problem packs.
    Maps the [run] problem name onto a factory taking that problem's options.
    """

    def __init__(self):
        self.factories: Dict[str, Callable[[Dict[str, Any]], BaseProblem]] = {}
        self.descriptions: Dict[str, str] = {}
        self._register_defaults()

    def _register_defaults(self):
        self.register_problem("thomson", _thomson, "N charges on S^2, rotation gauge fixed")
        self.register_problem("bec", _bec, "2D Gross-Pitaevskii energy on the L2 sphere")
        self.register_problem("toy-sphere", _toy_sphere, "quadratic form on the unit sphere")

    def register_problem(self, name: str, factory: Callable[[Dict[str, Any]], BaseProblem],
                         description: str = ""):
        self.factories[name] = factory
        self.descriptions[name] = description
        logger.debug("registered problem %s", name)

    def list_problems(self) -> List[str]:
        return sorted(self.factories)

    def create(self, name: str, options: Dict[str, Any]) -> BaseProblem:
        if name not in self.factories:
            raise ConfigError("run.problem", f"unknown problem '{name}'")
        try:
            return self.factories[name](options)
        except ValueError as e:
            raise ConfigError(name, str(e))


_registry = None


def get_registry() -> ProblemRegistry:
    global _registry
    if _registry is None:
        _registry = ProblemRegistry()
    return _registry
