"""
Base problem infrastructure for Saddle Scout
Every energy pack (toy sphere, Thomson, BEC) plugs into the dynamics and
landscape layers through this interface.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import logging

import numpy as np

from saddle_scout.geometry.manifold import ManifoldChart, RetractionKind, TransportKind
from saddle_scout.geometry.space import RealSpace

logger = logging.getLogger('SaddleScout.Problem')


class BaseProblem(ABC):
    """
    Abstract base class for constrained energies.

    All problems must implement:
    - energy / grad / hess_vec on the ambient space (grad is the Riesz
      gradient, defined in a neighbourhood of the manifold so the dimer can
      evaluate it off the constraint set)
    - build_chart() for the constraint geometry
    - initial_point() for the configured starting state
    """

    name = "base"

    def __init__(self):
        self._setup()

    def _setup(self):
        """Override to perform problem-specific setup"""
        pass

    @property
    @abstractmethod
    def space(self) -> RealSpace:
        """Ambient space carrying the inner product"""

    @abstractmethod
    def energy(self, x: np.ndarray) -> float:
        pass

    @abstractmethod
    def grad(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def hess_vec(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def build_chart(self, retraction: RetractionKind = RetractionKind.EXPONENTIAL,
                    transport: TransportKind = TransportKind.PARALLEL) -> ManifoldChart:
        pass

    @abstractmethod
    def initial_point(self, kind: Optional[str] = None) -> np.ndarray:
        pass

    def default_search(self) -> Dict[str, Any]:
        """Search-config defaults for this problem (step sizes, tolerances)"""
        return {}

    def perturbation_scale(self, x: np.ndarray) -> float:
        """Multiplies eps when leaving a saddle along an unit direction"""
        return 1.0

    def upward_perturbation(self, x: np.ndarray, direction: np.ndarray, index: int) -> Optional[np.ndarray]:
        """
        Tangent step that launches an upward run from an index-`index` point.
        None means the plain eps * perturbation_scale(x) * direction step.
        """
        return None

    def eigensolver_method(self) -> str:
        return "dense"

    # ------------------------------------------------------------------
    # identity of solutions
    # ------------------------------------------------------------------

    def fingerprint(self, x: np.ndarray) -> Optional[np.ndarray]:
        """Cheap symmetry-invariant signature used to prefilter dedup; None disables"""
        return None

    def aligned_distance(self, x: np.ndarray, y: np.ndarray) -> float:
        """Distance after factoring out the known symmetries (identity only by default)"""
        return self.space.norm(np.asarray(x) - np.asarray(y))

    # ------------------------------------------------------------------
    # reporting
    # ------------------------------------------------------------------

    def describe(self) -> Dict[str, Any]:
        return {"problem": self.name, "dim": self.space.dim}

    def solution_summary(self, x: np.ndarray) -> Dict[str, Any]:
        """Extra per-solution report fields"""
        return {}

    def solution_payload(self, x: np.ndarray) -> Any:
        """JSON-ready coordinates embedded in the landscape document"""
        return [float(v) for v in x]

    def load_payload(self, payload: Any) -> np.ndarray:
        return np.asarray(payload, dtype=float)

    def export_solution(self, x: np.ndarray, directory: str, stem: str) -> Dict[str, str]:
        """Write per-solution artifacts, returning {kind: path}"""
        return {}
