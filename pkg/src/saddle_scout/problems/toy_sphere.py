"""
Small analytic energies on spheres and flat spaces.

They have closed-form stationary points and Hessians, which makes them the
reference cases for the geometry, dynamics and eigensolver layers.
"""

from typing import Any, Dict, Optional

import numpy as np

from saddle_scout.geometry.manifold import (
    EuclideanChart,
    ManifoldChart,
    RetractionKind,
    SphereChart,
    TransportKind,
)
from saddle_scout.geometry.space import RealSpace
from saddle_scout.problems.base import BaseProblem


class HeightProblem(BaseProblem):
    """
    E(x) = x_last + anisotropy/2 * x_0^2 on the unit sphere of R^dim.

    The north pole e_last is the maximum. Its tangent Hessian is
    diag(anisotropy - 1, -1, ..., -1).
    """

    name = "height"

    def __init__(self, dim: int = 3, anisotropy: float = 0.0):
        if dim < 2:
            raise ValueError("height problem needs dim >= 2")
        self.dim = dim
        self.anisotropy = float(anisotropy)
        self._space = RealSpace.euclidean(dim)
        super().__init__()

    @property
    def space(self):
        return self._space

    def energy(self, x):
        return float(x[-1] + 0.5 * self.anisotropy * x[0] ** 2)

    def grad(self, x):
        g = np.zeros(self.dim)
        g[-1] = 1.0
        g[0] = self.anisotropy * x[0]
        return g

    def hess_vec(self, x, eta):
        out = np.zeros(self.dim)
        out[0] = self.anisotropy * eta[0]
        return out

    def build_chart(self, retraction=RetractionKind.EXPONENTIAL, transport=TransportKind.PARALLEL):
        return SphereChart(self._space, retraction, transport)

    def initial_point(self, kind: Optional[str] = None):
        kind = kind or "pole"
        x = np.zeros(self.dim)
        if kind == "pole":
            x[-1] = 1.0
        elif kind == "equator":
            # just above the equator, tilted off every axis
            x[:-1] = 1.0
            x[-1] = 0.1
            x /= np.linalg.norm(x)
        else:
            raise ValueError(f"unknown start {kind!r} for the height problem")
        return x

    def default_search(self):
        return {"alpha": 1e-2, "beta": 1e-2, "dimer_l": 1e-3, "grad_tol": 1e-8}


class QuadraticProblem(BaseProblem):
    """
    E(x) = 1/2 x^T M x, either on the unit sphere (a Rayleigh quotient
    landscape whose stationary points are the eigenvectors of M) or on the
    flat space.

    On the sphere the eigenvector of the j-th smallest eigenvalue of M is a
    saddle of index j - 1 when the spectrum is simple.
    """

    name = "toy-sphere"

    def __init__(self, matrix: np.ndarray, constrained: bool = True, seed: int = 0):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError("quadratic form needs a square matrix")
        self.matrix = 0.5 * (m + m.T)
        self.constrained = constrained
        self.seed = seed
        self._space = RealSpace.euclidean(m.shape[0])
        super().__init__()

    @classmethod
    def ladder(cls, dim: int, anisotropy: float = 1.0, **kwargs) -> "QuadraticProblem":
        """Diagonal spectrum 1, 1 + a, 1 + 2a, ..."""
        return cls(np.diag(1.0 + anisotropy * np.arange(dim)), **kwargs)

    @property
    def space(self):
        return self._space

    def energy(self, x):
        return float(0.5 * x @ self.matrix @ x)

    def grad(self, x):
        return self.matrix @ x

    def hess_vec(self, x, eta):
        return self.matrix @ eta

    def build_chart(self, retraction=RetractionKind.EXPONENTIAL,
                    transport=TransportKind.PARALLEL) -> ManifoldChart:
        if self.constrained:
            return SphereChart(self._space, retraction, transport)
        return EuclideanChart(self._space)

    def initial_point(self, kind: Optional[str] = None):
        kind = kind or "top"
        if kind == "top":
            _, vecs = np.linalg.eigh(self.matrix)
            x = vecs[:, -1].copy()
            # fix the eigenvector sign so runs are reproducible across LAPACK builds
            pivot = np.argmax(np.abs(x))
            return x * np.sign(x[pivot])
        if kind == "random":
            x = np.random.default_rng(self.seed).standard_normal(self._space.dim)
            return x / np.linalg.norm(x) if self.constrained else x
        raise ValueError(f"unknown start {kind!r} for the quadratic problem")

    def default_search(self):
        return {"alpha": 1e-2, "beta": 1e-2, "dimer_l": 1e-3, "grad_tol": 1e-8,
                "max_iter": 20000}

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["constrained"] = self.constrained
        info["spectrum"] = [float(v) for v in np.linalg.eigvalsh(self.matrix)]
        return info
