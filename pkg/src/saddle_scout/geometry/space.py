"""
Inner-product-space primitives shared by the geometry, dynamics and
eigensolver layers.

All vectors are flat float64 numpy arrays. A frame of k tangent vectors is a
(k, dim) array whose rows are the vectors.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from saddle_scout.errors import DimensionError, RankDeficiencyError

# Pivot norms below DROP_TOL * (first pivot norm) signal rank loss.
DROP_TOL = 1e-10


@dataclass(frozen=True)
class RealSpace:
    """
    Real Hilbert space R^dim with a diagonal (quadrature) metric.

    <u, v> = sum_i w_i u_i v_i. Euclidean spaces use unit weights.
    """
    dim: int
    weights: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"space dimension must be positive, got {self.dim}")
        if self.weights is None:
            w = np.ones(self.dim)
        else:
            w = np.ascontiguousarray(self.weights, dtype=float)
            if w.ndim == 0:
                w = np.full(self.dim, float(w))
        if w.shape != (self.dim,):
            raise DimensionError(self.dim, w.size)
        if not np.all(w > 0):
            raise ValueError("all quadrature weights must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def euclidean(cls, dim: int) -> "RealSpace":
        return cls(dim)

    @classmethod
    def uniform(cls, dim: int, weight: float) -> "RealSpace":
        return cls(dim, np.full(dim, float(weight)))

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise DimensionError(self.dim, u.size)
        return u

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        # u*v is commutative elementwise, so the result is bitwise symmetric
        return float(np.dot(self.weights, self.check(u) * self.check(v)))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def inner_many(self, frame: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Vector of <frame_i, u> for every row of frame"""
        if len(frame) == 0:
            return np.zeros(0)
        return np.array([self.inner(f, u) for f in frame])

    def gram(self, frame: np.ndarray) -> np.ndarray:
        k = len(frame)
        g = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                g[i, j] = g[j, i] = self.inner(frame[i], frame[j])
        return g


def inner(space: RealSpace, u: np.ndarray, v: np.ndarray) -> float:
    return space.inner(u, v)


def norm(space: RealSpace, u: np.ndarray) -> float:
    return space.norm(u)


def gram_schmidt(space: RealSpace, frame: np.ndarray) -> np.ndarray:
    """
    Orthonormalize the rows of frame with modified Gram-Schmidt.

    Every vector is orthogonalized twice against its predecessors (one
    re-orthogonalization pass). Raises RankDeficiencyError naming the first
    vector whose pivot norm drops below DROP_TOL relative to the first pivot.
    """
    frame = np.array(frame, dtype=float, copy=True)
    if frame.ndim == 1:
        frame = frame[np.newaxis, :]
    k = len(frame)
    if k == 0:
        return frame.reshape(0, space.dim)
    if frame.shape[1] != space.dim:
        raise DimensionError(space.dim, frame.shape[1])

    q = np.empty_like(frame)
    ref = None
    for i in range(k):
        w = frame[i]
        for _ in range(2):
            for j in range(i):
                w = w - space.inner(q[j], w) * q[j]
        pivot = space.norm(w)
        if ref is None:
            ref = space.norm(frame[0])
        if not np.isfinite(pivot) or pivot <= DROP_TOL * max(ref, np.finfo(float).tiny):
            raise RankDeficiencyError(i, pivot)
        q[i] = w / pivot
    return q


def orthonormality_defect(space: RealSpace, frame: np.ndarray) -> float:
    """max_ij |<v_i, v_j> - delta_ij|"""
    if len(frame) == 0:
        return 0.0
    return float(np.max(np.abs(space.gram(frame) - np.eye(len(frame)))))
