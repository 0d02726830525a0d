"""
Thomson problem pack

N unit charges on S^2 with Coulomb energy sum_{i<j} 1/|x_i - x_j|. Rigid
rotations are removed by a gauge: particle 1 sits at the north pole and
particle 2 is confined to the yz-plane, so the configuration space is
{pole} x S^1 x (S^2)^(N-2) with tangent dimension 2N - 3.
"""

from typing import Any, Dict, List, Optional

import logging

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import pdist

from saddle_scout.errors import PreconditionError, SingularityError
from saddle_scout.geometry.manifold import BlockSpec, RetractionKind, SphereProductChart, TransportKind
from saddle_scout.geometry.space import RealSpace
from saddle_scout.problems.base import BaseProblem

logger = logging.getLogger('SaddleScout.Thomson')

COINCIDENCE_TOL = 1e-12
NORTH_POLE = np.array([0.0, 0.0, 1.0])

# sign flips of (x, y, z) that keep the gauge: the pole stays put and
# particle 2 stays in the yz-plane
GAUGE_REFLECTIONS = (
    np.array([1.0, 1.0, 1.0]),
    np.array([-1.0, 1.0, 1.0]),
    np.array([1.0, -1.0, 1.0]),
    np.array([-1.0, -1.0, 1.0]),
)


def _as_points(x: np.ndarray) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        if pts.size % 3:
            raise ValueError(f"flattened coordinates must have length 3N, got {pts.size}")
        pts = pts.reshape(-1, 3)
    return pts


def _pair_data(pts: np.ndarray):
    """Pairwise differences x_i - x_j and their inverse distance powers (zero on the diagonal)"""
    diff = pts[:, None, :] - pts[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    n = len(pts)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.min(r[off]) < COINCIDENCE_TOL:
        i, j = np.argwhere((r < COINCIDENCE_TOL) & off)[0]
        raise SingularityError(f"particles {i} and {j} coincide")
    inv = np.zeros_like(r)
    inv[off] = 1.0 / r[off]
    return diff, inv


def thomson_energy(x: np.ndarray) -> float:
    pts = _as_points(x)
    if len(pts) < 2:
        return 0.0
    r = pdist(pts)
    if np.min(r) < COINCIDENCE_TOL:
        raise SingularityError("two particles coincide")
    return float(np.sum(1.0 / r))


def thomson_grad(x: np.ndarray) -> np.ndarray:
    pts = _as_points(x)
    diff, inv = _pair_data(pts)
    return -np.einsum("ij,ijk->ik", inv ** 3, diff).ravel()


def thomson_hess_vec(x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """
    Sum over pairs of B_ij (eta_i - eta_j) with the Coulomb pair block
    B_ij = 3 d d^T / r^5 - I / r^3, d = x_i - x_j.
    """
    pts = _as_points(x)
    e = _as_points(eta)
    diff, inv = _pair_data(pts)
    de = e[:, None, :] - e[None, :, :]
    proj = np.einsum("ijk,ijk->ij", diff, de)
    term = 3.0 * (proj * inv ** 5)[:, :, None] * diff - (inv ** 3)[:, :, None] * de
    return term.sum(axis=1).ravel()


def reflect(x: np.ndarray, signs: np.ndarray) -> np.ndarray:
    return (_as_points(x) * signs).ravel()


def distance_fingerprint(x: np.ndarray) -> np.ndarray:
    """Sorted pairwise distances; invariant under rotations, reflections and relabelling"""
    return np.sort(pdist(_as_points(x)))


def planar_polygon(n: int) -> np.ndarray:
    """PP: n points evenly spaced on the great circle of the yz-plane, starting at the pole"""
    if n < 3:
        raise PreconditionError("planar polygon needs N >= 3")
    t = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.zeros(n), np.sin(t), np.cos(t)]).ravel()


def regular_dipyramid(n: int) -> np.ndarray:
    """
    RD: both poles plus a regular (n-2)-gon on the equator.

    Order is [north pole, (0,1,0), rest of the equator, south pole] so the
    second particle lies off the z-axis and the gauge fixes every rotation.
    """
    if n < 5:
        raise PreconditionError("regular dipyramid needs N >= 5")
    k = n - 2
    t = 0.5 * np.pi + 2.0 * np.pi * np.arange(k) / k
    ring = np.column_stack([np.cos(t), np.sin(t), np.zeros(k)])
    ring[0] = (0.0, 1.0, 0.0)
    return np.vstack([NORTH_POLE, ring, -NORTH_POLE]).ravel()


def pole_ring(n: int, height: float) -> np.ndarray:
    """North pole plus a regular (n-1)-gon at z = height, second particle in the yz-plane"""
    if n < 4:
        raise PreconditionError("pole-ring configuration needs N >= 4")
    if not -1.0 < height < 1.0:
        raise PreconditionError(f"ring height must lie in (-1, 1), got {height}")
    k = n - 1
    rho = np.sqrt(1.0 - height * height)
    t = 0.5 * np.pi + 2.0 * np.pi * np.arange(k) / k
    ring = np.column_stack([rho * np.cos(t), rho * np.sin(t), np.full(k, height)])
    ring[0] = (0.0, rho, height)
    return np.vstack([NORTH_POLE, ring]).ravel()


def regular_pyramid(n: int) -> np.ndarray:
    """RP: the pole-ring configuration at the energy-minimizing ring height"""
    res = minimize_scalar(lambda h: thomson_energy(pole_ring(n, h)),
                          bounds=(-0.999, 0.999), method="bounded",
                          options={"xatol": 1e-12})
    logger.debug("pyramid height for N=%d: h=%.12f E=%.10f", n, res.x, res.fun)
    return pole_ring(n, float(res.x))


def to_gauge(points) -> np.ndarray:
    """Normalize every point, then rotate so point 1 is the north pole and point 2 has x = 0, y > 0"""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms < 1e-12):
        raise PreconditionError("seed configuration has a point at the origin")
    pts = pts / norms[:, None]
    ez = pts[0]
    ey = pts[1] - np.dot(pts[1], ez) * ez
    if np.linalg.norm(ey) < 1e-8:
        raise PreconditionError("the first two seed points are (anti)parallel")
    ey = ey / np.linalg.norm(ey)
    rot = np.vstack([np.cross(ey, ez), ey, ez])
    out = pts @ rot.T
    out[0] = NORTH_POLE
    out[1, 0] = 0.0
    out[1] /= np.linalg.norm(out[1])
    return out.ravel()


def reference_config(kind: str, n: int, height: Optional[float] = None) -> np.ndarray:
    kind = kind.lower()
    if kind == "pp":
        return planar_polygon(n)
    if kind == "rd":
        return regular_dipyramid(n)
    if kind == "rp":
        return regular_pyramid(n)
    if kind in ("pole_ring", "pole-ring"):
        if height is None:
            raise PreconditionError("pole_ring needs a ring height")
        return pole_ring(n, height)
    raise PreconditionError(f"unknown reference configuration {kind!r}")


def thomson_chart(n: int, retraction=RetractionKind.EXPONENTIAL,
                  transport=TransportKind.PARALLEL) -> SphereProductChart:
    """Gauge-fixed chart {x_1 = pole} x {unit circle in yz} x (S^2)^(N-2)"""
    if n < 3:
        raise PreconditionError("the gauge-fixed chart needs N >= 3")
    blocks = [BlockSpec("fixed", target=NORTH_POLE), BlockSpec("sphere", frozen_axes=(0,))]
    blocks += [BlockSpec("sphere") for _ in range(n - 2)]
    return SphereProductChart(blocks, 3, retraction, transport)


class ThomsonProblem(BaseProblem):
    """Thomson energy of N charges in the rotation gauge"""

    name = "thomson"

    def __init__(self, n: int, seed_config: str = "pp", seed_file: Optional[str] = None):
        if n < 3:
            raise PreconditionError("Thomson problem needs N >= 3")
        self.n = n
        self.seed_config = seed_config
        self.seed_file = seed_file
        self._space = RealSpace.euclidean(3 * n)
        super().__init__()

    @property
    def space(self):
        return self._space

    def energy(self, x):
        return thomson_energy(x)

    def grad(self, x):
        return thomson_grad(x)

    def hess_vec(self, x, eta):
        return thomson_hess_vec(x, eta)

    def build_chart(self, retraction=RetractionKind.EXPONENTIAL, transport=TransportKind.PARALLEL):
        return thomson_chart(self.n, retraction, transport)

    def initial_point(self, kind=None):
        kind = kind or self.seed_config
        if kind == "file":
            if not self.seed_file:
                raise PreconditionError("seed_config=file needs seed_file")
            pts = np.loadtxt(self.seed_file, dtype=float, ndmin=2)
            if pts.shape != (self.n, 3):
                raise PreconditionError(f"{self.seed_file}: expected {self.n} rows of 3 coordinates")
            return to_gauge(pts)
        return reference_config(kind, self.n)

    def default_search(self):
        return {"alpha": 1e-4, "beta": 1e-3, "dimer_l": 1e-3, "grad_tol": 1e-6,
                "max_iter": 400000, "eps": 1e-2, "hessian": "exact"}

    def eigensolver_method(self):
        return "dense"

    def fingerprint(self, x):
        return distance_fingerprint(x)

    def aligned_distance(self, x, y):
        return min(float(np.linalg.norm(reflect(x, s) - np.asarray(y))) for s in GAUGE_REFLECTIONS)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["n"] = self.n
        info["seed_config"] = self.seed_config
        return info

    def solution_payload(self, x) -> List[List[float]]:
        return [[float(c) for c in p] for p in _as_points(x)]

    def load_payload(self, payload):
        return np.asarray(payload, dtype=float).ravel()
