"""
Equality-constraint geometry.

A chart describes the feasible set {x : c(x) = 0} of m smooth constraints in a
RealSpace: the constraint values c(x), the Riesz gradients A(x) (one row per
constraint), the Hessian-vector products of each constraint, and a retraction
plus vector transport used by the discrete saddle dynamics.

ManifoldChart implements the generic formulas through a dense Cholesky
factorization of the m x m Gram matrix A^T A. SphereChart and
SphereProductChart override the hot paths with closed forms; the generic path
stays available (and is exercised by the tests) to validate them.
"""

from abc import ABC, abstractmethod
from enum import Enum
from typing import Callable, List, Optional, Sequence

import logging

import numpy as np
import scipy.linalg

from saddle_scout.errors import FeasibilityError, LICQViolationError, TangencyError
from saddle_scout.geometry.space import RealSpace

logger = logging.getLogger('SaddleScout.Manifold')

TANGENCY_TOL = 1e-8
FEASIBILITY_TOL = 1e-8
# below this ||eta||, sin/cos ratios switch to their Taylor series
SERIES_CUTOFF = 1e-4
MAX_GRAM_CONDITION = 1e14


class RetractionKind(str, Enum):
    EXPONENTIAL = "exponential"
    NORMALIZATION = "normalization"
    NEWTON = "newton"


class TransportKind(str, Enum):
    PARALLEL = "parallel"
    DIFFERENTIATED = "differentiated"
    PROJECTION = "projection"


def sinc(t: float) -> float:
    """sin(t)/t"""
    if t < SERIES_CUTOFF:
        return 1.0 - t * t / 6.0
    return np.sin(t) / t


def cosm1_over_sq(t: float) -> float:
    """(cos(t) - 1)/t^2"""
    if t < SERIES_CUTOFF:
        return -0.5 + t * t / 24.0
    return (np.cos(t) - 1.0) / (t * t)


def sinc_prime_over_t(t: float) -> float:
    """d/dt(sin t / t) divided by t"""
    if t < SERIES_CUTOFF:
        return -1.0 / 3.0 + t * t / 30.0
    return (t * np.cos(t) - np.sin(t)) / t ** 3


def atan_ratio(t: float) -> float:
    """arctan(t)/t"""
    if t < SERIES_CUTOFF:
        return 1.0 - t * t / 3.0
    return np.arctan(t) / t


class ManifoldChart(ABC):
    """
    Geometry provider for an equality-constrained manifold.

    Subclasses supply the constraint data plus retract/transport. All the
    projection and Riemannian-derivative formulas below work for any chart.
    """

    def __init__(self, space: RealSpace, m: int,
                 retraction: RetractionKind = RetractionKind.EXPONENTIAL,
                 transport: TransportKind = TransportKind.PARALLEL):
        self.space = space
        self.m = m
        self.retraction_kind = RetractionKind(retraction)
        self.transport_kind = TransportKind(transport)

    # ------------------------------------------------------------------
    # constraint data
    # ------------------------------------------------------------------

    @abstractmethod
    def constraint_eval(self, x: np.ndarray) -> np.ndarray:
        """c(x), shape (m,)"""

    @abstractmethod
    def constraint_grads(self, x: np.ndarray) -> np.ndarray:
        """Rows are the Riesz gradients of c_1..c_m, shape (m, dim)"""

    @abstractmethod
    def constraint_hess_vec(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Rows are Hess(c_l)(x) eta, shape (m, dim)"""

    @property
    def tangent_dim(self) -> int:
        return self.space.dim - self.m

    def feasibility(self, x: np.ndarray) -> float:
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.constraint_eval(x))))

    def check_feasible(self, x: np.ndarray, tol: float = FEASIBILITY_TOL):
        violation = self.feasibility(x)
        if not violation <= tol:
            raise FeasibilityError(violation, tol)

    # ------------------------------------------------------------------
    # projections (generic dense path)
    # ------------------------------------------------------------------

    def _gram_factor(self, a: np.ndarray):
        gram = self.space.gram(a)
        try:
            factor = scipy.linalg.cho_factor(gram)
        except np.linalg.LinAlgError:
            raise LICQViolationError(float(np.linalg.cond(gram)))
        cond = float(np.linalg.cond(gram))
        if not cond < MAX_GRAM_CONDITION:
            raise LICQViolationError(cond)
        return factor

    def normal_multipliers(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Coefficients lam with P_N u = sum_l lam_l grad c_l, i.e. (A^T A)^-1 A^T u"""
        if self.m == 0:
            return np.zeros(0)
        a = self.constraint_grads(x)
        rhs = self.space.inner_many(a, u)
        return scipy.linalg.cho_solve(self._gram_factor(a), rhs)

    def project_normal(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros_like(u)
        return self.normal_multipliers(x, u) @ self.constraint_grads(x)

    def project_tangent(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """(I - A (A^T A)^-1 A^T) u"""
        u = self.space.check(u)
        if self.m == 0:
            return u.copy()
        return u - self.project_normal(x, u)

    def tangency_defect(self, x: np.ndarray, v: np.ndarray) -> float:
        """max_l |<grad c_l(x), v>|"""
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(self.space.inner_many(self.constraint_grads(x), v))))

    def check_tangent(self, x: np.ndarray, v: np.ndarray, tol: float = TANGENCY_TOL):
        defect = self.tangency_defect(x, v)
        if not defect <= tol * max(1.0, self.space.norm(v)):
            raise TangencyError(f"vector is not tangent at x (normal component {defect:.3e})")

    # ------------------------------------------------------------------
    # Riemannian derivatives
    # ------------------------------------------------------------------

    def riemannian_grad(self, x: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
        return self.project_tangent(x, euclid_grad)

    def curvature_term(self, x: np.ndarray, eta: np.ndarray, euclid_grad: np.ndarray) -> np.ndarray:
        """sum_l lam_l Hess(c_l)(x) eta with lam = (A^T A)^-1 A^T grad E(x)"""
        if self.m == 0:
            return np.zeros_like(eta)
        lam = self.normal_multipliers(x, euclid_grad)
        return lam @ self.constraint_hess_vec(x, eta)

    def riemannian_hess_vec(self, x: np.ndarray, eta: np.ndarray, euclid_grad: np.ndarray,
                            euclid_hess_vec: np.ndarray, check: bool = True) -> np.ndarray:
        """P_T (Hess E eta - Hess c eta (A^T A)^-1 A^T grad E)"""
        if check:
            self.check_tangent(x, eta)
        return self.project_tangent(x, euclid_hess_vec - self.curvature_term(x, eta, euclid_grad))

    # ------------------------------------------------------------------
    # retraction and transport
    # ------------------------------------------------------------------

    @abstractmethod
    def retract(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Map a tangent vector at x back onto the manifold"""

    @abstractmethod
    def transport(self, x: np.ndarray, eta: np.ndarray, xi: np.ndarray) -> np.ndarray:
        """Move xi from T(x) to T(retract(x, eta))"""

    def transport_frame(self, x: np.ndarray, eta: np.ndarray, frame: np.ndarray) -> np.ndarray:
        if len(frame) == 0:
            return frame.copy()
        return np.array([self.transport(x, eta, v) for v in frame])

    def random_tangent(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.project_tangent(x, rng.standard_normal(self.space.dim))

    def describe(self) -> dict:
        return {
            "chart": type(self).__name__,
            "dim": self.space.dim,
            "constraints": self.m,
            "retraction": self.retraction_kind.value,
            "transport": self.transport_kind.value,
        }


class EuclideanChart(ManifoldChart):
    """No constraints: every formula reduces to the unconstrained case"""

    def __init__(self, space: RealSpace):
        super().__init__(space, 0)

    def constraint_eval(self, x):
        return np.zeros(0)

    def constraint_grads(self, x):
        return np.zeros((0, self.space.dim))

    def constraint_hess_vec(self, x, eta):
        return np.zeros((0, self.space.dim))

    def retract(self, x, eta):
        return x + eta

    def transport(self, x, eta, xi):
        return np.array(xi, dtype=float, copy=True)


# ----------------------------------------------------------------------
# sphere closed forms in a weighted space
# ----------------------------------------------------------------------

def sphere_exp(space: RealSpace, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    t = space.norm(eta)
    return np.cos(t) * x + sinc(t) * eta


def sphere_normalize(space: RealSpace, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    y = x + eta
    return y / space.norm(y)


def sphere_parallel(space: RealSpace, x: np.ndarray, eta: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Parallel translation of xi along the geodesic t -> Exp_x(t eta)"""
    t = space.norm(eta)
    a = space.inner(eta, xi)
    return xi + (cosm1_over_sq(t) * a) * eta - (sinc(t) * a) * x


class SphereChart(ManifoldChart):
    """
    Unit sphere {<x, x> = 1} of a (possibly weighted) RealSpace with the
    constraint c(x) = (<x, x> - 1)/2.
    """

    def __init__(self, space: RealSpace,
                 retraction: RetractionKind = RetractionKind.EXPONENTIAL,
                 transport: TransportKind = TransportKind.PARALLEL):
        super().__init__(space, 1, retraction, transport)
        if self.retraction_kind == RetractionKind.NEWTON:
            raise ValueError("sphere charts use the exponential or normalization retraction")

    def constraint_eval(self, x):
        return np.array([0.5 * (self.space.inner(x, x) - 1.0)])

    def constraint_grads(self, x):
        return np.asarray(x, dtype=float)[np.newaxis, :]

    def constraint_hess_vec(self, x, eta):
        return np.asarray(eta, dtype=float)[np.newaxis, :]

    def normal_multipliers(self, x, u):
        return np.array([self.space.inner(x, u) / self.space.inner(x, x)])

    def project_tangent(self, x, u):
        u = self.space.check(u)
        return u - (self.space.inner(x, u) / self.space.inner(x, x)) * x

    def curvature_term(self, x, eta, euclid_grad):
        return (self.space.inner(x, euclid_grad) / self.space.inner(x, x)) * eta

    def _geodesic_tangent(self, eta):
        """Tangent vector whose exponential equals retract(x, eta)"""
        if self.retraction_kind == RetractionKind.EXPONENTIAL:
            return eta
        return atan_ratio(self.space.norm(eta)) * eta

    def retract(self, x, eta):
        if self.retraction_kind == RetractionKind.EXPONENTIAL:
            return sphere_exp(self.space, x, eta)
        return sphere_normalize(self.space, x, eta)

    def transport(self, x, eta, xi):
        kind = self.transport_kind
        if kind == TransportKind.PARALLEL:
            return sphere_parallel(self.space, x, self._geodesic_tangent(eta), xi)
        if kind == TransportKind.PROJECTION:
            y = self.retract(x, eta)
            return xi - (self.space.inner(xi, y) / self.space.inner(y, y)) * y
        # differentiated retraction
        if self.retraction_kind == RetractionKind.NORMALIZATION:
            y = x + eta
            r = self.space.norm(y)
            return xi / r - (self.space.inner(xi, y) / r ** 3) * y
        t = self.space.norm(eta)
        a = self.space.inner(eta, xi)
        return -(sinc(t) * a) * x + (sinc_prime_over_t(t) * a) * eta + sinc(t) * xi


# ----------------------------------------------------------------------
# products of spheres with pinned coordinates
# ----------------------------------------------------------------------

class BlockSpec:
    """
    One factor of a SphereProductChart.

    kind 'fixed' pins the whole block to `target`; kind 'sphere' keeps the
    block on the unit sphere with the coordinates in `frozen_axes` held at 0
    (so the block moves on a lower-dimensional great sphere).
    """

    def __init__(self, kind: str, target: Optional[Sequence[float]] = None,
                 frozen_axes: Sequence[int] = ()):
        if kind not in ("fixed", "sphere"):
            raise ValueError(f"unknown block kind {kind!r}")
        if kind == "fixed" and target is None:
            raise ValueError("fixed blocks need a target")
        self.kind = kind
        self.target = None if target is None else np.asarray(target, dtype=float)
        self.frozen_axes = tuple(frozen_axes)


def _rows_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


def _rows_exp(x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    t = np.sqrt(_rows_dot(eta, eta))
    small = t < SERIES_CUTOFF
    safe = np.where(small, 1.0, t)
    s = np.where(small, 1.0 - t * t / 6.0, np.sin(safe) / safe)
    return np.cos(t)[:, None] * x + s[:, None] * eta


def _rows_parallel(x: np.ndarray, eta: np.ndarray, xi: np.ndarray) -> np.ndarray:
    t = np.sqrt(_rows_dot(eta, eta))
    small = t < SERIES_CUTOFF
    safe = np.where(small, 1.0, t)
    s = np.where(small, 1.0 - t * t / 6.0, np.sin(safe) / safe)
    c = np.where(small, -0.5 + t * t / 24.0, (np.cos(safe) - 1.0) / (safe * safe))
    a = _rows_dot(eta, xi)
    return xi + (c * a)[:, None] * eta - (s * a)[:, None] * x


class SphereProductChart(ManifoldChart):
    """
    Product of pinned points and unit spheres in Euclidean R^(blocks*block_dim).

    Retraction and transport act block-wise with the sphere closed forms,
    which is how a gauge-fixed particle system on S^2 is stepped.
    """

    def __init__(self, blocks: List[BlockSpec], block_dim: int = 3,
                 retraction: RetractionKind = RetractionKind.EXPONENTIAL,
                 transport: TransportKind = TransportKind.PARALLEL):
        self.blocks = list(blocks)
        self.block_dim = block_dim
        n = len(self.blocks)
        mask = np.ones((n, block_dim), dtype=bool)
        rows = []  # (kind, block, axis) per constraint, axis None for the sphere norm
        for b, spec in enumerate(self.blocks):
            if spec.kind == "fixed":
                mask[b, :] = False
                rows.extend(("pin", b, a) for a in range(block_dim))
            else:
                for a in spec.frozen_axes:
                    mask[b, a] = False
                    rows.append(("pin", b, a))
                rows.append(("norm", b, None))
        self._mask = mask
        self._sphere = np.array([spec.kind == "sphere" for spec in self.blocks])
        self._rows = rows
        super().__init__(RealSpace.euclidean(n * block_dim), len(rows), retraction, transport)
        if self.retraction_kind == RetractionKind.NEWTON:
            raise ValueError("sphere product charts use the exponential or normalization retraction")

    def _blocks(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float).reshape(len(self.blocks), self.block_dim)

    def constraint_eval(self, x):
        xb = self._blocks(x)
        out = np.empty(self.m)
        for i, (kind, b, a) in enumerate(self._rows):
            if kind == "norm":
                out[i] = 0.5 * (xb[b] @ xb[b] - 1.0)
            else:
                target = self.blocks[b].target
                out[i] = xb[b, a] - (0.0 if target is None else target[a])
        return out

    def constraint_grads(self, x):
        xb = self._blocks(x)
        grads = np.zeros((self.m, len(self.blocks), self.block_dim))
        for i, (kind, b, a) in enumerate(self._rows):
            if kind == "norm":
                grads[i, b] = xb[b]
            else:
                grads[i, b, a] = 1.0
        return grads.reshape(self.m, -1)

    def constraint_hess_vec(self, x, eta):
        eb = self._blocks(eta)
        out = np.zeros((self.m, len(self.blocks), self.block_dim))
        for i, (kind, b, _) in enumerate(self._rows):
            if kind == "norm":
                out[i, b] = eb[b]
        return out.reshape(self.m, -1)

    def _masked_point(self, x):
        return self._blocks(x) * self._mask

    def project_tangent(self, x, u):
        u = self.space.check(u)
        xm = self._masked_point(x)
        um = self._blocks(u) * self._mask
        denom = np.where(self._sphere, _rows_dot(xm, xm), 1.0)
        coef = np.where(self._sphere, _rows_dot(um, xm) / denom, 0.0)
        return (um - coef[:, None] * xm).ravel()

    def curvature_term(self, x, eta, euclid_grad):
        xm = self._masked_point(x)
        gm = self._blocks(euclid_grad) * self._mask
        denom = np.where(self._sphere, _rows_dot(xm, xm), 1.0)
        lam = np.where(self._sphere, _rows_dot(gm, xm) / denom, 0.0)
        return (lam[:, None] * self._blocks(eta)).ravel()

    def retract(self, x, eta):
        xb = self._blocks(x)
        eb = self._blocks(eta) * self._mask
        if self.retraction_kind == RetractionKind.NORMALIZATION:
            y = xb + eb
            r = np.sqrt(_rows_dot(y, y))
            out = np.where(self._sphere[:, None], y / r[:, None], xb)
        else:
            out = np.where(self._sphere[:, None], _rows_exp(xb, eb), xb)
        return out.ravel()

    def transport(self, x, eta, xi):
        xb = self._blocks(x)
        eb = self._blocks(eta) * self._mask
        xib = self._blocks(xi) * self._mask
        kind = self.transport_kind
        if kind == TransportKind.PARALLEL:
            if self.retraction_kind == RetractionKind.NORMALIZATION:
                t = np.sqrt(_rows_dot(eb, eb))
                safe = np.where(t < SERIES_CUTOFF, 1.0, t)
                scale = np.where(t < SERIES_CUTOFF, 1.0 - t * t / 3.0, np.arctan(safe) / safe)
                eb = scale[:, None] * eb
            out = _rows_parallel(xb, eb, xib)
        elif kind == TransportKind.PROJECTION:
            y = self._blocks(self.retract(x, eta))
            coef = _rows_dot(xib, y) / _rows_dot(y, y)
            out = xib - coef[:, None] * y
        else:
            if self.retraction_kind != RetractionKind.NORMALIZATION:
                raise ValueError("differentiated transport on product charts needs the normalization retraction")
            y = xb + eb
            r = np.sqrt(_rows_dot(y, y))
            out = xib / r[:, None] - (_rows_dot(xib, y) / r ** 3)[:, None] * y
        return np.where(self._sphere[:, None], out, 0.0).ravel()


# ----------------------------------------------------------------------
# generic constraint chart
# ----------------------------------------------------------------------

class ConstraintChart(ManifoldChart):
    """
    Chart assembled from user callables.

    The retraction pulls x + eta back onto {c = 0} with Gauss-Newton steps
    along the constraint gradients; transport projects onto the destination
    tangent space.
    """

    def __init__(self, space: RealSpace, m: int,
                 constraint_eval: Callable[[np.ndarray], np.ndarray],
                 constraint_grads: Callable[[np.ndarray], np.ndarray],
                 constraint_hess_vec: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 newton_tol: float = 1e-14, newton_max_iter: int = 50):
        super().__init__(space, m, RetractionKind.NEWTON, TransportKind.PROJECTION)
        self._c = constraint_eval
        self._a = constraint_grads
        self._hc = constraint_hess_vec
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter

    def constraint_eval(self, x):
        return np.atleast_1d(np.asarray(self._c(x), dtype=float))

    def constraint_grads(self, x):
        return np.atleast_2d(np.asarray(self._a(x), dtype=float))

    def constraint_hess_vec(self, x, eta):
        return np.atleast_2d(np.asarray(self._hc(x, eta), dtype=float))

    def retract(self, x, eta):
        y = np.asarray(x, dtype=float) + eta
        for _ in range(self.newton_max_iter):
            c = self.constraint_eval(y)
            if np.max(np.abs(c)) <= self.newton_tol:
                return y
            a = self.constraint_grads(y)
            delta = scipy.linalg.cho_solve(self._gram_factor(a), c)
            y = y - delta @ a
        logger.debug("Newton retraction stopped at violation %.3e", self.feasibility(y))
        return y

    def transport(self, x, eta, xi):
        return self.project_tangent(self.retract(x, eta), xi)
