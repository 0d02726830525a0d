"""
Smallest eigenpairs of a tangent-space Hessian given only its action.

Three backends share one interface:
  subspace  block power iteration on sigma I - H with Rayleigh-Ritz
  lanczos   ARPACK (scipy eigsh) on the W^(1/2)-symmetrized operator, with
            the normal space shifted out of the way
  dense     assemble H in an orthonormal tangent basis and call eigh; also
            the oracle the other two are tested against
All start vectors come from a seeded generator, so results are reproducible.
"""

from dataclasses import dataclass
from typing import Callable

import logging

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from saddle_scout.errors import EigensolverError, PreconditionError
from saddle_scout.geometry.manifold import ManifoldChart
from saddle_scout.geometry.space import gram_schmidt

logger = logging.getLogger('SaddleScout.Eigensolver')

POWER_STEPS = 20
SHIFT_FACTOR = 1.1
ZERO_TOL = 1e-4
DENSE_MAX_DIM = 3000


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    scale: float = 1.0
    matvecs: int = 0
    method: str = ""

    def zero_threshold(self, zero_tol: float = ZERO_TOL) -> float:
        return zero_tol * max(1.0, self.scale)

    def count(self, zero_tol: float = ZERO_TOL):
        """(negative, zero) eigenvalue counts under the zero threshold"""
        thr = self.zero_threshold(zero_tol)
        neg = int(np.sum(self.eigenvalues < -thr))
        zero = int(np.sum(np.abs(self.eigenvalues) <= thr))
        return neg, zero

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "scale": self.scale,
            "matvecs": self.matvecs,
            "method": self.method,
        }


class _CountingOperator:
    def __init__(self, hess_op: Callable[[np.ndarray], np.ndarray]):
        self.hess_op = hess_op
        self.calls = 0

    def __call__(self, v):
        self.calls += 1
        return self.hess_op(v)


def _residuals(space, op, values, vectors) -> np.ndarray:
    return np.array([space.norm(op(v) - lam * v) for lam, v in zip(values, vectors)])


def _random_tangent_block(chart, x, size, rng) -> np.ndarray:
    block = np.array([chart.random_tangent(x, rng) for _ in range(size)])
    return gram_schmidt(chart.space, block)


def estimate_spectral_radius(op, chart: ManifoldChart, x: np.ndarray,
                             rng: np.random.Generator, steps: int = POWER_STEPS) -> float:
    """max |lambda| of the tangent operator by plain power iteration"""
    space = chart.space
    v = chart.random_tangent(x, rng)
    v /= space.norm(v)
    rho = 0.0
    for _ in range(steps):
        w = op(v)
        rho = max(rho, space.norm(w))
        nrm = space.norm(w)
        if nrm == 0.0:
            break
        v = chart.project_tangent(x, w / nrm)
    return float(rho)


def tangent_basis(chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    """Rows form a W-orthonormal basis of T(x)"""
    space = chart.space
    root = np.sqrt(space.weights)
    if chart.m == 0:
        y = np.eye(space.dim)
    else:
        y = scipy.linalg.null_space(chart.constraint_grads(x) * root)
    return (y / root[:, None]).T


def dense_tangent_matrix(op, chart: ManifoldChart, x: np.ndarray):
    """(basis, M) with M_ij = <b_i, H b_j>, symmetrized"""
    basis = tangent_basis(chart, x)
    images = np.array([op(b) for b in basis])
    m = np.array([[chart.space.inner(bi, hj) for hj in images] for bi in basis])
    return basis, 0.5 * (m + m.T)


def _dense(op, chart, x, K, tol, max_matvecs, rng) -> SpectrumResult:
    if chart.space.dim > DENSE_MAX_DIM:
        raise PreconditionError(f"dense eigensolver limited to dim <= {DENSE_MAX_DIM}")
    basis, m = dense_tangent_matrix(op, chart, x)
    values, coeffs = scipy.linalg.eigh(m)
    vectors = coeffs[:, :K].T @ basis
    scale = float(np.max(np.abs(values))) if len(values) else 1.0
    return SpectrumResult(values[:K], vectors, _residuals(chart.space, op, values[:K], vectors), scale)


def _subspace(op, chart, x, K, tol, max_matvecs, rng) -> SpectrumResult:
    space = chart.space
    t = chart.tangent_dim
    rho = estimate_spectral_radius(op, chart, x, rng)
    sigma = SHIFT_FACTOR * rho + 1e-12
    b = min(t, K + max(2, min(K, 8)))
    block = _random_tangent_block(chart, x, b, rng)
    used = POWER_STEPS
    while True:
        hq = np.array([op(v) for v in block])
        used += b
        m = np.array([[space.inner(qi, hj) for hj in hq] for qi in block])
        theta, c = scipy.linalg.eigh(0.5 * (m + m.T))
        ritz = c.T @ block
        hritz = c.T @ hq
        res = np.array([space.norm(hritz[i] - theta[i] * ritz[i]) for i in range(K)])
        if np.all(res <= tol * np.maximum(1.0, np.abs(theta[:K]))):
            return SpectrumResult(theta[:K], ritz[:K], res, rho)
        if used >= max_matvecs:
            raise EigensolverError(f"subspace iteration stopped after {used} matvecs",
                                   eigenvalues=theta[:K], residuals=res)
        nxt = sigma * ritz - hritz
        nxt = np.array([chart.project_tangent(x, v) for v in nxt])
        block = gram_schmidt(space, nxt)


def _lanczos(op, chart, x, K, tol, max_matvecs, rng) -> SpectrumResult:
    space = chart.space
    d = space.dim
    root = np.sqrt(space.weights)
    rho = estimate_spectral_radius(op, chart, x, rng)
    sigma = SHIFT_FACTOR * rho + 1.0

    def matvec(y):
        u = np.asarray(y, dtype=float).ravel() / root
        pu = chart.project_tangent(x, u)
        return root * (op(pu) + sigma * (u - pu))

    lin = LinearOperator((d, d), matvec=matvec, dtype=float)
    v0 = root * chart.random_tangent(x, rng)
    ncv = min(d, max(2 * K + 1, 20))
    try:
        values, vecs = eigsh(lin, k=K, which="SA", v0=v0, ncv=ncv, tol=tol * 1e-2,
                             maxiter=max(1, max_matvecs // ncv))
    except ArpackNoConvergence as e:
        raise EigensolverError("ARPACK did not converge", eigenvalues=e.eigenvalues)
    order = np.argsort(values)
    values = values[order]
    vectors = (vecs[:, order] / root[:, None]).T
    vectors = gram_schmidt(space, np.array([chart.project_tangent(x, v) for v in vectors]))
    # Rayleigh-Ritz on the returned block restores exact orthonormality
    hv = np.array([op(v) for v in vectors])
    m = np.array([[space.inner(a, b) for b in hv] for a in vectors])
    values, c = scipy.linalg.eigh(0.5 * (m + m.T))
    vectors = c.T @ vectors
    return SpectrumResult(values, vectors, _residuals(space, op, values, vectors), rho)


_BACKENDS = {"subspace": _subspace, "lanczos": _lanczos, "dense": _dense}


def smallest_eigenpairs(hess_op: Callable[[np.ndarray], np.ndarray], chart: ManifoldChart,
                        x: np.ndarray, K: int, tol: float = 1e-8,
                        max_matvecs: int = 200000, seed: int = 0,
                        method: str = "subspace") -> SpectrumResult:
    """
    K smallest eigenpairs of a symmetric operator on T(x).

    Raises EigensolverError (carrying the best eigenvalues and residuals)
    when the iterative backends run out of matvecs.
    """
    if method not in _BACKENDS:
        raise PreconditionError(f"unknown eigensolver method {method!r}")
    t = chart.tangent_dim
    if not 1 <= K <= t:
        raise PreconditionError(f"K={K} must lie in [1, {t}]")
    if method == "lanczos" and K >= t - 1:
        method = "dense"
    op = _CountingOperator(hess_op)
    rng = np.random.default_rng(seed)
    result = _BACKENDS[method](op, chart, x, K, tol, max_matvecs, rng)
    result.matvecs = op.calls
    result.method = method
    logger.debug("%s eigensolver: K=%d, %d matvecs, lambda_1=%.6e",
                 method, K, op.calls, result.eigenvalues[0])
    return result
