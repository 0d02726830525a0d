"""
Constrained high-index saddle dynamics.

One iteration moves the point along the reflected Riemannian gradient
g = -(I - 2 sum v_i v_i^T) grad E(x) with a retraction, then carries the
frame v_1..v_k over with vector transport and improves it by one deflated
power/gradient step on the Hessian followed by Gram-Schmidt.

The small-dimension stability checker differentiates the continuous,
penalty-stabilized vector field instead of the discrete map.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple

import logging

import numpy as np
import scipy.linalg

from saddle_scout.errors import PreconditionError, RankDeficiencyError, SingularityError
from saddle_scout.geometry.manifold import ManifoldChart, RetractionKind, TransportKind
from saddle_scout.geometry.space import gram_schmidt
from saddle_scout.problems.base import BaseProblem

logger = logging.getLogger('SaddleScout.Dynamics')

STABILITY_FD_STEP = 1e-6
STABILITY_MAX_DOF = 200


class SearchStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DIVERGED = "diverged"
    RANK_LOSS = "rank_loss"


class HessianMode(str, Enum):
    DIMER = "dimer"
    EXACT = "exact"


@dataclass
class SearchConfig:
    """Step sizes, tolerances and geometry options of a single k-saddle search"""
    k: int = 0
    alpha: float = 1e-2
    beta: float = 1e-2
    dimer_l: float = 1e-3
    grad_tol: float = 1e-8
    max_iter: int = 10000
    transport: TransportKind = TransportKind.PARALLEL
    retraction: RetractionKind = RetractionKind.EXPONENTIAL
    n_v: int = 1
    hessian: HessianMode = HessianMode.DIMER
    trace_every: int = 0
    log_every: int = 1000
    energy_cap: float = 1e8
    feasibility_tol: float = 1e-8

    def __post_init__(self):
        self.transport = TransportKind(self.transport)
        self.retraction = RetractionKind(self.retraction)
        self.hessian = HessianMode(self.hessian)
        for name in ("alpha", "beta", "dimer_l", "grad_tol", "energy_cap", "feasibility_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 0:
            raise ValueError(f"target index must be non-negative, got {self.k}")
        if self.max_iter < 1 or self.n_v < 1 or self.log_every < 1:
            raise ValueError("max_iter, n_v and log_every must be at least 1")

    def with_index(self, k: int) -> "SearchConfig":
        return replace(self, k=k)


@dataclass
class SearchState:
    x: np.ndarray
    frame: np.ndarray
    iter: int = 0
    last_grad_norm: float = float("inf")

    @classmethod
    def start(cls, chart: ManifoldChart, x: np.ndarray, frame=None) -> "SearchState":
        """Initial state with the frame projected onto T(x) and orthonormalized"""
        x = np.array(x, dtype=float, copy=True)
        if frame is None or len(frame) == 0:
            return cls(x, np.zeros((0, chart.space.dim)))
        projected = np.array([chart.project_tangent(x, v) for v in np.atleast_2d(frame)])
        return cls(x, gram_schmidt(chart.space, projected))

    @property
    def k(self) -> int:
        return len(self.frame)


@dataclass
class SearchOutcome:
    status: SearchStatus
    state: SearchState
    energy: float
    grad_norm: float
    iterations: int
    trace: List[Tuple[int, float, float]] = field(default_factory=list)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == SearchStatus.CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "trace": [list(t) for t in self.trace],
            "message": self.message,
        }


# ----------------------------------------------------------------------
# Hessian actions
# ----------------------------------------------------------------------

def riemannian_gradient(problem: BaseProblem, chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    """P_T(x) grad E(x); also meaningful slightly off the manifold"""
    return chart.project_tangent(x, problem.grad(x))


def dimer_hess_vec(problem: BaseProblem, chart: ManifoldChart, x: np.ndarray,
                   v: np.ndarray, l: float) -> np.ndarray:
    """P_T(x) (grad E(x + l v) - grad E(x - l v)) / (2 l)"""
    plus = riemannian_gradient(problem, chart, x + l * v)
    minus = riemannian_gradient(problem, chart, x - l * v)
    return chart.project_tangent(x, (plus - minus) / (2.0 * l))


def exact_hess_vec(problem: BaseProblem, chart: ManifoldChart, x: np.ndarray,
                   v: np.ndarray, euclid_grad: Optional[np.ndarray] = None) -> np.ndarray:
    g = problem.grad(x) if euclid_grad is None else euclid_grad
    return chart.riemannian_hess_vec(x, v, g, problem.hess_vec(x, v), check=False)


def hessian_operator(problem: BaseProblem, chart: ManifoldChart, x: np.ndarray,
                     mode: HessianMode = HessianMode.EXACT,
                     dimer_l: float = 1e-3) -> Callable[[np.ndarray], np.ndarray]:
    """Tangent Hessian action at x as a single-argument callable"""
    if HessianMode(mode) == HessianMode.EXACT:
        g = problem.grad(x)
        return lambda v: exact_hess_vec(problem, chart, x, v, g)
    return lambda v: dimer_hess_vec(problem, chart, x, v, dimer_l)


# ----------------------------------------------------------------------
# discrete iteration
# ----------------------------------------------------------------------

def reflected_direction(space, frame: np.ndarray, rgrad: np.ndarray) -> np.ndarray:
    """-(I - 2 sum v_i v_i^T) rgrad"""
    if len(frame) == 0:
        return -rgrad
    coef = space.inner_many(frame, rgrad)
    return -(rgrad - 2.0 * (coef @ frame))


def deflated_update(space, frame: np.ndarray, hv: np.ndarray) -> np.ndarray:
    """
    Rows d_i = -u_i + <u_i, v_i> v_i + sum_{j<i} 2 <u_i, v_j> v_j.
    """
    d = np.empty_like(frame)
    for i in range(len(frame)):
        u = hv[i]
        di = -u + space.inner(u, frame[i]) * frame[i]
        for j in range(i):
            di = di + 2.0 * space.inner(u, frame[j]) * frame[j]
        d[i] = di
    return d


def _frame_step(problem, chart, config: SearchConfig, x: np.ndarray, frame: np.ndarray) -> np.ndarray:
    space = chart.space
    for _ in range(config.n_v):
        op = hessian_operator(problem, chart, x, config.hessian, config.dimer_l)
        hv = np.array([op(v) for v in frame])
        trial = frame + config.beta * deflated_update(space, frame, hv)
        trial = np.array([chart.project_tangent(x, v) for v in trial])
        frame = gram_schmidt(space, trial)
    return frame


def step(problem: BaseProblem, chart: ManifoldChart, config: SearchConfig,
         state: SearchState, rgrad: Optional[np.ndarray] = None) -> SearchState:
    """
    One k-CHiSD iteration.

    x' = R_x(alpha g); every v_i is transported along alpha g, then the frame
    takes n_v deflated Hessian steps at x' and is re-orthonormalized.
    Raises RankDeficiencyError if the frame collapses.
    """
    x = state.x
    if rgrad is None:
        rgrad = riemannian_gradient(problem, chart, x)
    eta = config.alpha * reflected_direction(chart.space, state.frame, rgrad)
    x_new = chart.retract(x, eta)
    frame = state.frame
    if len(frame):
        frame = _frame_step(problem, chart, config, x_new, chart.transport_frame(x, eta, frame))
    chart.check_feasible(x_new, config.feasibility_tol)
    return SearchState(x_new, frame, state.iter + 1, chart.space.norm(rgrad))


def run(problem: BaseProblem, chart: ManifoldChart, config: SearchConfig,
        init: SearchState) -> SearchOutcome:
    """Iterate step() until the Riemannian gradient norm drops below grad_tol"""
    if init.k != config.k:
        raise PreconditionError(f"frame has {init.k} vectors but the target index is {config.k}")
    chart.check_feasible(init.x, config.feasibility_tol)
    space = chart.space
    state = SearchState(np.array(init.x, dtype=float), np.array(init.frame, dtype=float),
                        init.iter, init.last_grad_norm)
    trace = []
    status = SearchStatus.MAX_ITER
    message = ""
    gnorm = float("inf")

    while True:
        try:
            rgrad = riemannian_gradient(problem, chart, state.x)
        except SingularityError as e:
            status, message = SearchStatus.DIVERGED, str(e)
            break
        gnorm = space.norm(rgrad)
        if not (np.isfinite(gnorm) and np.all(np.isfinite(state.x))):
            status, message = SearchStatus.DIVERGED, "non-finite state"
            break
        if gnorm <= config.grad_tol:
            status = SearchStatus.CONVERGED
            break
        if state.iter >= config.max_iter:
            status = SearchStatus.MAX_ITER
            break
        try:
            energy = problem.energy(state.x)
        except SingularityError as e:
            status, message = SearchStatus.DIVERGED, str(e)
            break
        if not energy < config.energy_cap:
            status = SearchStatus.DIVERGED
            message = f"energy {energy:.3e} above cap" if np.isfinite(energy) else "non-finite energy"
            break
        if state.iter % config.log_every == 0:
            logger.debug("k=%d iter=%d E=%.10f |grad|=%.3e", config.k, state.iter, energy, gnorm)
        if config.trace_every and state.iter % config.trace_every == 0:
            trace.append((state.iter, problem.energy(state.x), gnorm))
        try:
            state = step(problem, chart, config, state, rgrad)
        except RankDeficiencyError as e:
            status, message = SearchStatus.RANK_LOSS, str(e)
            break
        except SingularityError as e:
            status, message = SearchStatus.DIVERGED, str(e)
            break

    state.last_grad_norm = gnorm
    try:
        energy = problem.energy(state.x)
    except SingularityError:
        energy = float("nan")
    if not np.isfinite(energy) and status == SearchStatus.CONVERGED:
        status, message = SearchStatus.DIVERGED, "non-finite energy"
    logger.info("%d-CHiSD %s after %d iterations (E=%.10f, |grad|=%.3e)",
                config.k, status.value, state.iter, energy, gnorm)
    return SearchOutcome(status, state, float(energy), float(gnorm), state.iter, trace, message)


# ----------------------------------------------------------------------
# continuous dynamics and linear stability
# ----------------------------------------------------------------------

def _normal_solve(chart: ManifoldChart, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """A (A^T A)^-1 rhs"""
    a = chart.constraint_grads(x)
    return scipy.linalg.cho_solve(chart._gram_factor(a), rhs) @ a


def chisd_vector_field(problem: BaseProblem, chart: ManifoldChart, k: int,
                       mu: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    """
    Right-hand side of the k-CHiSD ODE on the stacked vector (x, v_1, ..., v_k).

    With mu > 0 the x-equation gains the penalty -mu sum_l c_l(x) grad c_l(x)
    that pulls drifting points back onto the constraint set.
    """
    space = chart.space
    d = space.dim

    def field_fn(z: np.ndarray) -> np.ndarray:
        x = z[:d]
        vs = z[d:].reshape(k, d)
        g = problem.grad(x)
        rgrad = chart.project_tangent(x, g)
        xdot = reflected_direction(space, vs, rgrad)
        if chart.m and mu:
            xdot = xdot - mu * (chart.constraint_eval(x) @ chart.constraint_grads(x))
        out = [xdot]
        curv = chart.constraint_hess_vec(x, xdot) if chart.m else None
        for i in range(k):
            pv = chart.project_tangent(x, vs[i])
            hv = chart.riemannian_hess_vec(x, pv, g, problem.hess_vec(x, pv), check=False)
            vdot = -hv + space.inner(vs[i], hv) * vs[i]
            for j in range(i):
                vdot = vdot + 2.0 * space.inner(vs[j], hv) * vs[j]
            if chart.m:
                vdot = vdot - _normal_solve(chart, x, space.inner_many(curv, vs[i]))
            out.append(vdot)
        return np.concatenate(out)

    return field_fn


def stability_spectrum(problem: BaseProblem, chart: ManifoldChart, k: int,
                       x_star: np.ndarray, frame_star: np.ndarray, mu: float = 1.0,
                       grad_tol: float = 1e-6, fd_step: float = STABILITY_FD_STEP) -> np.ndarray:
    """
    Eigenvalues of the Jacobian of the penalized CHiSD at (x*, v*_1..v*_k),
    assembled column by column with central differences. Sorted by real part.
    """
    d = chart.space.dim
    frame_star = np.asarray(frame_star, dtype=float).reshape(k, d)
    if (k + 1) * d > STABILITY_MAX_DOF:
        raise PreconditionError(f"{(k + 1) * d} degrees of freedom exceed the dense limit {STABILITY_MAX_DOF}")
    gnorm = chart.space.norm(riemannian_gradient(problem, chart, x_star))
    if gnorm > grad_tol:
        raise PreconditionError(f"x* is not stationary (|grad E| = {gnorm:.3e})")

    rhs = chisd_vector_field(problem, chart, k, mu)
    z0 = np.concatenate([np.asarray(x_star, dtype=float), frame_star.ravel()])
    n = len(z0)
    jac = np.empty((n, n))
    for col in range(n):
        dz = np.zeros(n)
        dz[col] = fd_step
        jac[:, col] = (rhs(z0 + dz) - rhs(z0 - dz)) / (2.0 * fd_step)
    eig = scipy.linalg.eigvals(jac)
    return eig[np.argsort(eig.real, kind="stable")]
