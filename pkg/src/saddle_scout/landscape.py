"""
Solution landscape construction.

Downward search walks a FIFO queue of (point, target index, frame) jobs and
launches lower-index CHiSD runs from both sides of every unstable direction.
Upward search walks a stack and launches higher-index runs from a stable
direction, counting zero modes as unstable. Every converged run is classified
and passed through dedup_insert, the single serialization point when branches
run on a worker pool.
"""

import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import logging

import numpy as np

from saddle_scout.dynamics import (
    HessianMode,
    SearchConfig,
    SearchOutcome,
    SearchState,
    hessian_operator,
    riemannian_gradient,
    run,
)
from saddle_scout.eigensolver import ZERO_TOL, SpectrumResult, smallest_eigenpairs
from saddle_scout.errors import PreconditionError, SaddleScoutError
from saddle_scout.geometry.manifold import ManifoldChart
from saddle_scout.problems.base import BaseProblem

logger = logging.getLogger('SaddleScout.Landscape')

ENERGY_RTOL = 1e-6
DISTANCE_TOL = 1e-4
NEAR_MISS_TOL = 1e-2


class UpwardSchedule(str, Enum):
    ZERO_MODE = "zero-mode"
    EXHAUSTIVE = "exhaustive"


@dataclass
class StationaryPoint:
    id: int
    x: Optional[np.ndarray]
    energy: float
    index: int
    n_zero: int
    spectrum: np.ndarray
    grad_norm: float = 0.0
    provenance: Optional[Tuple[int, int, int]] = None
    frame: Optional[np.ndarray] = field(default=None, repr=False)
    fingerprint: Optional[np.ndarray] = field(default=None, repr=False)
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def to_dict(self, problem: Optional[BaseProblem] = None) -> Dict[str, Any]:
        out = {
            "id": self.id,
            "energy": float(self.energy),
            "index": self.index,
            "n_zero": self.n_zero,
            "grad_norm": float(self.grad_norm),
            "spectrum": [float(v) for v in self.spectrum],
            "provenance": None if self.provenance is None else list(self.provenance),
            "summary": self.summary,
        }
        if problem is not None and self.x is not None:
            out["coordinates"] = problem.solution_payload(self.x)
        if self.artifacts:
            out["artifacts"] = dict(self.artifacts)
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any], problem: Optional[BaseProblem] = None) -> "StationaryPoint":
        x = None
        if problem is not None and data.get("coordinates") is not None:
            x = problem.load_payload(data["coordinates"])
        prov = data.get("provenance")
        return cls(
            id=int(data["id"]),
            x=x,
            energy=float(data["energy"]),
            index=int(data["index"]),
            n_zero=int(data.get("n_zero", 0)),
            spectrum=np.asarray(data.get("spectrum", []), dtype=float),
            grad_norm=float(data.get("grad_norm", 0.0)),
            provenance=None if prov is None else tuple(prov),
            summary=dict(data.get("summary", {})),
            artifacts=dict(data.get("artifacts", {})),
        )


@dataclass
class SearchJob:
    source: int
    m: int
    frame: np.ndarray


class Landscape:
    """Deduplicated solution set S plus parent -> child relations R"""

    def __init__(self):
        self.solutions: List[StationaryPoint] = []
        self.relations: List[Tuple[int, int]] = []
        self.ascents: List[Tuple[int, int]] = []
        self.near_misses: List[Dict[str, Any]] = []
        self.failures: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def __len__(self):
        return len(self.solutions)

    def get(self, sid: int) -> StationaryPoint:
        return self.solutions[sid]

    def add_relation(self, parent: int, child: int):
        if parent == child:
            return
        with self._lock:
            if (parent, child) not in self.relations:
                self.relations.append((parent, child))

    def add_ascent(self, low: int, high: int):
        if low == high:
            return
        with self._lock:
            if (low, high) not in self.ascents:
                self.ascents.append((low, high))

    def record_failure(self, **info):
        with self._lock:
            self.failures.append(info)

    def indices(self) -> List[int]:
        return [p.index for p in self.solutions]

    def to_dict(self, problem: Optional[BaseProblem] = None) -> Dict[str, Any]:
        return {
            "problem": problem.describe() if problem is not None else None,
            "solutions": [p.to_dict(problem) for p in self.solutions],
            "relations": [list(r) for r in self.relations],
            "ascents": [list(a) for a in self.ascents],
            "near_misses": self.near_misses,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], problem: Optional[BaseProblem] = None) -> "Landscape":
        land = cls()
        land.solutions = [StationaryPoint.from_dict(s, problem) for s in data.get("solutions", [])]
        land.relations = [tuple(r) for r in data.get("relations", [])]
        land.ascents = [tuple(a) for a in data.get("ascents", [])]
        land.near_misses = list(data.get("near_misses", []))
        land.failures = list(data.get("failures", []))
        return land


def dedup_insert(landscape: Landscape, candidate: StationaryPoint, problem: BaseProblem,
                 energy_rtol: float = ENERGY_RTOL, dist_tol: float = DISTANCE_TOL,
                 grad_tol: Optional[float] = None) -> Tuple[bool, int]:
    """
    Atomic check-and-insert.

    With grad_tol set, a candidate whose grad_norm exceeds it is not a
    stationary point and raises PreconditionError.

    A candidate equals a stored solution iff the energies agree to
    energy_rtol * max(1, |E|), index and zero-mode count agree and either the
    symmetry-aligned distance or the fingerprint distance is within dist_tol.
    Returns (inserted, canonical id).
    """
    if grad_tol is not None and not candidate.grad_norm <= grad_tol:
        raise PreconditionError(f"not stationary: |grad E| = {candidate.grad_norm:.3e} > {grad_tol:.1e}")
    with landscape._lock:
        for sol in landscape.solutions:
            if sol.index != candidate.index or sol.n_zero != candidate.n_zero:
                continue
            if abs(sol.energy - candidate.energy) > energy_rtol * max(1.0, abs(candidate.energy)):
                continue
            if sol.fingerprint is not None and candidate.fingerprint is not None \
                    and len(sol.fingerprint) == len(candidate.fingerprint) \
                    and np.max(np.abs(sol.fingerprint - candidate.fingerprint)) <= dist_tol:
                return False, sol.id
            dist = problem.aligned_distance(sol.x, candidate.x)
            if dist <= dist_tol:
                return False, sol.id
            if dist <= NEAR_MISS_TOL:
                landscape.near_misses.append({"matched": sol.id, "energy": float(candidate.energy),
                                              "distance": float(dist)})
        candidate.id = len(landscape.solutions)
        landscape.solutions.append(candidate)
        return True, candidate.id


class LandscapeBuilder:
    """
    Drives classification, downward and upward searches for one problem.

    Serial execution (parallelism=1) is the deterministic default; with a
    worker pool the branch runs of one job execute concurrently and their
    results are inserted in branch order, so S and R come out the same.
    """

    def __init__(self, problem: BaseProblem, chart: ManifoldChart, search: SearchConfig,
                 eps: float = 1e-2, k_max: int = 4, depth_cap: Optional[int] = None,
                 seed: int = 0, eig_method: Optional[str] = None, eig_tol: float = 1e-8,
                 zero_tol: float = ZERO_TOL, parallelism: int = 1,
                 upward_schedule: UpwardSchedule = UpwardSchedule.ZERO_MODE,
                 upward_signs: str = "both", classify_k: int = 4):
        self.problem = problem
        self.chart = chart
        self.search = search
        self.eps = eps
        self.k_max = k_max
        self.depth_cap = depth_cap
        self.seed = seed
        self.eig_method = eig_method or problem.eigensolver_method()
        self.eig_tol = eig_tol
        self.zero_tol = zero_tol
        self.parallelism = max(1, int(parallelism))
        self.upward_schedule = UpwardSchedule(upward_schedule)
        if upward_signs not in ("both", "plus"):
            raise ValueError(f"upward_signs must be 'both' or 'plus', got {upward_signs!r}")
        self.upward_signs = upward_signs
        self.classify_k = classify_k

    # ------------------------------------------------------------------
    # classification
    # ------------------------------------------------------------------

    def spectrum(self, x: np.ndarray, K: int) -> SpectrumResult:
        op = hessian_operator(self.problem, self.chart, x, HessianMode.EXACT)
        return smallest_eigenpairs(op, self.chart, x, min(K, self.chart.tangent_dim),
                                   tol=self.eig_tol, seed=self.seed, method=self.eig_method)

    def classify(self, x: np.ndarray) -> Tuple[int, int, SpectrumResult]:
        """Morse index and zero-mode count, growing K until a positive eigenvalue shows up"""
        t = self.chart.tangent_dim
        K = min(t, self.classify_k)
        while True:
            spec = self.spectrum(x, K)
            index, n_zero = spec.count(self.zero_tol)
            if np.any(spec.eigenvalues > spec.zero_threshold(self.zero_tol)) or K >= t:
                return index, n_zero, spec
            K = min(t, 2 * K)

    def make_point(self, x: np.ndarray, provenance=None) -> StationaryPoint:
        index, n_zero, spec = self.classify(x)
        gnorm = self.chart.space.norm(riemannian_gradient(self.problem, self.chart, x))
        return StationaryPoint(
            id=-1, x=np.array(x, dtype=float), energy=self.problem.energy(x),
            index=index, n_zero=n_zero, spectrum=spec.eigenvalues, grad_norm=gnorm,
            provenance=provenance, frame=spec.eigenvectors,
            fingerprint=self.problem.fingerprint(x),
            summary=self.problem.solution_summary(x),
        )

    def frame_for(self, point: StationaryPoint, size: int) -> Optional[np.ndarray]:
        """Leading `size` eigenvectors at point, recomputing with a larger K if needed"""
        if size > self.chart.tangent_dim:
            return None
        if point.frame is None or len(point.frame) < size:
            point.frame = self.spectrum(point.x, size).eigenvectors
        return point.frame[:size]

    # ------------------------------------------------------------------
    # single runs
    # ------------------------------------------------------------------

    def run_from(self, x: np.ndarray, k: int, frame=None) -> SearchOutcome:
        state = SearchState.start(self.chart, x, frame)
        return run(self.problem, self.chart, self.search.with_index(k), state)

    def find_saddle(self, x: np.ndarray, k: int) -> Tuple[SearchOutcome, Optional[StationaryPoint]]:
        """k-CHiSD from x with the k lowest Hessian eigenvectors at x as the initial frame"""
        frame = self.spectrum(x, k).eigenvectors if k > 0 else None
        outcome = self.run_from(x, k, frame)
        if not outcome.converged:
            return outcome, None
        return outcome, self.make_point(outcome.state.x)

    def relax(self, x: np.ndarray) -> Tuple[SearchOutcome, Optional[StationaryPoint]]:
        return self.find_saddle(x, 0)

    def seed_landscape(self, point: StationaryPoint) -> Landscape:
        land = Landscape()
        dedup_insert(land, point, self.problem, grad_tol=self.search.grad_tol)
        return land

    def _branch(self, x: np.ndarray, direction: np.ndarray, sign: int, m: int, frame: np.ndarray,
                launch: Optional[np.ndarray] = None):
        """Perturb x along sign*direction (or sign*launch), carry the frame over, run m-CHiSD"""
        if launch is None:
            launch = self.eps * self.problem.perturbation_scale(x) * direction
        eta = sign * launch
        start = self.chart.retract(x, eta)
        moved = self.chart.transport_frame(x, eta, frame) if len(frame) else frame
        try:
            outcome = self.run_from(start, m, moved)
            point = self.make_point(outcome.state.x) if outcome.converged else None
            return outcome, point, None
        except SaddleScoutError as e:
            return None, None, e

    def _run_branches(self, specs):
        if self.parallelism == 1 or len(specs) <= 1:
            return [self._branch(*s) for s in specs]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(lambda s: self._branch(*s), specs))

    def _settle(self, land: Landscape, parent: StationaryPoint, m: int, j: int, sign: int, result):
        """Insert one branch result; returns the canonical child or None"""
        outcome, point, error = result
        if error is not None or point is None:
            status = "error" if error is not None else outcome.status.value
            logger.warning("branch from %d (m=%d, v_%d, sign %+d) failed: %s",
                           parent.id, m, j, sign, error if error is not None else status)
            info = {"parent": parent.id, "m": m, "direction": j, "sign": sign, "status": status}
            if error is not None:
                info["message"] = str(error)
            elif outcome.message:
                info["message"] = outcome.message
            land.record_failure(**info)
            return None, False
        point.provenance = (parent.id, j, sign)
        inserted, cid = dedup_insert(land, point, self.problem, grad_tol=self.search.grad_tol)
        return land.get(cid), inserted

    # ------------------------------------------------------------------
    # downward search
    # ------------------------------------------------------------------

    def downward_search(self, seed: StationaryPoint, land: Optional[Landscape] = None) -> Landscape:
        if land is None:
            land = self.seed_landscape(seed)
        elif seed.id < 0:
            dedup_insert(land, seed, self.problem, grad_tol=self.search.grad_tol)
        queue = deque()
        if seed.index >= 1:
            queue.append(SearchJob(seed.id, seed.index - 1, self.frame_for(seed, seed.index)))

        while queue:
            job = queue.popleft()
            parent = land.get(job.source)
            m = job.m
            floor = 0 if self.depth_cap is None else max(0, parent.index - self.depth_cap)
            if m >= 1 and m - 1 >= floor:
                queue.append(SearchJob(job.source, m - 1, job.frame))
            k = len(job.frame)
            specs, keys = [], []
            for j in range(1, k + 1):
                skip = min(j, m + 1)
                init = np.array([job.frame[i - 1] for i in range(1, m + 2) if i != skip])
                if len(init) == 0:
                    init = np.zeros((0, self.chart.space.dim))
                for sign in (1, -1):
                    specs.append((parent.x, job.frame[j - 1], sign, m, init))
                    keys.append((j, sign))
            logger.info("downward job: %d-saddle #%d -> %d-CHiSD over %d branches",
                        parent.index, parent.id, m, len(specs))
            for (j, sign), result in zip(keys, self._run_branches(specs)):
                child, inserted = self._settle(land, parent, m, j, sign, result)
                if child is None:
                    continue
                if child.index < parent.index:
                    land.add_relation(parent.id, child.id)
                if inserted and child.index >= 1:
                    queue.append(SearchJob(child.id, child.index - 1, self.frame_for(child, child.index)))
        return land

    # ------------------------------------------------------------------
    # upward search
    # ------------------------------------------------------------------

    def _first_target(self, point: StationaryPoint) -> int:
        return point.index + point.n_zero + 1

    def upward_search(self, seed: StationaryPoint, land: Optional[Landscape] = None) -> List[StationaryPoint]:
        """
        Ascend from seed. From a k-saddle with z zero modes the first target
        index is m = k + z + 1, started from R_x(eps v_m) with frame v_1..v_m,
        unless the problem supplies its own launch step.
        The exhaustive schedule also tries m + 1, ... up to k_max + z.
        """
        if land is None:
            land = self.seed_landscape(seed)
        elif seed.id < 0:
            dedup_insert(land, seed, self.problem, grad_tol=self.search.grad_tol)
        found: List[StationaryPoint] = []
        signs = (1,) if self.upward_signs == "plus" else (1, -1)
        stack = []
        if seed.index < self.k_max:
            stack.append((seed.id, self._first_target(seed)))

        while stack:
            sid, m = stack.pop()
            parent = land.get(sid)
            if self.upward_schedule == UpwardSchedule.EXHAUSTIVE and m < self.k_max + parent.n_zero:
                stack.append((sid, m + 1))
            frame = self.frame_for(parent, m)
            if frame is None:
                logger.warning("cannot launch %d-CHiSD: tangent dimension is %d", m, self.chart.tangent_dim)
                continue
            launch = self.problem.upward_perturbation(parent.x, frame[m - 1], parent.index)
            specs = [(parent.x, frame[m - 1], sign, m, frame, launch) for sign in signs]
            logger.info("upward job: %d-saddle #%d (z=%d) -> %d-CHiSD", parent.index, parent.id, parent.n_zero, m)
            for sign, result in zip(signs, self._run_branches(specs)):
                child, inserted = self._settle(land, parent, m, m, sign, result)
                if child is None:
                    continue
                land.add_ascent(parent.id, child.id)
                if inserted:
                    found.append(child)
                    if child.index < self.k_max:
                        stack.append((child.id, self._first_target(child)))
        return found
