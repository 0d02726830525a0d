"""
Bose-Einstein condensate pack

Stationary 2D Gross-Pitaevskii energy

    E(phi) = int 1/2 |grad phi|^2 + V |phi|^2 + beta/2 |phi|^4

on the truncated square [-M, M]^2 with homogeneous Dirichlet boundary,
discretized by the five-point stencil on a vertex-centred grid. Complex
fields are stored as interleaved (re, im) float64 pairs so the dynamics see a
real Hilbert space with <a, b> = h^2 sum Re(a conj(b)).
"""

import io
import zipfile
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import logging

import numpy as np
from scipy.optimize import brentq

from saddle_scout import artifacts
from saddle_scout.errors import PreconditionError
from saddle_scout.geometry.manifold import RetractionKind, SphereChart, TransportKind
from saddle_scout.geometry.space import RealSpace
from saddle_scout.problems.base import BaseProblem

logger = logging.getLogger('SaddleScout.BEC')

FIELD_KEYS = {"M", "N", "endian", "values"}
ENDIAN_TAG = "LE"
PGM_MAXVAL = 65535
# where the first upward launch seeds its vortex, as a fraction of sqrt(2 mu)
VORTEX_SEED_RADIUS = 0.8


@dataclass(frozen=True)
class Grid2D:
    """
    Uniform grid on [-M, M]^2 split into `intervals` cells per axis.

    Unknowns live on the (intervals - 1)^2 interior vertices; the boundary
    vertices carry the Dirichlet zero. `intervals` must be even so the origin
    is a grid node. N counts intervals, not nodes: N = 128 gives 127^2
    unknowns per component.
    """
    half_width: float
    intervals: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError(f"half width must be positive, got {self.half_width}")
        if self.intervals < 4 or self.intervals % 2:
            raise ValueError(f"interval count must be even and >= 4, got {self.intervals}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.intervals

    @property
    def nodes(self) -> int:
        """Interior nodes per axis"""
        return self.intervals - 1

    @property
    def dim(self) -> int:
        return 2 * self.nodes * self.nodes

    @property
    def center(self) -> int:
        return self.intervals // 2 - 1

    def axis(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(1, self.intervals)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """X, Y arrays with rows indexed by y and columns by x"""
        a = self.axis()
        return np.meshgrid(a, a, indexing="xy")

    def space(self) -> RealSpace:
        return RealSpace.uniform(self.dim, self.h * self.h)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Five-point Laplacian with zero padding outside the interior"""
        out = -4.0 * u
        out[1:, :] += u[:-1, :]
        out[:-1, :] += u[1:, :]
        out[:, 1:] += u[:, :-1]
        out[:, :-1] += u[:, 1:]
        return out / (self.h * self.h)

    def to_complex(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float).reshape(self.nodes, self.nodes, 2)
        return v[..., 0] + 1j * v[..., 1]

    def to_real(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex).reshape(self.nodes, self.nodes)
        return np.stack([z.real, z.imag], axis=-1).ravel()

    def describe(self) -> Dict[str, Any]:
        return {"M": self.half_width, "N": self.intervals, "h": self.h, "nodes": self.nodes}


@dataclass
class WaveField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.dim,):
            raise ValueError(f"field needs {self.grid.dim} real entries, got {self.values.size}")

    @classmethod
    def from_complex(cls, grid: Grid2D, z: np.ndarray) -> "WaveField":
        return cls(grid, grid.to_real(z))

    def complex(self) -> np.ndarray:
        return self.grid.to_complex(self.values)

    def density(self) -> np.ndarray:
        return np.abs(self.complex()) ** 2

    def mass(self) -> float:
        """h^2 sum |phi|^2"""
        return float(self.grid.h ** 2 * np.sum(self.density()))

    def normalized(self) -> "WaveField":
        mass = self.mass()
        if mass <= 0:
            raise PreconditionError("cannot normalize a zero field")
        return WaveField(self.grid, self.values / np.sqrt(mass))


def harmonic_potential(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return 0.5 * (x * x + y * y)


def quarter_turn(z: np.ndarray) -> np.ndarray:
    """f(x, y) -> f(y, -x) on the interior nodes; maps the function x to y"""
    return z.T[:, ::-1]


# ----------------------------------------------------------------------
# initial states
# ----------------------------------------------------------------------

def gaussian_state(grid: Grid2D) -> WaveField:
    """Ground state of the linear harmonic trap, E = 1"""
    x, y = grid.mesh()
    return WaveField.from_complex(grid, np.exp(-0.5 * (x * x + y * y))).normalized()


def vortex_state(grid: Grid2D, winding: int = 1) -> WaveField:
    """Central vortex eigenstate (x + iy)^|w| e^{-r^2/2} of the linear trap, E = 1 + |w|"""
    x, y = grid.mesh()
    z = (x + 1j * np.sign(winding) * y) ** abs(winding) * np.exp(-0.5 * (x * x + y * y))
    return WaveField.from_complex(grid, z).normalized()


def thomas_fermi_state(grid: Grid2D, beta: float, potential: np.ndarray) -> WaveField:
    """sqrt(max(mu - V, 0)/beta) with mu fixed by normalization; Gaussian when beta <= 0"""
    if beta <= 0:
        return gaussian_state(grid)
    w = grid.h ** 2

    def excess(mu):
        return w * np.sum(np.maximum(mu - potential, 0.0)) / beta - 1.0

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    mu = brentq(excess, 0.0, hi, xtol=1e-14)
    logger.debug("Thomas-Fermi chemical potential %.6f", mu)
    return WaveField.from_complex(grid, np.sqrt(np.maximum(mu - potential, 0.0) / beta)).normalized()


# ----------------------------------------------------------------------
# problem
# ----------------------------------------------------------------------

class BecProblem(BaseProblem):
    """GP energy on the L2 unit sphere of a Grid2D"""

    name = "bec"

    def __init__(self, grid: Grid2D, beta: float = 300.0,
                 potential: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
                 guess: str = "tf"):
        self.grid = grid
        self.beta = float(beta)
        self.potential_fn = potential or harmonic_potential
        self.guess = guess
        super().__init__()

    def _setup(self):
        x, y = self.grid.mesh()
        self.potential = np.asarray(self.potential_fn(x, y), dtype=float)
        if not np.all(np.isfinite(self.potential)):
            raise PreconditionError("trap potential must be finite on the grid")
        self._space = self.grid.space()

    @property
    def space(self):
        return self._space

    def field(self, x: np.ndarray) -> WaveField:
        return WaveField(self.grid, x)

    def energy(self, x):
        z = self.grid.to_complex(x)
        dens = np.abs(z) ** 2
        kinetic = 0.5 * np.sum(np.real(np.conj(z) * -self.grid.laplacian(z)))
        trap = np.sum(self.potential * dens)
        interaction = 0.5 * self.beta * np.sum(dens * dens)
        return float(self.grid.h ** 2 * (kinetic + trap + interaction))

    def grad(self, x):
        z = self.grid.to_complex(x)
        g = -self.grid.laplacian(z) + 2.0 * self.potential * z + 2.0 * self.beta * np.abs(z) ** 2 * z
        return self.grid.to_real(g)

    def hess_vec(self, x, eta):
        # real-linear, not complex-linear: the conj(eta) term
        z = self.grid.to_complex(x)
        e = self.grid.to_complex(eta)
        nonlinear = 2.0 * np.abs(z) ** 2 * e + z * z * np.conj(e)
        hv = -self.grid.laplacian(e) + 2.0 * self.potential * e + 2.0 * self.beta * nonlinear
        return self.grid.to_real(hv)

    def chemical_potential(self, x) -> float:
        dens = np.abs(self.grid.to_complex(x)) ** 2
        return self.energy(x) + 0.5 * self.beta * self.grid.h ** 2 * float(np.sum(dens * dens))

    def build_chart(self, retraction=RetractionKind.EXPONENTIAL, transport=TransportKind.PARALLEL):
        return SphereChart(self._space, retraction, transport)

    def initial_point(self, kind=None):
        kind = kind or self.guess
        if kind == "tf":
            return thomas_fermi_state(self.grid, self.beta, self.potential).values
        if kind == "gaussian":
            return gaussian_state(self.grid).values
        if kind == "vortex":
            return vortex_state(self.grid).values
        raise PreconditionError(f"unknown BEC guess {kind!r}")

    def default_search(self):
        return {"alpha": 1e-6, "beta": 1e-3, "dimer_l": 1e-4, "grad_tol": 1e-5,
                "max_iter": 200000, "eps": 1e-1, "hessian": "dimer",
                "upward_signs": "plus"}

    def perturbation_scale(self, x):
        return self._space.norm(x)

    def upward_perturbation(self, x, direction, index):
        """
        Leaving a minimum, combine the launch eigenvector v with its quarter
        turn as v + i rot(v). For the degenerate dipole pair of a radial
        ground state this is (x + iy) times the profile, a +1 phase winding.
        The step length puts the seeded vortex at VORTEX_SEED_RADIUS times
        the Thomas-Fermi radius sqrt(2 mu).
        """
        if index != 0:
            return None
        v = self.grid.to_complex(direction)
        d = self.grid.to_real(v + 1j * quarter_turn(v))
        d = d - (self._space.inner(x, d) / self._space.inner(x, x)) * x
        size = self._space.norm(d)
        if size <= 1e-8 * self._space.norm(direction):
            return None
        dens = np.abs(self.grid.to_complex(x)) ** 2
        X, Y = self.grid.mesh()
        rms = np.sqrt(np.sum((X * X + Y * Y) * dens) / np.sum(dens))
        mu = self.chemical_potential(x)
        r_seed = VORTEX_SEED_RADIUS * np.sqrt(2.0 * max(mu, 0.0))
        if r_seed <= 0:
            return None
        t = np.arctan(rms / r_seed)
        logger.debug("chiral launch: vortex seeded at r=%.3f (rms radius %.3f)", r_seed, rms)
        return (t / size) * d

    def eigensolver_method(self):
        return "lanczos"

    def aligned_distance(self, x, y):
        """min over global phase and quarter-turn rotations of the L2 distance"""
        a = self.grid.to_complex(x)
        b = self.grid.to_complex(y)
        w = self.grid.h ** 2
        na = w * np.sum(np.abs(a) ** 2)
        nb = w * np.sum(np.abs(b) ** 2)
        best = np.inf
        for k in range(4):
            overlap = abs(w * np.sum(np.rot90(a, k) * np.conj(b)))
            best = min(best, max(na + nb - 2.0 * overlap, 0.0))
        return float(np.sqrt(best))

    def describe(self):
        info = super().describe()
        info.update(self.grid.describe())
        info["beta"] = self.beta
        info["guess"] = self.guess
        return info

    def solution_summary(self, x):
        field = self.field(x)
        dens = field.density()
        peak = float(dens.max())
        c = self.grid.center
        vortices = count_vortices(self, x)
        return {
            "mu": self.chemical_potential(x),
            "mass": field.mass(),
            "central_density_ratio": float(dens[c, c] / peak) if peak > 0 else 0.0,
            "vortices": len(vortices),
            "net_winding": int(sum(v[2] for v in vortices)),
        }

    def solution_payload(self, x):
        return None

    def export_solution(self, x, directory, stem):
        field = self.field(x)
        paths = {"field": f"{directory}/{stem}.npz", "density": f"{directory}/{stem}.pgm"}
        save_field(field, paths["field"])
        export_density(field, paths["density"])
        return paths


# ----------------------------------------------------------------------
# diagnostics and file formats
# ----------------------------------------------------------------------

def _wrap(d: np.ndarray) -> np.ndarray:
    """Phase difference in [-pi, pi], odd in d so shared plaquette edges cancel"""
    return np.angle(np.exp(1j * d))


def count_vortices(problem: BecProblem, x: np.ndarray, region: float = 0.9) -> List[Tuple[float, float, int]]:
    """
    Phase windings around grid plaquettes inside the condensate.

    Only plaquettes whose centre satisfies V < region * mu are inspected;
    outside the bulk the phase is noise. Returns (x, y, winding) per vortex.
    """
    grid = problem.grid
    phase = np.angle(grid.to_complex(x))
    circulation = (_wrap(phase[:-1, 1:] - phase[:-1, :-1])
                   + _wrap(phase[1:, 1:] - phase[:-1, 1:])
                   + _wrap(phase[1:, :-1] - phase[1:, 1:])
                   + _wrap(phase[:-1, :-1] - phase[1:, :-1]))
    winding = np.rint(circulation / (2.0 * np.pi)).astype(int)
    v = problem.potential
    v_center = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:])
    inside = v_center < region * problem.chemical_potential(x)
    axis = grid.axis()
    mid = 0.5 * (axis[:-1] + axis[1:])
    found = []
    for iy, ix in np.argwhere((winding != 0) & inside):
        found.append((float(mid[ix]), float(mid[iy]), int(winding[iy, ix])))
    return found


def save_field(field: WaveField, path: str):
    """npz archive: M, N, endianness tag and the interleaved <f8 (re, im) pairs"""
    buf = io.BytesIO()
    np.savez(buf, M=np.float64(field.grid.half_width), N=np.int32(field.grid.intervals),
             endian=np.array(ENDIAN_TAG), values=np.asarray(field.values, dtype="<f8"))
    artifacts.write_bytes(path, buf.getvalue())


def load_field(path: str) -> WaveField:
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, zipfile.BadZipFile) as e:
        raise ValueError(f"{path}: not a field dump ({e})")
    if not isinstance(archive, np.lib.npyio.NpzFile):
        raise ValueError(f"{path}: not a field dump")
    with archive:
        if set(archive.files) != FIELD_KEYS:
            raise ValueError(f"{path}: not a field dump (keys {sorted(archive.files)})")
        tag = str(archive["endian"])
        if tag != ENDIAN_TAG:
            raise ValueError(f"{path}: unsupported endianness tag {tag!r}")
        grid = Grid2D(float(archive["M"]), int(archive["N"]))
        values = archive["values"].astype(float)
    return WaveField(grid, values)


def density_image(field: WaveField) -> Tuple[np.ndarray, float]:
    """|phi|^2 scaled linearly onto 0..65535; rows follow the y index"""
    dens = field.density()
    peak = float(dens.max())
    if peak <= 0:
        return np.zeros(dens.shape, dtype=np.uint16), 0.0
    return np.rint(dens / peak * PGM_MAXVAL).astype(np.uint16), peak


def export_density(field: WaveField, path: str):
    """Binary 16-bit PGM (P5) plus a key=value sidecar at path + '.meta'"""
    img, peak = density_image(field)
    rows, cols = img.shape
    header = f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii")
    artifacts.write_bytes(path, header + img.astype(">u2").tobytes())
    meta = {"max_density": repr(peak)}
    meta.update(field.grid.describe())
    artifacts.write_key_values(path + ".meta", meta)


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols).astype(int)
