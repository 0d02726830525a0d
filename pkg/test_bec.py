#!/usr/bin/env python3
"""
BEC Test Suite
Linear-trap energies, the chemical potential identity, ground-state
relaxation, vortex detection, field and density files, symmetry-aware
distances and the upward launch from the ground state.
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

import logging
import tempfile

import numpy as np

from saddle_scout.artifacts import read_key_values
from saddle_scout.dynamics import SearchConfig, SearchState, step
from saddle_scout.landscape import LandscapeBuilder
from saddle_scout.problems.bec import (
    PGM_MAXVAL,
    VORTEX_SEED_RADIUS,
    BecProblem,
    Grid2D,
    WaveField,
    count_vortices,
    export_density,
    gaussian_state,
    load_field,
    read_pgm,
    save_field,
    vortex_state,
)

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger('BecTests')

SLOW = os.environ.get("SADDLE_SCOUT_SLOW") == "1"
MU_THOMAS_FERMI_300 = 9.7721


def off_centre_vortex(grid, x0=0.3, y0=0.2):
    x, y = grid.mesh()
    z = ((x - x0) + 1j * (y - y0)) * np.exp(-0.5 * (x * x + y * y))
    return WaveField.from_complex(grid, z).normalized()


def ground_state_builder(intervals=64, beta=300.0, **kwargs):
    problem = BecProblem(Grid2D(8.0, intervals), beta=beta)
    search = SearchConfig(alpha=2e-3, beta=2e-3, dimer_l=1e-4, grad_tol=1e-5,
                          max_iter=200000, hessian="exact")
    return problem, LandscapeBuilder(problem, problem.build_chart(), search, **kwargs)


def test_grid():
    print("\n" + "=" * 80)
    print("TEST 1: Vertex-centred grid")
    print("=" * 80)

    grid = Grid2D(8.0, 128)
    assert grid.h == 0.125
    assert grid.nodes == 127
    assert grid.dim == 2 * 127 * 127
    axis = grid.axis()
    assert axis[grid.center] == 0.0
    assert abs(axis[0] + 8.0 - grid.h) < 1e-12

    for bad in ((8.0, 7), (8.0, 2), (-1.0, 64)):
        try:
            Grid2D(*bad)
            assert False, f"{bad} accepted"
        except ValueError:
            pass

    z = np.arange(grid.nodes * grid.nodes).reshape(grid.nodes, grid.nodes) * (1.0 - 2.0j)
    assert np.array_equal(grid.to_complex(grid.to_real(z)), z)
    logger.info("✓ h=%.3f, %d unknowns", grid.h, grid.dim)


def test_linear_trap_energies():
    """With beta = 0 the trap eigenstates have E = 1 and E = 2"""
    print("\n" + "=" * 80)
    print("TEST 2: Linear harmonic trap energies")
    print("=" * 80)

    problem = BecProblem(Grid2D(8.0, 128), beta=0.0)
    e_gauss = problem.energy(gaussian_state(problem.grid).values)
    e_vortex = problem.energy(vortex_state(problem.grid).values)
    assert abs(e_gauss - 1.0) <= 2e-3, f"Gaussian E={e_gauss:.6f}"
    assert abs(e_vortex - 2.0) <= 5e-3, f"vortex E={e_vortex:.6f}"
    assert abs(problem.chemical_potential(gaussian_state(problem.grid).values) - e_gauss) < 1e-14
    logger.info("✓ E(gauss)=%.6f E(vortex)=%.6f", e_gauss, e_vortex)


def test_chemical_potential_identity():
    """<phi, grad E(phi)> = 2 mu for every field, converged or not"""
    print("\n" + "=" * 80)
    print("TEST 3: Chemical potential identity")
    print("=" * 80)

    problem = BecProblem(Grid2D(8.0, 32), beta=300.0)
    rng = np.random.default_rng(51)
    for x in (problem.initial_point("tf"), problem.initial_point("vortex"),
              WaveField(problem.grid, rng.standard_normal(problem.grid.dim)).normalized().values):
        lhs = problem.space.inner(x, problem.grad(x))
        mu = problem.chemical_potential(x)
        assert abs(lhs - 2.0 * mu) <= 1e-8 * abs(mu), f"{lhs} vs {2 * mu}"
    logger.info("✓ identity holds to round-off")


def test_ground_state():
    print("\n" + "=" * 80)
    print("TEST 4: Ground state relaxation at beta=300")
    print("=" * 80)

    problem, builder = ground_state_builder()
    outcome, p = builder.relax(problem.initial_point("tf"))
    assert outcome.converged, outcome.status.value
    x = outcome.state.x
    mu = problem.chemical_potential(x)
    assert abs(mu - MU_THOMAS_FERMI_300) <= 0.05 * MU_THOMAS_FERMI_300, f"mu={mu:.4f}"
    # mu = E + beta/2 int |phi|^4 is also the Lagrange multiplier: grad E = 2 mu phi
    quartic = 0.5 * problem.beta * problem.grid.h ** 2 * np.sum(problem.field(x).density() ** 2)
    assert abs(mu - (p.energy + quartic)) <= 1e-8 * mu
    assert abs(problem.space.inner(x, problem.grad(x)) - 2.0 * mu) <= 1e-8 * mu
    assert problem.space.norm(problem.grad(x) - 2.0 * mu * x) <= 2e-5
    assert p.index == 0
    # global phase rotation
    assert p.n_zero == 1
    assert abs(problem.field(x).mass() - 1.0) < 1e-10
    assert p.summary["vortices"] == 0
    assert p.summary["central_density_ratio"] > 0.99
    logger.info("✓ ground state E=%.6f mu=%.6f after %d iterations", p.energy, mu, outcome.iterations)


def test_vortex_count():
    print("\n" + "=" * 80)
    print("TEST 5: Vortex detection")
    print("=" * 80)

    problem = BecProblem(Grid2D(8.0, 64), beta=0.0)
    x = off_centre_vortex(problem.grid).values
    vortices = count_vortices(problem, x)
    assert len(vortices) == 1, vortices
    vx, vy, w = vortices[0]
    assert w == 1
    assert abs(vx - 0.3) <= problem.grid.h and abs(vy - 0.2) <= problem.grid.h
    summary = problem.solution_summary(x)
    assert summary["vortices"] == 1 and summary["net_winding"] == 1

    mirrored = off_centre_vortex(problem.grid).complex().conj()
    vortices = count_vortices(problem, problem.grid.to_real(mirrored))
    assert [v[2] for v in vortices] == [-1]
    assert count_vortices(problem, gaussian_state(problem.grid).values) == []
    logger.info("✓ one vortex at (%.3f, %.3f)", vx, vy)


def test_field_files():
    print("\n" + "=" * 80)
    print("TEST 6: Field dumps and density images")
    print("=" * 80)

    grid = Grid2D(4.0, 16)
    field = off_centre_vortex(grid)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "state.npz")
        save_field(field, path)
        back = load_field(path)
        assert back.grid == grid
        assert np.array_equal(back.values, field.values)
        with np.load(path) as archive:
            assert str(archive["endian"]) == "LE"
            assert archive["values"].dtype == np.dtype("<f8")

        bad = os.path.join(tmp, "bad.npz")
        with open(bad, "wb") as f:
            f.write(b"NOTAFIELD" + bytes(32))
        other = os.path.join(tmp, "other.npz")
        np.savez(other, values=field.values)
        for wrong in (bad, other):
            try:
                load_field(wrong)
                assert False, f"{wrong} accepted"
            except ValueError:
                pass

        pgm = os.path.join(tmp, "state.pgm")
        export_density(field, pgm)
        with open(pgm, "rb") as f:
            assert f.read().startswith(f"P5\n{grid.nodes} {grid.nodes}\n65535\n".encode("ascii"))
        img = read_pgm(pgm)
        assert img.shape == (grid.nodes, grid.nodes)
        assert img.max() == PGM_MAXVAL
        meta = read_key_values(pgm + ".meta")
        assert abs(float(meta["max_density"]) - field.density().max()) < 1e-15
        assert meta["N"] == "16"
    logger.info("✓ npz field and 16-bit PGM written and read back")


def test_aligned_distance():
    print("\n" + "=" * 80)
    print("TEST 7: Phase- and rotation-aligned distance")
    print("=" * 80)

    problem = BecProblem(Grid2D(4.0, 16), beta=10.0)
    a = off_centre_vortex(problem.grid).complex()
    for k in range(4):
        b = np.rot90(a, k) * np.exp(0.7j)
        assert problem.aligned_distance(problem.grid.to_real(a), problem.grid.to_real(b)) <= 1e-6
    far = problem.aligned_distance(problem.grid.to_real(a), gaussian_state(problem.grid).values)
    assert far > 0.1
    logger.info("✓ distance to the aligned copy vanishes, distance to the Gaussian is %.3f", far)


def test_chiral_launch():
    """Leaving a minimum, the launch step imprints one +1 vortex on the condensate rim"""
    print("\n" + "=" * 80)
    print("TEST 8: Upward launch from a radial minimum")
    print("=" * 80)

    problem = BecProblem(Grid2D(4.0, 32), beta=0.0)
    chart = problem.build_chart()
    ground = gaussian_state(problem.grid)
    x, y = problem.grid.mesh()
    profile = ground.complex()
    r_seed = VORTEX_SEED_RADIUS * np.sqrt(2.0 * problem.chemical_potential(ground.values))

    for shape in (1j * x, 1j * y, -1j * (x + y), 1j * (2.0 * x - y)):
        v = problem.grid.to_real(shape * profile)
        v /= problem.space.norm(v)
        launch = problem.upward_perturbation(ground.values, v, 0)
        assert chart.tangency_defect(ground.values, launch) <= 1e-12
        for sign in (1, -1):
            start = chart.retract(ground.values, sign * launch)
            vortices = count_vortices(problem, start)
            assert [w for _, _, w in vortices] == [1], vortices
            vx, vy, _ = vortices[0]
            assert abs(np.hypot(vx, vy) - r_seed) <= problem.grid.h, (vx, vy, r_seed)

    assert problem.upward_perturbation(ground.values, v, 2) is None
    logger.info("✓ +1 vortex seeded at r=%.3f for every dipole direction", r_seed)


def test_descent_never_raises_energy():
    print("\n" + "=" * 80)
    print("TEST 9: Energy along 0-CHiSD at small steps")
    print("=" * 80)

    problem = BecProblem(Grid2D(8.0, 32), beta=300.0)
    chart = problem.build_chart()
    for alpha in (1e-6, 1e-4):
        config = SearchConfig(k=0, alpha=alpha, hessian="exact")
        state = SearchState.start(chart, problem.initial_point("tf"))
        energies = [problem.energy(state.x)]
        for _ in range(200):
            state = step(problem, chart, config, state)
            energies.append(problem.energy(state.x))
        rises = np.diff(energies)
        assert np.max(rises) <= 1e-12, f"alpha={alpha}: energy rose by {np.max(rises):.3e}"
        assert energies[-1] < energies[0]
    logger.info("✓ energy non-increasing over 200 steps")


def test_upward_chain():
    """ground -> central vortex -> vortex pair -> three vortices"""
    print("\n" + "=" * 80)
    print("TEST 10: Upward chain from the ground state")
    print("=" * 80)

    if not SLOW:
        logger.info("skipped (set SADDLE_SCOUT_SLOW=1)")
        return
    problem, builder = ground_state_builder(eps=0.1, k_max=4, upward_signs="plus")
    _, ground = builder.relax(problem.initial_point("tf"))
    assert (ground.index, ground.n_zero) == (0, 1)
    land = builder.seed_landscape(ground)
    builder.upward_search(ground, land)

    def first_ascent(point):
        highs = [high for low, high in land.ascents if low == point.id]
        assert highs, f"no ascent from #{point.id}: {land.failures}"
        return land.get(highs[0])

    vortex = first_ascent(ground)
    assert (vortex.index, vortex.n_zero) == (2, 1), (vortex.index, vortex.n_zero)
    assert vortex.summary["central_density_ratio"] < 0.1
    assert vortex.summary["net_winding"] == 1
    assert vortex.energy > ground.energy

    pair = first_ascent(vortex)
    assert (pair.index, pair.n_zero) == (3, 2), (pair.index, pair.n_zero)
    assert pair.summary["vortices"] == 2

    top = first_ascent(pair)
    assert top.index == 4
    assert ground.energy < vortex.energy < pair.energy < top.energy
    logger.info("✓ E: %.4f -> %.4f -> %.4f -> %.4f",
                ground.energy, vortex.energy, pair.energy, top.energy)


def run_all_tests():
    """Run all tests and report results"""
    print("\n" + "#" * 80)
    print("# BEC - TEST SUITE")
    print("#" * 80)

    tests = [
        ("Grid", test_grid),
        ("Linear trap energies", test_linear_trap_energies),
        ("Chemical potential identity", test_chemical_potential_identity),
        ("Ground state", test_ground_state),
        ("Vortex count", test_vortex_count),
        ("Field files", test_field_files),
        ("Aligned distance", test_aligned_distance),
        ("Chiral launch", test_chiral_launch),
        ("Monotone descent", test_descent_never_raises_energy),
        ("Upward chain", test_upward_chain),
    ]

    results = []
    for test_name, test_func in tests:
        try:
            test_func()
            results.append((test_name, True))
        except Exception as e:
            logger.error(f"Test '{test_name}' failed: {e}", exc_info=True)
            results.append((test_name, False))

    print("\n" + "=" * 80)
    print("TEST SUMMARY")
    print("=" * 80)
    for test_name, passed in results:
        print(f"{'✅ PASS' if passed else '❌ FAIL'}: {test_name}")
    passed_count = sum(1 for _, passed in results if passed)
    print("=" * 80)
    print(f"TOTAL: {passed_count}/{len(results)} tests passed")
    print("=" * 80)
    return passed_count == len(results)


if __name__ == "__main__":
    success = run_all_tests()
    sys.exit(0 if success else 1)
