#!/usr/bin/env python3
"""
Thomson Problem Test Suite
Closed-form energies of reference configurations, Morse indices of planar
polygons and dipyramids, descents onto minima, gauge symmetries and the
N = 5 solution landscape.
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

import logging
import tempfile

import numpy as np

from saddle_scout.dynamics import SearchConfig
from saddle_scout.errors import PreconditionError, SingularityError
from saddle_scout.landscape import LandscapeBuilder
from saddle_scout.problems.thomson import (
    GAUGE_REFLECTIONS,
    ThomsonProblem,
    distance_fingerprint,
    planar_polygon,
    reflect,
    regular_dipyramid,
    regular_pyramid,
    thomson_energy,
)

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger('ThomsonTests')

SLOW = os.environ.get("SADDLE_SCOUT_SLOW") == "1"

E_PP5 = 6.881910
E_RD5 = 6.474692
E_RD7 = 14.452978
E_MIN9 = 25.759987


def builder_for(n, alpha=1e-2, beta=1e-2, **kwargs):
    problem = ThomsonProblem(n)
    search = SearchConfig(alpha=alpha, beta=beta, grad_tol=1e-6, max_iter=400000, hessian="exact")
    return problem, LandscapeBuilder(problem, problem.build_chart(), search, **kwargs)


def perturbed(chart, x, scale, seed):
    rng = np.random.default_rng(seed)
    return chart.retract(x, scale * chart.random_tangent(x, rng))


def test_reference_energies():
    print("\n" + "=" * 80)
    print("TEST 1: Closed-form energies")
    print("=" * 80)

    assert abs(thomson_energy(planar_polygon(5)) - E_PP5) < 1e-5
    assert abs(thomson_energy(regular_dipyramid(5)) - E_RD5) < 1e-5
    assert abs(thomson_energy(regular_dipyramid(7)) - E_RD7) < 1e-5
    # the optimal square pyramid sits between the minimum and the pentagon
    e_rp = thomson_energy(regular_pyramid(5))
    assert E_RD5 < e_rp < E_PP5
    logger.info("✓ PP(5)=%.6f RD(5)=%.6f RP(5)=%.6f", E_PP5, E_RD5, e_rp)


def test_morse_indices():
    print("\n" + "=" * 80)
    print("TEST 2: Morse indices of reference configurations")
    print("=" * 80)

    for n in (5, 7, 9):
        _, builder = builder_for(n)
        p = builder.make_point(planar_polygon(n))
        assert p.grad_norm < 1e-10
        assert p.index == n - 3, f"PP({n}) index {p.index}"
        assert p.n_zero == 0
        logger.info("✓ PP(%d): index %d", n, p.index)

    _, builder = builder_for(9)
    p = builder.make_point(regular_dipyramid(9))
    assert p.index == 4, f"RD(9) index {p.index}"
    _, builder = builder_for(5)
    assert builder.make_point(regular_dipyramid(5)).index == 0
    logger.info("✓ RD(9): index 4")


def test_descent_to_minimum():
    print("\n" + "=" * 80)
    print("TEST 3: Gradient descent from perturbed saddles")
    print("=" * 80)

    problem, builder = builder_for(9)
    chart = builder.chart
    outcome, p = builder.relax(perturbed(chart, regular_dipyramid(9), 0.05, 41))
    assert outcome.converged, outcome.status.value
    assert p.index == 0
    assert p.energy < thomson_energy(regular_dipyramid(9))
    assert abs(p.energy - E_MIN9) < 1e-5
    x = outcome.state.x
    assert np.allclose(x[:3], [0.0, 0.0, 1.0], atol=1e-14)
    assert abs(x[3]) < 1e-14
    logger.info("✓ N=9 minimum E=%.6f after %d iterations", p.energy, outcome.iterations)

    problem, builder = builder_for(5)
    outcome, p = builder.relax(perturbed(builder.chart, regular_pyramid(5), 0.05, 42))
    assert outcome.converged
    assert p.index == 0
    assert abs(p.energy - E_RD5) < 1e-5
    logger.info("✓ N=5 pyramid relaxes to the dipyramid")


def test_gauge_symmetries():
    print("\n" + "=" * 80)
    print("TEST 4: Gauge reflections")
    print("=" * 80)

    problem = ThomsonProblem(7)
    chart = problem.build_chart()
    x = perturbed(chart, regular_dipyramid(7), 0.2, 43)
    e = problem.energy(x)
    fp = problem.fingerprint(x)
    for signs in GAUGE_REFLECTIONS:
        y = reflect(x, signs)
        assert chart.feasibility(y) <= 1e-14
        assert abs(problem.energy(y) - e) <= 1e-12 * e
        assert np.allclose(distance_fingerprint(y), fp, atol=1e-13)
        assert problem.aligned_distance(x, y) <= 1e-14
    assert problem.aligned_distance(x, regular_dipyramid(7)) > 1e-3
    logger.info("✓ energy and fingerprint invariant under the gauge reflections")


def test_errors_and_seed_file():
    print("\n" + "=" * 80)
    print("TEST 5: Singular configurations and seed files")
    print("=" * 80)

    x = planar_polygon(5).reshape(5, 3)
    x[3] = x[2]
    try:
        thomson_energy(x.ravel())
        assert False, "coincident particles accepted"
    except SingularityError:
        pass
    try:
        ThomsonProblem(5).grad(x.ravel())
        assert False, "coincident particles accepted"
    except SingularityError:
        pass

    try:
        regular_dipyramid(4)
        assert False, "dipyramid with N=4 accepted"
    except PreconditionError:
        pass

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "seed.txt")
        np.savetxt(path, regular_dipyramid(5).reshape(5, 3))
        problem = ThomsonProblem(5, seed_config="file", seed_file=path)
        assert np.allclose(problem.initial_point(), regular_dipyramid(5))

        # a rotated, rescaled copy comes back in the gauge
        q, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        np.savetxt(path, 2.0 * regular_dipyramid(5).reshape(5, 3) @ q.T)
        rotated = ThomsonProblem(5, seed_config="file", seed_file=path).initial_point()
        assert np.allclose(rotated, regular_dipyramid(5), atol=1e-10)
        try:
            ThomsonProblem(6, seed_config="file", seed_file=path).initial_point()
            assert False, "wrong row count accepted"
        except PreconditionError:
            pass
    logger.info("✓ singularities, bad sizes and seed files")


def check_n5_landscape(alpha, beta):
    problem, builder = builder_for(5, alpha=alpha, beta=beta, depth_cap=1)
    seed = builder.make_point(planar_polygon(5))
    land = builder.downward_search(seed)

    e_rp = thomson_energy(regular_pyramid(5))
    by_energy = {}
    for p in land.solutions:
        by_energy.setdefault(round(p.energy, 5), []).append(p)
    assert land.get(0).index == 2
    rp = [p for p in land.solutions if abs(p.energy - e_rp) < 1e-5]
    rd = [p for p in land.solutions if abs(p.energy - E_RD5) < 1e-5]
    assert len(rp) == 1 and rp[0].index == 1, f"states found: {sorted(by_energy)}"
    assert len(rd) == 1 and rd[0].index == 0
    assert (0, rp[0].id) in land.relations
    assert (rp[0].id, rd[0].id) in land.relations
    for parent, child in land.relations:
        assert land.get(parent).index > land.get(child).index
    return land


def test_n5_landscape():
    """Pentagon -> square pyramid -> dipyramid, one level per downward step"""
    print("\n" + "=" * 80)
    print("TEST 6: N=5 solution landscape")
    print("=" * 80)

    land = check_n5_landscape(1e-2, 1e-2)
    logger.info("✓ %d states, relations %s", len(land), sorted(land.relations))


def test_n5_landscape_default_steps():
    print("\n" + "=" * 80)
    print("TEST 7: N=5 landscape with the default step sizes")
    print("=" * 80)

    if not SLOW:
        logger.info("skipped (set SADDLE_SCOUT_SLOW=1)")
        return
    land = check_n5_landscape(1e-4, 1e-3)
    logger.info("✓ %d states", len(land))


def test_n9_search_finds_ttp():
    """Downward search from the nonagon ends in a single minimum below RD(9)"""
    print("\n" + "=" * 80)
    print("TEST 8: N=9 downward search from the planar polygon")
    print("=" * 80)

    if not SLOW:
        logger.info("skipped (set SADDLE_SCOUT_SLOW=1)")
        return
    _, builder = builder_for(9, depth_cap=1)
    seed = builder.make_point(planar_polygon(9))
    land = builder.downward_search(seed)
    minima = [p for p in land.solutions if p.index == 0]
    assert len(minima) == 1, [round(p.energy, 6) for p in minima]
    assert abs(minima[0].energy - E_MIN9) < 1e-5
    assert minima[0].energy < thomson_energy(regular_dipyramid(9))
    assert minima[0].n_zero == 0
    for parent, child in land.relations:
        assert land.get(parent).index > land.get(child).index
    logger.info("✓ %d states, minimum E=%.6f", len(land), minima[0].energy)


def run_all_tests():
    """Run all tests and report results"""
    print("\n" + "#" * 80)
    print("# THOMSON PROBLEM - TEST SUITE")
    print("#" * 80)

    tests = [
        ("Reference energies", test_reference_energies),
        ("Morse indices", test_morse_indices),
        ("Descent to minimum", test_descent_to_minimum),
        ("Gauge symmetries", test_gauge_symmetries),
        ("Errors and seed file", test_errors_and_seed_file),
        ("N=5 landscape", test_n5_landscape),
        ("N=5 landscape (default steps)", test_n5_landscape_default_steps),
        ("N=9 search finds the minimum", test_n9_search_finds_ttp),
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
