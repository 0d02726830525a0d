#!/usr/bin/env python3
"""
Dynamics Test Suite
Single CHiSD steps, full runs on analytic sphere landscapes, run statuses and
the linear stability spectrum of the penalized continuous dynamics.
"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

import logging

import numpy as np

from saddle_scout.dynamics import (
    SearchConfig,
    SearchState,
    SearchStatus,
    deflated_update,
    reflected_direction,
    run,
    stability_spectrum,
    step,
)
from saddle_scout.errors import PreconditionError, RankDeficiencyError
from saddle_scout.geometry import RealSpace, orthonormality_defect
from saddle_scout.problems.thomson import ThomsonProblem, planar_polygon
from saddle_scout.problems.toy_sphere import HeightProblem, QuadraticProblem

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger('DynamicsTests')

E1, E2, E3 = np.eye(3)


def ladder():
    problem = QuadraticProblem.ladder(3, 1.0)
    return problem, problem.build_chart()


def test_update_formulas():
    print("\n" + "=" * 80)
    print("TEST 1: Reflection and deflated frame update")
    print("=" * 80)

    space = RealSpace.euclidean(3)
    g = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(reflected_direction(space, np.zeros((0, 3)), g), -g)
    assert np.allclose(reflected_direction(space, np.array([E1]), g), [1.0, -2.0, -3.0])

    frame = np.array([E1, E2])
    hv = np.array([[2.0, 1.0, 5.0], [3.0, 4.0, 7.0]])
    d = deflated_update(space, frame, hv)
    # d_1 = -u_1 + <u_1, v_1> v_1
    assert np.allclose(d[0], [0.0, -1.0, -5.0])
    # d_2 = -u_2 + <u_2, v_2> v_2 + 2 <u_2, v_1> v_1
    assert np.allclose(d[1], [3.0, 0.0, -7.0])
    logger.info("✓ reflection and deflation match the closed forms")


def test_gradient_descent_reaches_minimum():
    print("\n" + "=" * 80)
    print("TEST 2: 0-CHiSD on a Rayleigh quotient")
    print("=" * 80)

    problem, chart = ladder()
    x0 = problem.initial_point("random")
    config = SearchConfig(k=0, alpha=0.1, grad_tol=1e-10, max_iter=5000)
    outcome = run(problem, chart, config, SearchState.start(chart, x0))
    assert outcome.converged, outcome.message
    assert abs(abs(outcome.state.x[0]) - 1.0) < 1e-8
    assert abs(outcome.energy - 0.5) < 1e-10
    logger.info("✓ converged to the minimum in %d iterations", outcome.iterations)


def test_index_one_saddle():
    print("\n" + "=" * 80)
    print("TEST 3: 1-CHiSD finds the middle eigenvector")
    print("=" * 80)

    problem, chart = ladder()
    x0 = E2 + 0.1 * E1 + 0.1 * E3
    x0 /= np.linalg.norm(x0)
    for hessian, tol in (("exact", 1e-10), ("dimer", 1e-8)):
        config = SearchConfig(k=1, alpha=0.05, beta=0.1, dimer_l=1e-4, grad_tol=tol,
                              max_iter=10000, hessian=hessian)
        outcome = run(problem, chart, config, SearchState.start(chart, x0, np.array([E1])))
        assert outcome.converged, f"{hessian}: {outcome.status.value}"
        assert abs(abs(outcome.state.x[1]) - 1.0) < 1e-8
        assert abs(outcome.energy - 1.0) < 1e-10
        assert abs(abs(outcome.state.frame[0][0]) - 1.0) < 1e-6
        logger.info("✓ %s Hessian: 1-saddle after %d iterations", hessian, outcome.iterations)


def test_step_invariants():
    print("\n" + "=" * 80)
    print("TEST 4: One step on the Thomson chart")
    print("=" * 80)

    problem = ThomsonProblem(5)
    chart = problem.build_chart()
    rng = np.random.default_rng(21)
    x = chart.retract(planar_polygon(5), 0.05 * chart.random_tangent(planar_polygon(5), rng))
    frame = np.array([chart.random_tangent(x, rng) for _ in range(2)])
    state = SearchState.start(chart, x, frame)
    for hessian in ("exact", "dimer"):
        config = SearchConfig(k=2, alpha=1e-2, beta=1e-2, hessian=hessian, n_v=2)
        nxt = step(problem, chart, config, state)
        assert nxt.iter == 1
        assert chart.feasibility(nxt.x) <= 1e-12
        assert orthonormality_defect(chart.space, nxt.frame) <= 1e-12
        assert max(chart.tangency_defect(nxt.x, v) for v in nxt.frame) <= 1e-12
    logger.info("✓ feasible point and orthonormal tangent frame after a step")


def test_run_statuses():
    print("\n" + "=" * 80)
    print("TEST 5: Run statuses and preconditions")
    print("=" * 80)

    problem, chart = ladder()
    x0 = problem.initial_point("random")

    outcome = run(problem, chart, SearchConfig(k=0, max_iter=3, trace_every=1), SearchState.start(chart, x0))
    assert outcome.status == SearchStatus.MAX_ITER
    assert outcome.iterations == 3
    assert len(outcome.trace) == 3
    assert outcome.to_dict()["status"] == "max_iter"

    try:
        run(problem, chart, SearchConfig(k=1), SearchState.start(chart, x0))
        assert False, "frame size must match the target index"
    except PreconditionError:
        pass

    try:
        SearchState.start(chart, x0, np.array([E1, E1]))
        assert False, "a repeated frame vector must raise"
    except RankDeficiencyError:
        pass

    try:
        SearchConfig(alpha=-1.0)
        assert False, "negative step size accepted"
    except ValueError:
        pass

    # ascending a flat bowl grows E by 1.21x per step; the cap must stop it long before max_iter
    bowl = QuadraticProblem(np.eye(1), constrained=False)
    bowl_chart = bowl.build_chart()
    config = SearchConfig(k=1, alpha=0.1, beta=0.1, hessian="exact", max_iter=500)
    outcome = run(bowl, bowl_chart, config, SearchState.start(bowl_chart, np.ones(1), np.ones((1, 1))))
    assert outcome.status == SearchStatus.DIVERGED, outcome.status.value
    assert "cap" in outcome.message
    assert outcome.iterations < 120
    assert outcome.energy < 1.21 * config.energy_cap
    logger.info("✓ statuses and preconditions")


def test_index_zero_is_gradient_descent():
    print("\n" + "=" * 80)
    print("TEST 9: 0-CHiSD against projected gradient descent")
    print("=" * 80)

    problem, chart = ladder()
    x = problem.initial_point("random")
    alpha = 0.05
    expected = [x]
    for _ in range(25):
        g = problem.grad(x)
        eta = -alpha * (g - (g @ x) * x)
        t = np.linalg.norm(eta)
        x = np.cos(t) * x + np.sin(t) * eta / t
        expected.append(x)

    config = SearchConfig(k=0, alpha=alpha, grad_tol=1e-14, max_iter=25)
    state = SearchState.start(chart, expected[0])
    for want in expected[1:]:
        state = step(problem, chart, config, state)
        assert np.max(np.abs(state.x - want)) <= 1e-13
    outcome = run(problem, chart, config, SearchState.start(chart, expected[0]))
    assert outcome.iterations == 25
    assert np.max(np.abs(outcome.state.x - expected[-1])) <= 1e-13
    logger.info("✓ 25 steps agree with the exponential-map descent")


def test_stability_at_correct_index():
    """The maximum of a height function is linearly stable for 2-CHiSD"""
    print("\n" + "=" * 80)
    print("TEST 6: Stability spectrum with the correct index")
    print("=" * 80)

    problem = HeightProblem(3, anisotropy=0.5)
    chart = problem.build_chart()
    pole = problem.initial_point("pole")
    mu = 3.0
    eig = stability_spectrum(problem, chart, 2, pole, np.array([E2, E1]), mu=mu)
    assert len(eig) == 9
    assert np.max(eig.real) < -0.1, f"max real part {np.max(eig.real):.3e}"
    # the penalty direction along grad c = x decays at rate mu |grad c|^2
    assert np.sum(np.abs(eig - (-mu)) <= 1e-6) == 1

    flat = HeightProblem(3)
    eig = stability_spectrum(flat, flat.build_chart(), 2, pole, np.array([E2, E1]), mu=mu)
    assert np.max(eig.real) <= 1e-6
    logger.info("✓ all eigenvalues in the left half plane")


def test_instability_at_wrong_index():
    print("\n" + "=" * 80)
    print("TEST 7: Stability spectrum with too few directions")
    print("=" * 80)

    problem = HeightProblem(3, anisotropy=0.5)
    chart = problem.build_chart()
    pole = problem.initial_point("pole")
    eig = stability_spectrum(problem, chart, 1, pole, np.array([E2]), mu=3.0)
    assert np.max(eig.real) > 0.1

    try:
        stability_spectrum(problem, chart, 1, problem.initial_point("equator"), np.array([E2]))
        assert False, "non-stationary point accepted"
    except PreconditionError:
        pass
    logger.info("✓ 1-CHiSD at a 2-saddle is unstable")


def test_unconstrained_stability():
    print("\n" + "=" * 80)
    print("TEST 8: Unconstrained high-index dynamics")
    print("=" * 80)

    problem = QuadraticProblem(np.diag([-1.0, 2.0]), constrained=False)
    chart = problem.build_chart()
    eig = stability_spectrum(problem, chart, 1, np.zeros(2), np.array([[1.0, 0.0]]))
    assert np.max(eig.real) < -0.5
    eig = stability_spectrum(problem, chart, 0, np.zeros(2), np.zeros((0, 2)))
    assert np.max(eig.real) > 0.5
    logger.info("✓ reflected gradient stabilizes the 1-saddle of a flat quadratic")


def run_all_tests():
    """Run all tests and report results"""
    print("\n" + "#" * 80)
    print("# DYNAMICS - TEST SUITE")
    print("#" * 80)

    tests = [
        ("Update formulas", test_update_formulas),
        ("Gradient descent", test_gradient_descent_reaches_minimum),
        ("Index-1 saddle", test_index_one_saddle),
        ("Step invariants", test_step_invariants),
        ("Run statuses", test_run_statuses),
        ("Stability at correct index", test_stability_at_correct_index),
        ("Instability at wrong index", test_instability_at_wrong_index),
        ("Unconstrained stability", test_unconstrained_stability),
        ("Index 0 is gradient descent", test_index_zero_is_gradient_descent),
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
