import math

import numpy as np
import pytest

from sscontrol.cones import ControlCone, ControlSystem, cone_contains, varpi
from sscontrol.errors import InadmissiblePolicy, MixedGrids, StateEscaped
from sscontrol.geometry import Interval, Polygon
from sscontrol.hjb import build_grid, solve
from sscontrol.problem import AffineDrift, ControlProblem, MaxAffineCost
from sscontrol.simulate import (
    PolicySpec,
    check_integration_by_parts,
    compare_with_value,
    estimate_cost,
    negative_part_bound,
    negative_part_integral,
    path_costs,
    simulate,
    write_paths_csv,
)

SQUARE = Polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
ZERO1 = MaxAffineCost.constant(0.0, 1)


def line_problem(kappa=(2.0, -1.0), drift=0.0, sigma=0.0, g=ZERO1):
    sys_ = ControlSystem(ControlCone.orthant(2), [[1.0, -1.0]], list(kappa))
    return ControlProblem(Interval(0.0, 1.0), sys_, AffineDrift([drift]), [[sigma]], g)


def plane_problem(drift=(0.2, -0.1), sigma=((0.5, 0.1), (0.0, 0.4))):
    sys_ = ControlSystem(ControlCone.orthant(4), [[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]],
                         [2.0, -1.0, 2.0, -1.0])
    return ControlProblem(SQUARE, sys_, AffineDrift(list(drift)), np.array(sigma), MaxAffineCost([[1.0, 1.0]], [0.0]))


JUMP0 = PolicySpec("ImmediateJumpThenIdle", target=(0.0,))


def assert_admissible(problem, paths, tol=1e-12):
    G, sig = problem.system.G, problem.sigma
    for pth in paths:
        assert np.all(problem.W.contains_many(pth.W, 1e-9))
        for du in pth.dU:
            if np.any(du != 0):
                assert cone_contains(problem.system.cone, du, 1e-9)
        np.testing.assert_allclose(pth.W[0], pth.w0 + G @ pth.dU[0], atol=tol)
        prev = pth.W[:-1]
        step = prev + problem.drift(prev) * (pth.times[1] - pth.times[0]) + pth.dZ @ sig.T + pth.dU[1:] @ G.T
        assert np.max(np.abs(step - pth.W[1:])) <= tol
        np.testing.assert_allclose(np.cumsum(pth.dU, axis=0), pth.U, atol=tol)


def test_do_nothing_without_dynamics():
    p = line_problem()
    paths = simulate(p, PolicySpec("DoNothing"), [0.3], n_paths=3, dt=0.01, T=1.0)
    for pth in paths:
        assert np.all(pth.W == 0.3) and np.all(pth.U == 0.0)
    assert estimate_cost(paths, p.kappa, p.g, p.alpha).mean == 0.0


def test_immediate_jump_on_strict_line():
    p = line_problem()
    (pth,) = simulate(p, JUMP0, [0.5], dt=0.01, T=1.0)
    np.testing.assert_allclose(pth.dU[0], [0.0, 0.5], atol=1e-12)
    np.testing.assert_allclose(pth.dU[0], varpi(p.system, [-0.5]), atol=1e-15)
    assert np.all(pth.W == 0.0) and np.all(pth.dU[1:] == 0.0)


def test_immediate_jump_estimate_is_minus_half():
    p = line_problem()
    paths = simulate(p, JUMP0, [0.5], n_paths=2, dt=1e-3, T=20.0)
    est = estimate_cost(paths, p.kappa, p.g, p.alpha)
    assert est.mean == pytest.approx(-0.5 * (1 - math.exp(-20.0)), abs=1e-12)
    assert abs(est.mean + 0.5) <= 1e-8
    assert est.std_error == 0.0


def test_reflect_ball_stays_in_ball():
    p = line_problem(drift=0.3, sigma=0.5)
    pol = PolicySpec("ReflectBall", center=(0.5,), radius=0.2)
    paths = simulate(p, pol, [0.5], n_paths=20, dt=1e-3, T=2.0, seed=3)
    for pth in paths:
        assert np.all(np.abs(pth.W[:, 0] - 0.5) <= 0.2 + 1e-12)
    assert_admissible(p, paths)
    p2 = plane_problem()
    pol2 = PolicySpec("ReflectBall", center=(0.5, 0.5), radius=0.3)
    paths2 = simulate(p2, pol2, [0.5, 0.5], n_paths=10, dt=1e-3, T=2.0, seed=4)
    for pth in paths2:
        assert np.all(np.linalg.norm(pth.W - 0.5, axis=1) <= 0.3 + 1e-12)
    assert_admissible(p2, paths2)


@pytest.mark.parametrize("optimal", [False, True])
def test_project_to_w_admissible(optimal):
    p = plane_problem()
    paths = simulate(p, PolicySpec("ProjectToW", optimal=optimal), [0.2, 0.9], n_paths=10, dt=1e-3, T=2.0, seed=1)
    assert_admissible(p, paths)
    assert any(np.any(pth.dU != 0) for pth in paths)


def test_symmetric_line_cost_two_ways():
    """With G = (1, -1) and kappa = (1, -1), kappa.U_t = W_t - w0 - theta t - sigma Z_t pathwise."""
    alpha = 1.0
    for drift, sigma, pol in [(0.0, 0.0, PolicySpec("ImmediateJumpThenIdle", target=(0.8,))),
                              (0.3, 0.5, PolicySpec("ProjectToW")),
                              (-0.2, 0.4, PolicySpec("ReflectBall", center=(0.4,), radius=0.3))]:
        p = line_problem(kappa=(1.0, -1.0), drift=drift, sigma=sigma)
        paths = simulate(p, pol, [0.4], n_paths=5, dt=1e-3, T=5.0, seed=2)
        direct = path_costs(paths, p.kappa, p.g, alpha)
        t = paths[0].times
        disc = np.exp(-alpha * t[:-1]) - np.exp(-alpha * t[1:])
        for pth, c in zip(paths, direct):
            Z = np.concatenate([[0.0], np.cumsum(pth.dZ[:, 0])])
            kU = pth.W[:, 0] - 0.4 - drift * t - sigma * Z
            assert np.max(np.abs(kU - pth.U @ p.kappa)) <= 1e-10
            assert abs(kU[:-1] @ disc - c) <= 1e-10


def test_integration_by_parts_examples():
    p = line_problem(drift=0.3, sigma=0.5)
    (idle,) = simulate(line_problem(), PolicySpec("DoNothing"), [0.5], dt=0.01, T=1.0)
    assert check_integration_by_parts(idle, p.kappa, 1.0) == 0.0
    (const,) = simulate(line_problem(), JUMP0, [0.5], dt=0.01, T=3.0)
    assert check_integration_by_parts(const, p.kappa, 1.0) <= 1e-15
    assert check_integration_by_parts(const, p.kappa, 1.0, t=1.5) <= 1e-15
    for pth in simulate(p, PolicySpec("ProjectToW"), [0.5], n_paths=10, dt=1e-3, T=20.0, seed=5):
        assert check_integration_by_parts(pth, p.kappa, 1.0) <= 1e-10


def test_rng_determinism_and_path_independence():
    p = line_problem(drift=0.3, sigma=0.5)
    a = simulate(p, PolicySpec("ProjectToW"), [0.5], n_paths=4, dt=0.01, T=1.0, seed=9)
    b = simulate(p, PolicySpec("ProjectToW"), [0.5], n_paths=2, dt=0.01, T=1.0, seed=9)
    c = simulate(p, PolicySpec("ProjectToW"), [0.5], n_paths=2, dt=0.01, T=1.0, seed=10)
    for x, y in zip(a, b):
        assert np.array_equal(x.W, y.W) and np.array_equal(x.U, y.U)
    assert not np.array_equal(a[0].dZ, c[0].dZ)


def test_errors():
    p = line_problem(drift=0.3, sigma=0.5)
    with pytest.raises(StateEscaped):
        simulate(p, PolicySpec("DoNothing"), [0.9], n_paths=5, dt=0.01, T=10.0)
    with pytest.raises(InadmissiblePolicy):
        PolicySpec("Teleport")
    with pytest.raises(InadmissiblePolicy):
        PolicySpec("ReflectBall", center=(0.5,), radius=0.0)
    with pytest.raises(InadmissiblePolicy):
        simulate(p, PolicySpec("ReflectBall", center=(0.5,), radius=0.6), [0.5])
    with pytest.raises(InadmissiblePolicy):
        simulate(p, PolicySpec("ImmediateJumpThenIdle", target=(1.5,)), [0.5])
    # noise at the target: idling after the jump is not admissible on its own
    with pytest.raises(InadmissiblePolicy):
        simulate(p, JUMP0, [0.5])
    simulate(p, PolicySpec("ImmediateJumpThenIdle", target=(0.0,), then_project=True), [0.5], dt=0.01, T=1.0)
    with pytest.raises(InadmissiblePolicy):
        simulate(p, PolicySpec("ProjectToW"), [1.5])
    with pytest.raises(ValueError):
        simulate(p, PolicySpec("ProjectToW"), [0.5], dt=0.1, T=0.01)
    a = simulate(line_problem(), PolicySpec("DoNothing"), [0.5], dt=0.01, T=1.0)
    b = simulate(line_problem(), PolicySpec("DoNothing"), [0.5], dt=0.02, T=1.0)
    with pytest.raises(MixedGrids):
        estimate_cost(a + b, [2.0, -1.0], ZERO1, 1.0)


def test_tail_bound_shape():
    p = line_problem(drift=0.3, sigma=0.5, g=MaxAffineCost([[1.0]], [0.0]))
    paths = simulate(p, PolicySpec("ProjectToW"), [0.5], n_paths=20, dt=1e-3, T=5.0)
    est = estimate_cost(paths, p.kappa, p.g, p.alpha)
    assert 0.0 < est.tail_bound <= math.exp(-5.0) * (1.0 + 10.0 * 6.0)
    assert est.std_error > 0 and est.n_paths == 20 and est.horizon_T == 5.0


def test_compare_with_value():
    p = line_problem()
    gp = build_grid(p, 0.005)
    vf = solve(gp, 0.0)
    jump = estimate_cost(simulate(p, JUMP0, [0.5], dt=1e-3, T=20.0), p.kappa, p.g, p.alpha)
    rep = compare_with_value(jump, gp, vf, [0.5])
    assert rep["pass"] and abs(rep["gap"]) <= 1e-3
    idle = estimate_cost(simulate(p, PolicySpec("DoNothing"), [0.5], dt=1e-3, T=20.0), p.kappa, p.g, p.alpha)
    assert compare_with_value(idle, gp, vf, [0.5])["pass"]
    # an estimate well below V cannot come from an admissible policy
    fake = type(jump)(-0.7, 0.0, 1, 20.0, 0.0)
    assert not compare_with_value(fake, gp, vf, [0.5])["pass"]


def test_negative_part_bound_over_many_paths():
    p = line_problem(drift=0.3, sigma=0.5)
    bound = negative_part_bound(p)
    assert np.isfinite(bound)
    for pol in (PolicySpec("ProjectToW"), PolicySpec("ReflectBall", center=(0.5,), radius=0.4)):
        paths = simulate(p, pol, [0.5], n_paths=1000, dt=0.01, T=20.0, seed=8)
        assert negative_part_integral(paths, p.kappa, p.alpha) <= bound
    # no strict subsolution: the cone alone does not bound the negative part
    assert negative_part_bound(line_problem(kappa=(-1.0, 0.0))) == math.inf


def test_paths_csv(tmp_path):
    paths = simulate(line_problem(), JUMP0, [0.5], n_paths=2, dt=0.5, T=1.0)
    out = tmp_path / "paths.csv"
    write_paths_csv(out, paths)
    lines = out.read_text().splitlines()
    assert lines[0] == "path,t,W1,U1,U2"
    assert len(lines) == 1 + 2 * 3
