import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sscontrol.cones import ControlCone, ControlSystem, hamiltonian
from sscontrol.errors import CrossTermDominanceViolated, EmptyInterior, NoAdmissibleDirection
from sscontrol.geometry import Interval, Polygon
from sscontrol.hjb import (
    build_grid,
    residual,
    solve,
    sweep_once,
    uniqueness_probe,
    write_field_csv,
)
from sscontrol.problem import AffineDrift, ControlProblem, MaxAffineCost

seeds = st.integers(min_value=0, max_value=2**32 - 1)
SQUARE = Polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def line_problem(kappa=(2.0, -1.0), drift=0.0, sigma=0.0, g=None, W=None):
    sys_ = ControlSystem(ControlCone.orthant(2), [[1.0, -1.0]], list(kappa))
    g = MaxAffineCost.constant(0.0, 1) if g is None else g
    return ControlProblem(W or Interval(0.0, 1.0), sys_, AffineDrift([drift]), [[sigma]], g)


def plane_problem(drift=(0.0, 0.0), sigma=((0.0, 0.0), (0.0, 0.0)), g=None, kappa=(2.0, -1.0, 2.0, -1.0), W=SQUARE):
    sys_ = ControlSystem(ControlCone.orthant(4), [[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]], list(kappa))
    g = MaxAffineCost.constant(0.0, 2) if g is None else g
    return ControlProblem(W, sys_, AffineDrift(list(drift)), np.array(sigma), g)


def test_interval_grid_layout():
    gp = build_grid(line_problem(), 0.25)
    assert gp.n_nodes == 5
    assert gp.boundary.tolist() == [True, False, False, False, True]
    dirs = [sorted(gp.admitted_directions(i).ravel().tolist()) for i in range(5)]
    assert dirs == [[1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0]]


def test_square_grid_layout():
    gp = build_grid(plane_problem(), 0.5, n_dirs=16)
    assert gp.n_nodes == 9
    assert int(gp.boundary.sum()) == 8


def test_cross_term_dominance():
    build_grid(plane_problem(sigma=np.linalg.cholesky([[1.0, 0.5], [0.5, 1.0]])), 0.25, n_dirs=8)
    # Gamma = [[1, 2], [2, 1]] is not a covariance, so it is supplied as a coefficient field directly
    base = plane_problem()

    class FixedGamma(ControlProblem):
        @property
        def Gamma(self):
            return np.array([[1.0, 2.0], [2.0, 1.0]])

    with pytest.raises(CrossTermDominanceViolated):
        build_grid(FixedGamma(SQUARE, base.system, base.drift, np.eye(2), base.g), 0.25, n_dirs=8)
    # a genuine covariance can also break dominance: Gamma = [[0.01, 0.1], [0.1, 1.01]]
    with pytest.raises(CrossTermDominanceViolated):
        build_grid(plane_problem(sigma=((0.1, 0.0), (1.0, 0.1))), 0.25, n_dirs=8)


def test_grid_errors():
    with pytest.raises(EmptyInterior):
        build_grid(line_problem(), 2.0)
    # drift pushes out through x = 1 and the only control moves right: node 1 has no option
    one_way = ControlProblem(Interval(0.0, 1.0), ControlSystem(ControlCone.orthant(1), [[1.0]], [1.0]),
                             AffineDrift([0.5]), [[0.0]], MaxAffineCost.constant(0.0, 1))
    with pytest.raises(NoAdmissibleDirection):
        build_grid(one_way, 0.25)
    with pytest.raises(ValueError):
        build_grid(line_problem(), 0.0)


def test_boundary_nodes_only_see_inward_feet():
    gp = build_grid(plane_problem(drift=(0.1, 0.1), sigma=((0.3, 0.0), (0.0, 0.3))), 0.1, n_dirs=32)
    for n in np.flatnonzero(gp.boundary):
        for e in gp.admitted_directions(n):
            assert SQUARE.contains(gp.nodes[n] + gp.h * e)
        assert not gp.pde_ok[n]


def test_solve_strict_line():
    gp = build_grid(line_problem((2.0, -1.0)), 0.005)
    vf = solve(gp, 0.0)
    assert vf.converged
    assert np.max(np.abs(vf.values + gp.nodes[:, 0])) <= 1e-8
    assert residual(gp, vf.values).inf_norm <= 1e-10


def test_solve_symmetric_line_from_zero_and_below():
    h = 0.005
    gp = build_grid(line_problem((1.0, -1.0)), h)
    vf = solve(gp, 0.0)
    assert vf.converged
    np.testing.assert_allclose(vf.values, -gp.nodes[:, 0], atol=1e-8)
    low = solve(gp, -5.0)
    assert low.converged
    np.testing.assert_allclose(low.values, -gp.nodes[:, 0] - (5.0 - h), atol=1e-8)
    assert residual(gp, low.values).valid(low.resid_tol)


def test_residual_examples():
    gp = build_grid(line_problem((2.0, -1.0)), 0.005)
    r = residual(gp, np.zeros(gp.n_nodes))
    interior = ~gp.boundary
    np.testing.assert_allclose(r.value[interior], 1.0, atol=1e-12)
    assert set(r.branch[interior]) == {"jump"}
    r1 = residual(gp, np.ones(gp.n_nodes))
    np.testing.assert_allclose(r1.pde[interior], 1.0, atol=1e-12)


def test_probe_examples():
    h = 0.005
    b = uniqueness_probe(build_grid(line_problem((2.0, -1.0)), h), [5.0])
    assert b.flag == "Unique" and b.max_difference <= 1e-6
    a = uniqueness_probe(build_grid(line_problem((1.0, -1.0)), h), [5.0])
    assert a.flag == "MultipleFixedPoints"
    assert 5.0 - 2 * h <= a.max_difference <= 5.0
    single = uniqueness_probe(build_grid(line_problem((1.0, -1.0)), 0.05), [])
    assert single.flag == "Unique" and single.max_difference == 0.0


def test_comparison_echo_with_diffusion():
    p = plane_problem(drift=(0.2, -0.1), sigma=((0.4, 0.1), (0.0, 0.3)), g=MaxAffineCost([[1.0, 1.0]], [0.0]))
    gp = build_grid(p, 0.1, n_dirs=16)
    pr = uniqueness_probe(gp, [2.0, 4.0])
    assert pr.flag == "Unique"
    assert pr.max_difference <= 10 * 1e-9


def _random_grid(rng):
    if rng.random() < 0.5:
        p = line_problem(kappa=(rng.uniform(0.5, 2), rng.uniform(-0.5, 0.4)), drift=rng.normal(scale=0.5),
                         sigma=rng.uniform(0, 0.6), g=MaxAffineCost([[rng.normal()]], [rng.normal()]))
        return build_grid(p, float(rng.choice([0.05, 0.1, 0.2])))
    s11, s22 = rng.uniform(0.1, 0.6, 2)
    sig = np.array([[s11, 0.0], [rng.uniform(-0.5, 0.5) * min(s11, s22), s22]])
    G = sig @ sig.T
    if abs(G[0, 1]) > min(G[0, 0], G[1, 1]):
        sig[1, 0] = 0.0
    p = plane_problem(drift=rng.normal(scale=0.3, size=2), sigma=sig, g=MaxAffineCost([rng.normal(size=2)], [0.0]))
    return build_grid(p, float(rng.choice([0.125, 0.25])), n_dirs=8)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_sweep_is_monotone(seed):
    rng = np.random.default_rng(seed)
    gp = _random_grid(rng)
    phi = rng.normal(size=gp.n_nodes)
    chi = phi + rng.exponential(size=gp.n_nodes) * (rng.random(gp.n_nodes) < 0.7)
    for forward in (True, False):
        a, b = sweep_once(gp, phi, forward), sweep_once(gp, chi, forward)
        assert np.all(a <= b + 1e-12)


def _pde_error(h, theta, Gam, qa, qb, alpha=1.0):
    """max |PDE_h(f) - ((L + alpha) f - g)| over interior nodes, f(x) = x'Ax/2 + b.x, g = 0."""
    sig = np.linalg.cholesky(Gam)
    p = plane_problem(drift=theta, sigma=sig)
    gp = build_grid(p, h, n_dirs=8)
    X = gp.nodes
    f = 0.5 * np.einsum("ni,ij,nj->n", X, qa, X) + X @ qb
    exact = alpha * f - 0.5 * np.trace(Gam @ qa) - (X @ qa + qb) @ np.asarray(theta)
    pde = residual(gp, f).pde
    ok = gp.pde_ok
    return float(np.max(np.abs(pde[ok] - exact[ok])))


def test_pde_consistency_first_order_with_drift():
    rng = np.random.default_rng(4)
    for _ in range(5):
        B = rng.normal(size=(2, 2))
        qa = B + B.T
        qb = rng.normal(size=2)
        theta = rng.normal(size=2)
        Gam = np.array([[0.5, 0.1], [0.1, 0.3]])
        errs = [_pde_error(h, theta, Gam, qa, qb) for h in (0.1, 0.05, 0.025)]
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)
        # the upwind error for quadratics is h/2 sum |theta_i A_ii|
        assert errs[0] <= 0.1 * 0.5 * np.sum(np.abs(theta * np.diag(qa))) + 1e-9


def test_pde_consistency_second_order_without_drift():
    B = np.array([[1.0, 0.3], [-0.2, 0.7]])
    qa = B + B.T
    err = _pde_error(0.1, (0.0, 0.0), np.array([[0.5, -0.2], [-0.2, 0.3]]), qa, np.array([0.3, -0.1]))
    assert err <= 1e-10


def test_jump_branch_matches_hamiltonian_on_linear_fields():
    gp1 = build_grid(line_problem((2.0, -1.0)), 0.05)
    sys1 = line_problem((2.0, -1.0)).system
    for q in np.linspace(-3, 3, 13):
        r = residual(gp1, q * gp1.nodes[:, 0])
        np.testing.assert_allclose(r.jump[~gp1.boundary], hamiltonian(sys1, [q]), atol=1e-12)
    p2 = plane_problem()
    gp2 = build_grid(p2, 0.05, n_dirs=32)
    for q in np.random.default_rng(0).normal(size=(5, 2)):
        r = residual(gp2, gp2.nodes @ q)
        inner = ~gp2.boundary
        full = np.array([len(gp2.admitted_directions(n)) == 32 for n in range(gp2.n_nodes)])
        sel = inner & full
        np.testing.assert_allclose(r.jump[sel], hamiltonian(p2.system, q, 32), atol=1e-10)


def test_field_csv(tmp_path):
    gp = build_grid(plane_problem(), 0.25, n_dirs=8)
    vf = solve(gp, 0.0)
    path = tmp_path / "field.csv"
    write_field_csv(path, gp, vf)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x1", "x2", "psi", "residual", "active_branch"]
    assert len(rows) == gp.n_nodes + 1
    assert {r[4] for r in rows[1:]} <= {"pde", "jump"}
