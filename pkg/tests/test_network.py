import numpy as np
import pytest

from corpus import network_corpus
from oracles import effective_cost_grid_1param, effective_cost_vertices
from sscontrol.cones import check_conditions
from sscontrol.errors import (
    DegenerateWorkload,
    DimensionMismatch,
    DimensionUnsupported,
    Inconsistent,
    OutsideWorkloadSpace,
)
from sscontrol.geometry import Interval
from sscontrol.network import (
    BrownianNetwork,
    PiecewiseAffine,
    WorkloadModel,
    network_controllable,
    network_no_arbitrage,
    compute_workload_basis,
    effective_cost,
    reduce,
)

NETS = network_corpus(60)


def net_of(R, K, v, theta=None, Sigma=None, lo=None, hi=None, h=None, alpha=1.0):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    m = R.shape[0]
    return BrownianNetwork(
        np.zeros(m) if theta is None else theta,
        np.eye(m) if Sigma is None else Sigma,
        R, K, np.zeros(m) if lo is None else lo, np.ones(m) if hi is None else hi,
        PiecewiseAffine(np.ones((1, m)), [0.0]) if h is None else h,
        v, alpha,
    )


def test_identity_network():
    net = net_of(np.eye(2), np.eye(2), [3.0, 4.0], theta=[1.0, 0.0])
    M, d = compute_workload_basis(net)
    assert d == 2
    np.testing.assert_allclose(M @ M.T, np.eye(2), atol=1e-12)
    model = reduce(net)
    np.testing.assert_allclose(model.G @ np.eye(2), M, atol=1e-12)
    np.testing.assert_allclose(model.pi, [1.5, 2.0], atol=1e-12)
    np.testing.assert_allclose(model.kappa, [1.5, 2.0], atol=1e-12)
    assert model.certificates["v_residual"] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(model.theta_reduced, M @ [1.0, 0.0], atol=1e-12)


def test_tandem_basis():
    net = net_of([[1.0], [1.0]], [[0.0]], [5.0])
    M, d = compute_workload_basis(net)
    assert d == 1
    np.testing.assert_allclose(np.abs(M[0]), [2 ** -0.5] * 2, atol=1e-12)
    assert M[0] @ net.R[:, 0] == pytest.approx(0.0, abs=1e-12)
    model = reduce(net)
    assert model.system is None  # range(K) = {0}: no control directions
    assert model.certificates["v_residual"] <= 1e-10 * 6
    assert model.Gamma_reduced[0, 0] == pytest.approx(1.0)
    assert model.sigma_reduced[0, 0] == pytest.approx(1.0)
    assert isinstance(model.W_space, Interval)
    assert model.W_space.lo == pytest.approx(-(2 ** -0.5)) and model.W_space.hi == pytest.approx(2 ** -0.5)


def test_full_row_space_gives_d_equal_m():
    net = net_of(np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]]), np.eye(3), [1.0, 1.0, 1.0])
    assert compute_workload_basis(net)[1] == 2


def test_error_paths():
    # workload space {0}: R y spans everything while K vanishes
    with pytest.raises(DegenerateWorkload):
        compute_workload_basis(net_of(np.eye(2), np.zeros((1, 2)), [1.0, 1.0]))
    with pytest.raises(DimensionUnsupported):
        reduce(net_of(np.eye(3), np.eye(3), [1.0, 1.0, 1.0]))
    # v outside range([R' K']): the price decomposition does not exist
    with pytest.raises(Inconsistent):
        reduce(net_of([[1.0, 1.0]], [[1.0, 1.0]], [1.0, 2.0]))
    with pytest.raises(DimensionMismatch):
        net_of(np.eye(2), np.eye(2), [1.0, 1.0], Sigma=np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_effective_cost_example():
    net = net_of(np.eye(2), np.eye(2), [1.0, 1.0], h=PiecewiseAffine([[1.0, 0.0]], [0.0]))
    model = WorkloadModel(np.array([[1.0, 1.0]]), np.eye(1, 2), np.zeros(2), np.zeros(2), Interval(0.0, 2.0),
                          np.zeros(1), np.eye(1), np.eye(1))
    for w in np.linspace(0.0, 2.0, 21):
        g, z = effective_cost(model, net, [w])
        z1 = np.arange(0.0, 1.0 + 1e-9, 0.01)
        z2 = w - z1
        ok = (z2 >= -1e-12) & (z2 <= 1 + 1e-12)
        assert g == pytest.approx(np.min(z1[ok]), abs=1e-9)
        assert g == pytest.approx(max(0.0, w - 1.0), abs=1e-12)
        assert z.sum() == pytest.approx(w, abs=1e-12)
    with pytest.raises(OutsideWorkloadSpace):
        effective_cost(model, net, [2.5])


def test_effective_cost_at_vertex_is_point_evaluation():
    net = NETS[0]
    model = reduce(net, with_cone=False)
    for z in net.box_vertices():
        w = model.M @ z
        if np.any(np.isclose(w, model.W_space.vertices, atol=1e-12).all(axis=-1)):
            g, zs = effective_cost(model, net, w)
            assert g <= net.h(z) + net.alpha * model.pi @ z + 1e-9


@pytest.mark.parametrize("idx", range(len(NETS)))
def test_reduction_certificates_and_cost(idx):
    net = NETS[idx]
    model = reduce(net, with_cone=False)
    MR = model.M @ net.R
    assert np.max(np.abs(MR - model.G @ net.K)) <= 1e-10 * (1 + np.max(np.abs(MR)))
    assert np.max(np.abs(net.v - net.R.T @ model.pi - net.K.T @ model.kappa)) <= 1e-10 * (1 + np.max(np.abs(net.v)))
    np.testing.assert_allclose(model.sigma_reduced @ model.sigma_reduced.T, model.Gamma_reduced, atol=1e-10)
    np.testing.assert_allclose(model.M @ model.M.T, np.eye(model.d), atol=1e-12)
    rng = np.random.default_rng(idx)
    for z in rng.uniform(net.z_lo, net.z_hi, size=(10, net.m)):
        w = model.M @ z
        g, zs = effective_cost(model, net, w)
        ref = effective_cost_vertices(model.M, model.pi, net.alpha, net.h.slopes, net.h.intercepts,
                                      net.z_lo, net.z_hi, w)
        assert g == pytest.approx(ref, abs=1e-7)
        np.testing.assert_allclose(model.M @ zs, w, atol=1e-9)
        if net.m - model.d == 1:
            grid = effective_cost_grid_1param(model.M, model.pi, net.alpha, net.h.slopes, net.h.intercepts,
                                              net.z_lo, net.z_hi, w)
            assert g <= grid + 1e-9  # the LP is never beaten by feasible grid points


@pytest.mark.parametrize("idx", range(0, len(NETS), 3))
def test_effective_cost_convex_and_lipschitz(idx):
    net = NETS[idx]
    model = reduce(net, with_cone=False)
    rng = np.random.default_rng(100 + idx)
    lip = 0.0
    for _ in range(8):
        z1, z2 = rng.uniform(net.z_lo, net.z_hi, size=(2, net.m))
        w1, w2 = model.M @ z1, model.M @ z2
        g1, g2 = effective_cost(model, net, w1)[0], effective_cost(model, net, w2)[0]
        gm = effective_cost(model, net, (w1 + w2) / 2)[0]
        assert gm <= (g1 + g2) / 2 + 1e-8
        if np.linalg.norm(w1 - w2) > 1e-6:
            lip = max(lip, abs(g1 - g2) / np.linalg.norm(w1 - w2))
    assert np.isfinite(lip)


def test_assumptions_imply_reduced_conditions():
    checked = 0
    for net in NETS:
        ctl, noarb = network_controllable(net), network_no_arbitrage(net)
        if not (ctl or noarb):
            continue
        model = reduce(net)
        if model.system is None:
            assert not ctl  # without controls R y with K y >= 0 cannot cover R^m
            continue
        rep = check_conditions(model.system)
        if ctl:
            assert rep.controllable
        if noarb:
            assert rep.no_arbitrage
        checked += 1
    assert checked >= 10


def test_assumption_checks_on_handmade_networks():
    good = net_of([[1.0, -1.0]], np.eye(2), [1.0, 1.0])
    assert network_controllable(good) and network_no_arbitrage(good)
    # y = (1, 1) has K y >= 0, R y = 0 and v.y = 0
    bad = net_of([[1.0, -1.0]], np.eye(2), [1.0, -1.0])
    assert not network_no_arbitrage(bad)
    one_way = net_of([[1.0, 1.0]], np.eye(2), [1.0, 1.0])
    assert not network_controllable(one_way)
