import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from addgp.packing import (
    GridFunction,
    PackingDomainError,
    additive_rescale,
    bump1d,
    bump1d_deriv,
    bump_holder_norm,
    bump_l2_norm,
    entropy_constant,
    estimate_holder_norm,
    holder_floor,
    holder_packing,
    max_feasible_eps,
    midpoint_grid,
    packing_constant,
    sparse_lift,
    tensor_bump,
)
from addgp.rates import log_binom


def test_bump_values():
    assert bump1d(0.5) == pytest.approx(0.5 * math.exp(-4 / 3), rel=1e-14)
    assert bump1d(0.5) == pytest.approx(0.1317986, abs=5e-8)
    assert tensor_bump(np.array([[0.5, 0.5]]))[0] == pytest.approx(0.0173709, abs=5e-8)
    assert bump1d(1.0) == 0.0 and bump1d(-1.3) == 0.0 and bump1d(0.0) == 0.0


@given(st.floats(-1.5, 1.5))
def test_bump_odd(t):
    assert bump1d(-t) == -bump1d(t)


@given(st.floats(-0.95, 0.95), st.sampled_from([1, 2]))
def test_analytic_derivatives(t, order):
    h = 1e-5
    fd = (bump1d_deriv(t + h, order - 1) - bump1d_deriv(t - h, order - 1)) / (2 * h)
    assert bump1d_deriv(t, order) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_l2_norm_matches_quadrature():
    one = integrate.quad(lambda t: bump1d(t) ** 2, -1, 1)[0]
    for d in (1, 2, 3):
        assert bump_l2_norm(d) == pytest.approx(one ** (d / 2), rel=1e-12)


def test_holder_floor():
    assert holder_floor(1.0) == 0 and holder_floor(1.5) == 1 and holder_floor(2.0) == 1 and holder_floor(0.3) == 0


def test_holder_norm_bounds():
    # C^1 norm of K is at least sup|K| + sup|K'|
    sup0 = np.abs(bump1d(np.linspace(-1, 1, 20001))).max()
    sup1 = np.abs(bump1d_deriv(np.linspace(-1, 1, 20001), 1)).max()
    assert bump_holder_norm(1.0, 1) >= sup0 + sup1 - 1e-9
    assert bump_holder_norm(2.0, 1) > bump_holder_norm(1.0, 1)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_tensor_marginals_vanish(d):
    res = {1: 400, 2: 60, 3: 24}[d]
    g = GridFunction.sample(lambda X: tensor_bump(2 * X - 1), d, res)
    for marg in g.axis_marginals():
        assert np.max(np.abs(marg)) < 1e-14


def test_zero_member_and_domain():
    P = holder_packing(1.0, 1, max_feasible_eps(1.0, 1))
    assert not P.words[0].any()
    x = np.linspace(0, 1, 101)[:, None]
    assert np.all(P.member(0)(x) == 0)
    assert np.all(P.member(2)(np.array([[-0.1], [1.2]])) == 0)


def test_infeasible_eps_names_bound():
    with pytest.raises(PackingDomainError, match="0.00282"):
        holder_packing(1.0, 1, 0.01)
    with pytest.raises(PackingDomainError):
        holder_packing(1.0, 1, -1.0)


def test_max_feasible_values():
    assert max_feasible_eps(1.0, 1) == pytest.approx(0.0028239, rel=1e-4)
    assert holder_packing(1.0, 1, max_feasible_eps(1.0, 1)).m == 8


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_eqdiff_closed_form(alpha):
    P = holder_packing(alpha, 1, 0.5 * max_feasible_eps(alpha, 1))
    v = P.verify(2048)
    assert v["max_rel_err"] < 1e-6
    assert v["certified"]
    assert v["min_distance"] >= P.requested_eps


def test_verify_stable_under_refinement():
    P = holder_packing(1.0, 1, max_feasible_eps(1.0, 1))
    a = np.sqrt(P.sq_distance_matrix(2048))
    b = np.sqrt(P.sq_distance_matrix(4096))
    iu = np.triu_indices(len(P), 1)
    assert np.max(np.abs(a[iu] - b[iu]) / b[iu]) < 1e-4


def test_verify_2d():
    P = holder_packing(1.0, 2, max_feasible_eps(1.0, 2))
    assert P.m == 3
    v = P.verify(192)
    assert v["certified"] and v["max_rel_err"] < 1e-4


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_members_in_holder_ball(alpha):
    P = holder_packing(alpha, 1, max_feasible_eps(alpha, 1))
    for i in (1, len(P) // 2, len(P) - 1):
        assert estimate_holder_norm(P.member(i), 1, alpha) <= 1.0 + 1e-6


def test_member_marginals_vanish_2d():
    P = holder_packing(1.0, 2, max_feasible_eps(1.0, 2))
    g = P.grid_function(len(P) - 1, 120)
    for marg in g.axis_marginals():
        assert np.max(np.abs(marg)) < 1e-12


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_entropy_slope(alpha):
    base = max_feasible_eps(alpha, 1)
    eps = [base * 2.0 ** (-alpha * j) for j in range(4)]
    logN = [holder_packing(alpha, 1, e).log_cardinality for e in eps]
    slope = np.polyfit(np.log(1 / np.array(eps)), np.log(logN), 1)[0]
    assert abs(slope - 1 / alpha) < 0.15


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_log_cardinality_lower_bound(alpha):
    base = holder_packing(alpha, 1, 0.5 * max_feasible_eps(alpha, 1))
    M0 = entropy_constant(alpha, 1)
    for p in (1, 5, 50):
        lifted = sparse_lift(base, p)
        assert lifted.log_cardinality >= M0 * (1 / base.eps) ** (1 / alpha) + log_binom(p, 1) - 1e-12


def test_separation_constant():
    for alpha in (0.5, 1.0, 1.5, 2.0):
        P = holder_packing(alpha, 1, 0.7 * max_feasible_eps(alpha, 1))
        assert P.eps >= P.requested_eps
        assert P.eps >= packing_constant(alpha, 1) * P.h**alpha * (1 - 1e-12)


def test_lift_cardinality_and_pythagoras():
    base = holder_packing(1.0, 1, max_feasible_eps(1.0, 1))
    lifted = sparse_lift(base, 3)
    assert len(lifted) == 3 * (len(base) - 1)
    assert len(list(lifted.members())) == len(lifted)
    X = midpoint_grid(2, 512)
    Xf = np.column_stack([X[:, 0], X[:, 1], np.full(len(X), 0.3)])
    f = lifted.member((0,), 1)(Xf)
    g = lifted.member((1,), 2)(Xf)
    nf = base.grid_function(1).l2_norm()
    ng = base.grid_function(2).l2_norm()
    assert np.mean((f - g) ** 2) == pytest.approx(nf**2 + ng**2, rel=1e-3)
    with pytest.raises(IndexError):
        lifted.member((0,), 0)
    with pytest.raises(PackingDomainError):
        sparse_lift(base, 3, 2)


def test_rescale_distance_and_support():
    base = holder_packing(1.0, 1, max_feasible_eps(1.0, 1))
    f, g = base.member(1), base.member(2)
    Delta = 0.5
    rf, rg = additive_rescale([f, g], Delta, 1.0)
    X = midpoint_grid(1, 8192)
    d0 = np.sqrt(np.mean((f(X) - g(X)) ** 2))
    d1 = np.sqrt(np.mean((rf(X) - rg(X)) ** 2))
    assert d1 / d0 == pytest.approx(2 ** -1.5, rel=1e-3)
    outside = (X[:, 0] < 0.25) | (X[:, 0] > 0.75)
    assert np.all(rf(X)[outside] == 0)


def test_rescale_identity_and_domain():
    base = holder_packing(1.0, 1, max_feasible_eps(1.0, 1))
    f = base.member(2)
    X = np.random.default_rng(0).random((200, 1))
    (rf,) = additive_rescale([f], 1.0, 1.0)
    np.testing.assert_array_equal(rf(X), f(X))
    with pytest.raises(PackingDomainError):
        additive_rescale([f], 1.5, 1.0)
    with pytest.raises(PackingDomainError):
        additive_rescale([f], 0.0, 1.0)
