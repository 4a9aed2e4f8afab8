import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amocbox import model
from conftest import random_states


def test_derived_constants(dim):
    p = model.build_nondim(dim)
    assert p.phi == pytest.approx(1.7e-4 * (7.0 - 2.65), rel=1e-12)
    assert p.phi == pytest.approx(7.395e-4, rel=1e-6)
    assert p.x_E_a == pytest.approx((25.0 - 2.65) / 4.35, rel=1e-12)
    assert p.x_E_a == pytest.approx(5.13793, abs=1e-4)
    assert p.y_D == pytest.approx(0.8e-3 * (34.538 - 35.0) / 7.395e-4, rel=1e-12)
    assert p.y_D == pytest.approx(-0.49980, abs=1e-4)
    assert p.V_D_t == pytest.approx(1.2979e17 / 7.2106e15, rel=1e-12)
    assert p.V_D_t == pytest.approx(18.00, abs=0.01)
    assert p.delta_N == pytest.approx(1.088e-2, abs=1e-4)


def test_time_unit(dim):
    assert model.time_unit_days(dim) == pytest.approx(3.974, abs=0.01)
    unit = model.DimensionalParams(V_N=2.1e4 * model.SV * 86400.0)
    assert model.time_unit_days(unit) == pytest.approx(1.0, rel=1e-12)
    doubled = model.DimensionalParams(V_N=2 * dim.V_N)
    assert model.time_unit_days(doubled) == pytest.approx(
        2 * model.time_unit_days(dim), rel=1e-12)


def test_invariants_rejected():
    with pytest.raises(ValueError):
        model.DimensionalParams(k_d=5.0 * model.SV)  # k_d > k_E
    with pytest.raises(ValueError):
        model.DimensionalParams(sigma=-1.0)
    with pytest.raises(ValueError):
        model.DimensionalParams(T_0=30.0)
    with pytest.raises(ValueError):
        model.NondimParams(mu=0.0, eta=0.0, epsilon=-0.1)


def test_smooth_abs_examples():
    assert model.smooth_abs(0.0, 0.02) == 0.0
    assert model.smooth_abs(10.0, 0.02) == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(ValueError):
        model.smooth_abs(1.0, 0.0)


def test_smooth_abs_sup_gap():
    # independent oracle: maximize s*(1 - tanh(s)) on a dense grid
    s = np.linspace(0.0, 8.0, 2_000_001)
    gap = float(np.max(s * (1.0 - np.tanh(s))))
    assert gap == pytest.approx(0.2785, abs=1e-3)
    for theta in (0.02, 0.5, 3.0):
        psi = np.linspace(-10 * theta, 10 * theta, 10001)
        diff = np.abs(psi) - model.smooth_abs(psi, theta)
        assert diff.min() >= -1e-15
        assert diff.max() <= 0.28 * theta


@settings(max_examples=200, deadline=None)
@given(psi=st.floats(-1e3, 1e3), theta=st.floats(1e-3, 10.0))
def test_smooth_abs_properties(psi, theta):
    v = model.smooth_abs(psi, theta)
    assert v >= -1e-15
    assert v == pytest.approx(model.smooth_abs(-psi, theta), rel=1e-12, abs=1e-15)
    assert v <= abs(psi) + 1e-15


def test_psi_examples(params):
    s = np.array([0.3, 1.0, params.x_E_a + 0.7, 0.0])  # y_N-x_N == y_E-x_E_a
    assert model.psi(s, params) == pytest.approx(0.0, abs=1e-18)
    s2 = np.array([0.0, 1.0, params.x_E_a, 0.0])  # difference of anomalies = 1
    assert model.psi(s2, params) == pytest.approx(7.395e-4, rel=1e-9)


def test_conv_exchange_examples(params):
    # a = 0: surface-minus-deep difference equals eta exactly
    s = np.array([0.0, params.eta + params.y_D, 0.0, 0.0])
    assert model.sigmoid_argument(s, params, "N") == pytest.approx(0.0, abs=1e-9)
    K = model.conv_exchange(s, params, "N")
    assert K == pytest.approx(0.5 * (params.kappa_N + params.kappa_d), rel=1e-9)
    # tanh limits
    s_up = s + np.array([0.0, 60 * params.epsilon, 0.0, 0.0])
    assert model.conv_exchange(s_up, params, "N") == pytest.approx(params.kappa_N, rel=1e-9)
    s_dn = s - np.array([0.0, 60 * params.epsilon, 0.0, 0.0])
    assert model.conv_exchange(s_dn, params, "N") == pytest.approx(params.kappa_d, rel=1e-6)
    # a = artanh(0.8)
    a8 = math.atanh(0.8)
    s8 = s + np.array([0.0, a8 * params.epsilon, 0.0, 0.0])
    expect = params.kappa_d + 0.9 * (params.kappa_N - params.kappa_d)
    assert model.conv_exchange(s8, params, "N") == pytest.approx(expect, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(xn=st.floats(-6, 8), yn=st.floats(-6, 8), ye=st.floats(-6, 8),
       xd=st.floats(-6, 8))
def test_conv_exchange_bounds(params, xn, yn, ye, xd):
    s = np.array([xn, yn, ye, xd])
    for box, hi in (("N", params.kappa_N), ("E", params.kappa_E)):
        K = model.conv_exchange(s, params, box)
        a = model.sigmoid_argument(s, params, box)
        if abs(a) < 18.0:  # below tanh saturation in binary64
            assert params.kappa_d < K < hi
        else:
            assert params.kappa_d <= K <= hi
    # monotone in the surface-minus-deep difference (below saturation)
    a_n = model.sigmoid_argument(s, params, "N")
    if abs(a_n) < 17.0:
        K1 = model.conv_exchange(s, params, "N")
        K2 = model.conv_exchange(s + np.array([0, 1e-3, 0, 0]), params, "N")
        assert K2 > K1


def test_regime(params):
    a_star = model.A_STAR
    assert a_star == pytest.approx(0.65848, abs=1e-5)
    mk = lambda a: np.array([0.0, params.eta + params.y_D + a * params.epsilon, 0.0, 0.0])
    assert model.regime(mk(0.0), params, "N") is model.MixingRegime.INTERMEDIATE
    assert model.regime(mk(5.0), params, "N") is model.MixingRegime.CONVECTIVE
    assert model.regime(mk(-5.0), params, "N") is model.MixingRegime.DIFFUSIVE
    # boundary tie-break assigns outward (exact threshold values)
    assert model.regime_of_argument(-a_star) is model.MixingRegime.DIFFUSIVE
    assert model.regime_of_argument(a_star) is model.MixingRegime.CONVECTIVE
    assert model.regime_of_argument(0.99 * a_star) is model.MixingRegime.INTERMEDIATE


def test_salt_and_heat_conservation(dim, rng):
    d0 = model.DimensionalParams(F_N=-1.5 * model.SV, Delta_rho=-3.0,
                                 gamma_E=0.5 / model.SECONDS_PER_YEAR)
    for _ in range(50):
        fs = np.concatenate([rng.uniform(0, 25, 3), rng.uniform(33, 37, 3)])
        dfs = model.rhs_full(fs, d0)
        salt_rate = d0.V_N * dfs[3] + d0.V_E * dfs[4] + d0.V_D * dfs[5]
        # scale: individual salt fluxes are ~ |F_N S_0|
        assert abs(salt_rate) <= 1e-12 * abs(d0.F_N * d0.S_0) + 1e-3
    d_noheat = model.DimensionalParams(F_N=-1.5 * model.SV, Delta_rho=-3.0,
                                       gamma_N=0.0, gamma_E=0.0)
    for _ in range(50):
        fs = np.concatenate([rng.uniform(0, 25, 3), rng.uniform(33, 37, 3)])
        dfs = model.rhs_full(fs, d_noheat)
        heat_rate = d_noheat.V_N * dfs[0] + d_noheat.V_E * dfs[1] + d_noheat.V_D * dfs[2]
        assert abs(heat_rate) <= 1e-12 * (d_noheat.sigma * 25.0)


def test_uniform_state_is_steady():
    d0 = model.DimensionalParams(F_N=0.0, gamma_N=0.0, gamma_E=0.0,
                                 Delta_rho=-3.0)
    fs = np.array([5.0, 5.0, 5.0, 35.2, 35.2, 35.2])
    assert np.max(np.abs(model.rhs_full(fs, d0))) == 0.0


def test_nondim_dimensional_consistency(dim, rng):
    d0 = model.DimensionalParams(F_N=-1.0 * model.SV, Delta_rho=-3.0)
    p = model.build_nondim(d0)
    unit = d0.V_N / d0.sigma
    dT = d0.T_N_a - d0.T_0
    scale = np.array([1.0 / dT, d0.alpha_S / p.phi, d0.alpha_S / p.phi, 1.0 / dT])
    for x in random_states(rng, 30):
        X = model.dimensional_state_from_nondim(x, d0)
        f_dim = model.rhs_reduced_dimensional(X, d0)
        f_mapped = unit * scale * f_dim
        f_nd = model.rhs(x, p)
        assert np.linalg.norm(f_mapped - f_nd) <= 1e-10 * np.linalg.norm(f_nd)


def test_jacobian_fd(params, rng):
    h = 1e-6
    worst = 0.0
    for x in random_states(rng, 100):
        J = model.jacobian(x, params)
        Jfd = np.zeros((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            Jfd[:, j] = (model.rhs(x + e, params) - model.rhs(x - e, params)) / (2 * h)
        worst = max(worst, np.linalg.norm(J - Jfd) / np.linalg.norm(Jfd))
    assert worst < 1e-6


def test_jacobian_mu_independent(params, rng):
    import dataclasses
    x = random_states(rng, 1)[0]
    p2 = dataclasses.replace(params, mu=params.mu + 1e-3)
    assert np.allclose(model.jacobian(x, params), model.jacobian(x, p2),
                       rtol=0, atol=0)


def test_jacobian_large_epsilon_limit(params, rng):
    """With eps huge the switch is frozen; derive the limit by hand."""
    import dataclasses
    p = dataclasses.replace(params, epsilon=1e9)
    for x in random_states(rng, 5):
        xn, yn, ye, xd = x
        phi, W = p.phi, p.W_t
        psi = phi * ((yn - xn) - (ye - p.x_E_a))
        th = p.vartheta
        s = math.tanh(psi / th)
        A = psi * s
        dA = (s + psi / th * (1 - s * s)) * np.array([-phi, phi, -phi, 0.0])
        dpsi = np.array([-phi, phi, -phi, 0.0])
        KN = model.conv_exchange(x, p, "N")
        KE = model.conv_exchange(x, p, "E")
        Jl = np.zeros((4, 4))
        Jl[0] = 0.5 * dpsi * (p.x_E_a - xd) + 0.5 * dA * (p.x_E_a + xd - 2 * xn)
        Jl[0, 0] += -p.delta_N - A - W - KN
        Jl[0, 3] += -0.5 * psi + 0.5 * A + KN
        Jl[1] = 0.5 * dpsi * (ye - p.y_D) + 0.5 * dA * (ye + p.y_D - 2 * yn)
        Jl[1, 1] += -A - W - KN
        Jl[1, 2] += 0.5 * psi + 0.5 * A + W
        Jl[2] = 0.5 * dpsi * (p.y_D - yn) + 0.5 * dA * (p.y_D + yn - 2 * ye)
        Jl[2, 1] += -0.5 * psi + 0.5 * A + W
        Jl[2, 2] += -A - W - KE
        Jl[2] /= p.V_E_t
        Jl[3] = 0.5 * dpsi * (xn - p.x_E_a) + 0.5 * dA * (xn + p.x_E_a - 2 * xd)
        Jl[3, 0] += 0.5 * psi + 0.5 * A + KN
        Jl[3, 3] += -A - KN - KE
        Jl[3] /= p.V_D_t
        J = model.jacobian(x, p)
        assert np.linalg.norm(J - Jl) <= 1e-9 * np.linalg.norm(Jl)


def test_dimensional_report(dim):
    p = model.build_nondim(dim, mu=-5e-3, eta=-6.0)
    rep = model.dimensional_report(p, dim)
    assert rep["F_N_Sv"] == pytest.approx(-2.77, abs=0.01)
    assert rep["Delta_rho_kg_m3"] == pytest.approx(-4.55, abs=0.01)
    rep0 = model.dimensional_report(model.build_nondim(dim, mu=0.0, eta=0.0), dim)
    assert rep0["F_N_Sv"] == 0.0
    assert rep["time_unit_days"] == pytest.approx(3.974, abs=0.01)


def test_mu_coefficients(params, rng):
    """mu enters dy_N with +1 and dy_E with -1/V_E_t."""
    import dataclasses
    x = random_states(rng, 1)[0]
    d = 1e-3
    p2 = dataclasses.replace(params, mu=params.mu + d)
    diff = (model.rhs(x, p2) - model.rhs(x, params)) / d
    assert diff[0] == pytest.approx(0.0, abs=1e-14)
    assert diff[1] == pytest.approx(1.0, rel=1e-9)
    assert diff[2] == pytest.approx(-1.0 / params.V_E_t, rel=1e-9)
    assert diff[3] == pytest.approx(0.0, abs=1e-14)
