"""Backend parity and integrator validation."""

import numpy as np
import pytest

from amocbox import model
from amocbox._kernels import _fallback
from conftest import random_states

try:
    from amocbox._kernels import _core
    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE, reason="compiled core not built")

RTOL, ATOL = 1e-10, 1e-12
X0 = np.array([1.0, 0.0, 0.0, 0.5])


@needs_core
def test_rhs_jac_parity(params, rng):
    par = params.pack()
    for x in random_states(rng, 20):
        # identical formulas; only transcendental rounding may differ
        a, b = _core.rhs(x, par), _fallback.rhs(x, par)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-19)
        Ja, Jb = _core.jac(x, par), _fallback.jac(x, par)
        assert np.allclose(Ja, Jb, rtol=1e-12, atol=1e-16)


@needs_core
def test_flow_parity(params):
    par = params.pack()
    ra = _core.flow_to(X0, par, 0.0, 500.0, RTOL, ATOL, 10.0, 10**7)
    rb = _fallback.flow_to(X0, par, 0.0, 500.0, RTOL, ATOL, 10.0, 10**7)
    assert ra[0] == rb[0] == 0
    assert np.max(np.abs(ra[2] - rb[2])) < 1e-13


@needs_core
def test_sampled_parity(params):
    par = params.pack()
    s1, t1, times1, st1 = _core.flow_sampled(X0, par, 0.0, 200.0, 7.0,
                                             RTOL, ATOL, 10.0, 10**7)
    s2, t2, times2, st2 = _fallback.flow_sampled(X0, par, 0.0, 200.0, 7.0,
                                                 RTOL, ATOL, 10.0, 10**7)
    assert s1 == s2 == 0
    assert np.array_equal(times1, times2)
    assert np.max(np.abs(st1 - st2)) < 1e-12
    assert times1[0] == 0.0 and times1[-1] == pytest.approx(196.0)
    assert np.all(np.diff(times1) == pytest.approx(7.0))


@needs_core
def test_var_parity_and_fd(params):
    par = params.pack()
    ra = _core.flow_var(X0, par, 300.0, RTOL, ATOL, 10.0, 10**7, True)
    rb = _fallback.flow_var(X0, par, 300.0, RTOL, ATOL, 10.0, 10**7, True)
    assert np.max(np.abs(ra[3] - rb[3])) < 1e-10
    assert np.max(np.abs(ra[4] - rb[4])) < 1e-9
    assert ra[5] == pytest.approx(rb[5], rel=1e-10)
    # variational matrix equals finite differences of the flow map
    Phi = ra[3]
    h = 1e-7
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        yp = _core.flow_to(X0 + e, par, 0.0, 300.0, 1e-12, 1e-14, 10.0, 10**7)[2]
        ym = _core.flow_to(X0 - e, par, 0.0, 300.0, 1e-12, 1e-14, 10.0, 10**7)[2]
        fd = (yp - ym) / (2 * h)
        assert np.max(np.abs(Phi[:, j] - fd)) < 1e-5 * max(1.0, np.max(np.abs(fd)))


@needs_core
def test_mu_sensitivity_fd(params):
    import dataclasses
    par = params.pack()
    dmu = _core.flow_var(X0, par, 300.0, RTOL, ATOL, 10.0, 10**7, True)[4]
    d = 1e-8
    pp = dataclasses.replace(params, mu=params.mu + d).pack()
    pm = dataclasses.replace(params, mu=params.mu - d).pack()
    yp = _core.flow_to(X0, pp, 0.0, 300.0, 1e-12, 1e-14, 10.0, 10**7)[2]
    ym = _core.flow_to(X0, pm, 0.0, 300.0, 1e-12, 1e-14, 10.0, 10**7)[2]
    fd = (yp - ym) / (2 * d)
    assert np.max(np.abs(dmu - fd)) < 1e-4 * max(1.0, np.max(np.abs(fd)))


def test_dense_output_accuracy(params):
    # dense samples agree with direct integration to each sample time
    par = params.pack()
    k = _core if HAVE_CORE else _fallback
    s, t, times, states = k.flow_sampled(X0, par, 0.0, 100.0, 3.0,
                                         1e-11, 1e-13, 10.0, 10**7)
    for i in (7, 19, 31):
        y_direct = k.flow_to(X0, par, 0.0, float(times[i]), 1e-12, 1e-14,
                             10.0, 10**7)[2]
        assert np.max(np.abs(states[i] - y_direct)) < 1e-9


def test_time_reversibility(params):
    k = _core if HAVE_CORE else _fallback
    par = params.pack()
    s1, _, y1 = k.flow_to(X0, par, 0.0, 50.0, 1e-12, 1e-14, 10.0, 10**7)
    s2, _, y0 = k.flow_to(y1, par, 50.0, 0.0, 1e-12, 1e-14, 10.0, 10**7)
    assert s1 == s2 == 0
    assert np.max(np.abs(y0 - X0)) < 1e-6


def test_tangent_growth_matches_eigenvalue(params):
    """At a stable equilibrium the tangent decays at the leading rate."""
    from amocbox import equilibria
    k = _core if HAVE_CORE else _fallback
    p = params.with_forcing(mu=-1e-4, eta=-3.99)
    eq = equilibria.newton_equilibrium([2.37, -0.42, -0.40, -9.84], p)
    lam_true = float(np.max(eq.eigenvalues.real))
    par = p.pack()
    v0 = np.array([0.5, 0.5, 0.5, 0.5])
    s, t, y, v, logs = k.lyap_run(eq.state, v0, par, 40000.0, 100.0,
                                  1e-10, 1e-12, 10.0, 10**8)
    lam_est = float(np.sum(logs[-200:]) / (100.0 * 200))
    assert lam_est == pytest.approx(lam_true, rel=0.02)
