import numpy as np
import pytest

from amocbox import model, integrate, equilibria as eq, cycles


@pytest.fixture(scope="module")
def p1(dim):
    """Forcing of the period-1 Welander oscillation."""
    return model.build_nondim(dim, mu=-2.1086e-3, eta=-3.99)


@pytest.fixture(scope="module")
def orbit1(p1):
    x = np.array([1.6073, 1.2015, 2.3175, -3.6961])
    x = integrate.advance(x, p1, 6e5)
    return cycles.capture_orbit(x, p1, t_search=1.2e5, recurrence_tol=1e-4)


def test_capture_period1(orbit1):
    assert orbit1.residual < 1e-10
    assert 2e4 < orbit1.period < 4e4
    assert orbit1.stable


def test_trivial_multiplier(orbit1):
    triv = orbit1.multipliers[orbit1.trivial_index]
    assert abs(triv - 1.0) < 1e-6


def test_liouville_identity(orbit1):
    # product of multipliers vs exp of the trace integral, in log space
    rel = abs(np.expm1(orbit1.logdet - orbit1.trace_integral))
    assert rel < 1e-6
    assert orbit1.det_sign == 1.0


def test_multiplier_product_matches_det(p1, orbit1):
    # on this orbit the multipliers span ~1e-166; eig still matches the
    # dominant part, and det matches through the log-sum
    m = orbit1.multipliers
    assert np.max(np.abs(m)) < 2.0
    prod_big = np.prod([z for z in m if abs(z) > 1e-12])
    assert np.isfinite(prod_big.real)


def test_reconvergence_is_immediate(p1, orbit1):
    orb2 = cycles.solve_cycle(orbit1, p1, max_iter=2)
    assert orb2.residual < 1e-10
    assert orb2.period == pytest.approx(orbit1.period, rel=1e-9)


def test_phase_shift_invariance(p1, orbit1):
    """Starting the mesh a third of a period later gives the same orbit set."""
    tr = cycles.sample_orbit(orbit1, p1)
    shift = len(tr.times) // 3
    t_sh = tr.times[shift:] - tr.times[shift]
    s_sh = tr.states[shift:]
    guess = cycles.orbit_from_trajectory(
        np.concatenate([t_sh, t_sh[-1] + tr.times[1:shift + 1]]),
        np.concatenate([s_sh, tr.states[1:shift + 1]]), orbit1.period, p1)
    orb2 = cycles.solve_cycle(guess, p1)
    assert orb2.period == pytest.approx(orbit1.period, rel=1e-8)
    # points of orb2 lie on orbit1's curve: coarse nearest sample, then a
    # fine re-sampling of the bracketing arc
    cfg = integrate.IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14,
                                     dense_output_interval=orbit1.period / 2e6)
    d_worst = 0.0
    for srow in orb2.states[::8]:
        i = int(np.argmin(np.max(np.abs(tr.states - srow), axis=1)))
        lo = max(i - 2, 0)
        t_span = (float(tr.times[lo]),
                  float(tr.times[min(i + 2, len(tr.times) - 1)]))
        fine = integrate.integrate(tr.states[lo], p1,
                                   (0.0, t_span[1] - t_span[0]), cfg)
        d2 = np.sum((fine.states - srow) ** 2, axis=1)
        j = int(np.argmin(d2))
        if 0 < j < len(d2) - 1:
            # parabolic minimum of the squared distance along the curve
            a, b, c = d2[j - 1], d2[j], d2[j + 1]
            denom = a - 2 * b + c
            d2min = b - 0.125 * (a - c) ** 2 / denom if denom > 0 else b
        else:
            d2min = d2[j]
        d_worst = max(d_worst, float(np.sqrt(max(d2min, 0.0))))
    assert d_worst < 1e-8


def test_orbit_closure_via_reintegration(p1, orbit1):
    cfg = integrate.IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14,
                                     dense_output_interval=orbit1.period)
    y_end = integrate.advance(orbit1.states[0], p1, orbit1.period, cfg)
    assert np.linalg.norm(y_end - orbit1.states[0]) < 1e-8


def test_shutdown_count_and_mesh_invariance(p1, orbit1):
    assert cycles.count_shutdowns(orbit1, p1) == 1
    orb_fine = cycles.remesh(orbit1, p1, n_seg=60)
    orb_fine = cycles.solve_cycle(orb_fine, p1)
    assert cycles.count_shutdowns(orb_fine, p1) == 1
    assert orb_fine.period == pytest.approx(orbit1.period, rel=1e-8)


def test_stability_agrees_with_simulation(p1, orbit1):
    tr = cycles.sample_orbit(orbit1, p1)
    x = orbit1.states[0] + 1e-6
    y = integrate.advance(x, p1, 10.0 * orbit1.period)
    dist = float(np.min(np.max(np.abs(tr.states - y), axis=1)))
    assert dist < 1e-4


def test_hopf_start_supercritical(dim):
    """At eta=-3.72 the family from H1 is born stable (supercritical)."""
    p = model.build_nondim(dim, mu=-2.085e-3, eta=-3.72)
    start = [r for r in eq.find_all_equilibria(p, points_per_axis=4)
             if r.stable and r.direction == "N"][0]
    br = eq.continue_eq_branch(start, p, (-2.12e-3, -2.0e-3), ds=2e-5,
                               ds_max=2e-4)
    h = [b for b in br.bifurcations if b.kind == "H"][0]
    assert h.l1 < 0  # supercritical
    pp = p.with_forcing(mu=h.eq.mu)
    w = eq._eigvec_for(model.jacobian(h.eq.state, pp), complex(0.0, h.omega))
    orb = cycles.solve_cycle_from_hopf(h.eq.state, h.omega, w, pp,
                                       amplitude=1e-4)
    assert orb.residual < 1e-10
    assert orb.period == pytest.approx(2 * np.pi / h.omega, rel=0.05)
    assert orb.stable  # consistent with l1 < 0
    # zero-amplitude degenerate orbit: the equilibrium solves the BVP
    const = cycles.PeriodicOrbit(
        fractions=np.arange(20) / 20.0,
        states=np.tile(h.eq.state, (20, 1)),
        period=2 * np.pi / h.omega, mu=h.eq.mu, eta=p.eta)
    seg = cycles._segment_flows(const.states, const.fractions, const.period,
                                pp.pack(), False, 1e-11, 1e-13)
    assert float(np.max(np.abs(seg.ends - np.roll(const.states, -1, axis=0)))) < 1e-9


def test_subcritical_start_unstable(p1):
    """At eta=-3.99 (l1>0) the small orbit from H1 is unstable."""
    h = eq.solve_hopf_point(np.array([1.637, 0.998, 1.982, -3.693]),
                            p1.with_forcing(mu=-2.077e-3))
    assert h is not None
    assert h.l1 > 0
    pp = p1.with_forcing(mu=h.eq.mu)
    w = eq._eigvec_for(model.jacobian(h.eq.state, pp), complex(0.0, h.omega))
    orb = cycles.solve_cycle_from_hopf(h.eq.state, h.omega, w, pp,
                                       amplitude=1e-4)
    assert not orb.stable
    # subcritical: the small orbit exists where the equilibrium is stable,
    # toward larger mu than the Hopf
    assert orb.mu > h.eq.mu
