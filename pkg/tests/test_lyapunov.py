import numpy as np
import pytest

from amocbox import model, lyapunov


@pytest.fixture(scope="module")
def base(dim):
    return model.build_nondim(dim)


def test_negative_at_stable_equilibrium(base):
    r = lyapunov.lambda_max(-1e-4, -3.99, base)  # default horizons
    assert r.lambda_raw < 0
    assert r.converged
    assert r.lambda_thresholded == 0.0
    # a strongly contracting equilibrium basin gets the note
    r2 = lyapunov.lambda_max(-2.128e-3, -3.99, base,
                             lyapunov.LyapunovConfig(t_transient=1e5,
                                                     t_measure=4e5))
    assert r2.basin_note == "equilibrium"
    assert r2.lambda_raw < 0


def test_thresholding_exact(base):
    r = lyapunov.LyapunovResult(mu=0, eta=0, lambda_raw=2e-6, converged=True)
    assert r.lambda_thresholded == 2e-6
    r2 = lyapunov.LyapunovResult(mu=0, eta=0, lambda_raw=9.9e-7, converged=True)
    assert r2.lambda_thresholded == 0.0
    assert r2.thresholded(5e-7) == 9.9e-7


def test_deterministic(base):
    cfg = lyapunov.LyapunovConfig(t_transient=1e4, t_measure=5e4)
    r1 = lyapunov.lambda_max(-1e-4, -3.99, base, cfg)
    r2 = lyapunov.lambda_max(-1e-4, -3.99, base, cfg)
    assert r1.lambda_raw == r2.lambda_raw


def test_renorm_interval_independence(base):
    vals = []
    for renorm in (100.0, 50.0):
        cfg = lyapunov.LyapunovConfig(t_transient=2e4, t_measure=1e5,
                                      renorm_interval=renorm)
        vals.append(lyapunov.lambda_max(-1e-4, -3.99, base, cfg).lambda_raw)
    assert abs(vals[1] - vals[0]) < 0.1 * abs(vals[0])


def test_tangent_independence(base, rng):
    cfg = lyapunov.LyapunovConfig(t_transient=2e4, t_measure=1e5)
    vals = [lyapunov.lambda_max(-1e-4, -3.99, base, cfg,
                                tangent=rng.normal(size=4)).lambda_raw
            for _ in range(2)]
    assert abs(vals[1] - vals[0]) < 0.1 * abs(vals[0])


def test_matches_leading_eigenvalue(base):
    from amocbox import equilibria
    p = base.with_forcing(mu=-1e-4, eta=-3.99)
    eq = equilibria.newton_equilibrium([2.37, -0.42, -0.40, -9.84], p)
    lam_lin = float(np.max(eq.eigenvalues.real))
    cfg = lyapunov.LyapunovConfig(t_transient=1e3, t_measure=2e6,
                                  x0=tuple(eq.state))
    r = lyapunov.lambda_max(-1e-4, -3.99, base, cfg)
    assert r.lambda_raw == pytest.approx(lam_lin, rel=0.05)


def test_sweep_small_grid(base):
    cfg = lyapunov.LyapunovConfig(t_transient=5e3, t_measure=2e4)
    res = lyapunov.sweep(np.linspace(-1.2e-4, -0.8e-4, 2),
                         np.linspace(-4.0, -3.9, 2), base, cfg, processes=2)
    assert len(res) == 4
    assert all(r.error == "" for r in res)
    # deterministic assembly order: row-major eta then mu
    assert res[0].mu == -1.2e-4 and res[0].eta == -4.0
    assert res[3].mu == -0.8e-4 and res[3].eta == -3.9
    with pytest.raises(ValueError):
        lyapunov.sweep([-1e-4], [-3.99], base, cfg)
