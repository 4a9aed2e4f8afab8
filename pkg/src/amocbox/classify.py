"""Attractor classification: equilibrium / periodic / Welander / chaotic."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import model, integrate, lyapunov
from ._kernels import get_backend, OK


class Kind(Enum):
    EQUILIBRIUM_N = "EquilibriumN"
    EQUILIBRIUM_S = "EquilibriumS"
    PERIODIC_NON_WELANDER = "PeriodicNonWelander"
    PERIODIC_WELANDER = "PeriodicWelander"
    CHAOTIC = "Chaotic"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class ClassifyConfig:
    t_transient: float = 1e5
    t_window: float = 2e5
    dense_interval: float = 1.0
    recurrence_tol: float = 1e-6
    min_period: float = 100.0
    equilibrium_tol: float = 1e-9
    equilibrium_hold: float = 1e3
    x0: tuple = lyapunov.DEFAULT_X0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 10.0
    extra_windows: int = 2          # retries when recurrence has not locked
    lyap: lyapunov.LyapunovConfig = lyapunov.LyapunovConfig()


@dataclass
class AttractorLabel:
    kind: Kind
    k: int = 0                      # shutdown events per period
    period: float = math.nan
    lambda_max: float = math.nan
    psi_mean: float = math.nan
    psi_min: float = math.nan
    psi_max: float = math.nan
    note: str = ""

    @property
    def is_periodic(self) -> bool:
        return self.kind in (Kind.PERIODIC_WELANDER, Kind.PERIODIC_NON_WELANDER)


def _integrator_cfg(cfg: ClassifyConfig) -> integrate.IntegratorConfig:
    return integrate.IntegratorConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                                      max_step=cfg.max_step,
                                      dense_output_interval=cfg.dense_interval)


def _find_recurrence(traj: integrate.Trajectory, cfg: ClassifyConfig,
                     screen: float = 1e-3):
    """Nearest return to the first sample, refined below sampling resolution.

    The sampled distance is bounded below by dt * speed, so candidates are
    screened loosely and the return is re-resolved on a fine local grid with
    a parabolic minimum of the squared distance.
    """
    ref = traj.states[0]
    dist = np.max(np.abs(traj.states - ref), axis=1)
    start = int(np.searchsorted(traj.times, cfg.min_period))
    dt = float(traj.times[1] - traj.times[0])
    for i in range(max(start, 2), len(dist) - 2):
        if not (dist[i] < screen and dist[i] <= dist[i - 1]
                and dist[i] <= dist[i + 1]):
            continue
        t_ret, d_ret = _refine_return(traj, i, ref, dt, cfg)
        if d_ret < cfg.recurrence_tol:
            return float(t_ret)
    return None


def _refine_return(traj, i, ref, dt, cfg):
    fine_cfg = integrate.IntegratorConfig(
        rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, max_step=cfg.max_step,
        dense_output_interval=dt / 32.0)
    t0 = float(traj.times[i - 2])
    fine = integrate.integrate(traj.states[i - 2], traj.params,
                               (0.0, 4.0 * dt), fine_cfg)
    d2 = np.sum((fine.states - ref) ** 2, axis=1)
    j = int(np.argmin(d2))
    t_best = t0 + float(fine.times[j])
    d2_best = d2[j]
    if 0 < j < len(d2) - 1:
        a, b, c = d2[j - 1], d2[j], d2[j + 1]
        denom = a - 2 * b + c
        if denom > 0:
            shift = 0.5 * (a - c) / denom
            d2_best = b - 0.125 * (a - c) ** 2 / denom
            t_best = t0 + float(fine.times[j]) + shift * (dt / 32.0)
    # distances in the max norm for the acceptance decision
    d_inf = float(np.min(np.max(np.abs(fine.states - ref), axis=1)))
    d_par = math.sqrt(max(d2_best, 0.0))  # 2-norm lower bound via parabola
    return t_best, min(d_inf, d_par)


def classify_attractor(mu: float, eta: float, p: model.NondimParams,
                       x0=None, cfg: ClassifyConfig = ClassifyConfig()) -> AttractorLabel:
    """Label the attractor reached from x0 at the given forcing.

    Pipeline: transient discard, equilibrium test (sustained small state
    velocity), recurrence-based period estimate with shutdown counting, and
    a lambda_max fallback separating Chaotic from Unresolved.
    """
    k = get_backend()
    pp = p.with_forcing(mu=mu, eta=eta)
    par = pp.pack()
    x = np.asarray(x0 if x0 is not None else cfg.x0, dtype=float)
    icfg = _integrator_cfg(cfg)

    try:
        y = integrate.advance(x, pp, cfg.t_transient, icfg)
    except integrate.IntegrationError as err:
        return AttractorLabel(kind=Kind.UNRESOLVED, note=f"transient: {err.reason}")

    # equilibrium test: ||rhs|| below tolerance, sustained over a hold window
    fn = float(np.linalg.norm(k.rhs(y, par)))
    if fn < cfg.equilibrium_tol:
        y_hold = integrate.advance(y, pp, cfg.equilibrium_hold, icfg)
        fn_hold = float(np.linalg.norm(k.rhs(y_hold, par)))
        if fn_hold < cfg.equilibrium_tol:
            psi_val = model.psi(y_hold, pp)
            kind = Kind.EQUILIBRIUM_N if psi_val >= 0.0 else Kind.EQUILIBRIUM_S
            return AttractorLabel(kind=kind, psi_mean=psi_val,
                                  psi_min=psi_val, psi_max=psi_val)

    period = None
    traj = None
    for attempt in range(1 + cfg.extra_windows):
        traj = integrate.integrate(y, pp, (0.0, cfg.t_window), icfg)
        period = _find_recurrence(traj, cfg)
        if period is not None:
            break
        y = traj.states[-1]

    if period is None:
        # slow monotone approach to an equilibrium: the velocity test above
        # needs ||rhs|| < tol, unreachable within the window for the slowest
        # modes; capture the target by Newton and check the approach instead
        lab = _newton_equilibrium_capture(traj, pp)
        if lab is not None:
            return lab

    if period is not None:
        one = traj.states[traj.times <= period + cfg.dense_interval]
        psi_series = model.psi(one, pp)
        sub = integrate.Trajectory(
            times=traj.times[:len(one)], states=one,
            psi=psi_series,
            K_N=model.conv_exchange(one, pp, "N"),
            K_E=model.conv_exchange(one, pp, "E"), params=pp)
        n_events = _count_events_per_period(traj, pp, period, cfg)
        kind = Kind.PERIODIC_WELANDER if n_events >= 1 else Kind.PERIODIC_NON_WELANDER
        return AttractorLabel(kind=kind, k=n_events, period=period,
                              psi_mean=float(np.mean(psi_series)),
                              psi_min=float(np.min(psi_series)),
                              psi_max=float(np.max(psi_series)))

    lr = lyapunov.lambda_max(mu, eta, pp, _lyap_cfg_from(cfg, x))
    psi_series = model.psi(traj.states, pp)
    diag = dict(lambda_max=lr.lambda_raw,
                psi_mean=float(np.mean(psi_series)),
                psi_min=float(np.min(psi_series)),
                psi_max=float(np.max(psi_series)))
    if lr.converged and lr.lambda_raw > cfg.lyap.chaos_threshold:
        return AttractorLabel(kind=Kind.CHAOTIC, **diag)
    if not math.isnan(lr.lambda_raw) and lr.lambda_raw > cfg.lyap.chaos_threshold:
        return AttractorLabel(kind=Kind.CHAOTIC, note="lambda unconverged", **diag)
    return AttractorLabel(kind=Kind.UNRESOLVED, note="no recurrence", **diag)


def _lyap_cfg_from(cfg: ClassifyConfig, x0) -> lyapunov.LyapunovConfig:
    from dataclasses import replace
    return replace(cfg.lyap, x0=tuple(float(v) for v in x0))


def _newton_equilibrium_capture(traj, pp):
    from . import equilibria
    y_end = traj.states[-1]
    try:
        eq = equilibria.newton_equilibrium(y_end, pp)
    except (equilibria.NoConvergence, equilibria.NearBifurcation):
        return None
    if not eq.stable:
        return None
    d = np.max(np.abs(traj.states - eq.state), axis=1)
    n = len(d)
    q = n // 4
    coarse = d[q::max(1, (n - q) // 40)]
    monotone = bool(np.all(np.diff(coarse) <= 1e-3 * d[q] + 1e-12))
    if not (monotone and d[-1] < 0.8 * d[q]):
        return None  # not an established approach toward the root
    psi_val = model.psi(eq.state, pp)
    kind = Kind.EQUILIBRIUM_N if psi_val >= 0.0 else Kind.EQUILIBRIUM_S
    return AttractorLabel(kind=kind, psi_mean=psi_val, psi_min=psi_val,
                          psi_max=psi_val, note="newton capture")


def _count_events_per_period(traj, pp, period, cfg: ClassifyConfig) -> int:
    a = model.sigmoid_argument(traj.states, pp, "N")
    conv_idx = np.nonzero(a >= model.A_STAR)[0]
    if len(conv_idx) == 0:
        return 0
    icfg = _integrator_cfg(cfg)
    x_c = traj.states[conv_idx[0]]
    tr2 = integrate.integrate(x_c, pp, (0.0, 1.2 * period), icfg)
    events = integrate.detect_shutdowns(tr2, cfg=icfg)
    return sum(1 for ev in events if ev.t_enter_intermediate < period)


def _cell(args):
    mu, eta, p, x0, cfg = args
    try:
        return (mu, eta, classify_attractor(mu, eta, p, x0, cfg))
    except Exception as err:
        return (mu, eta, AttractorLabel(kind=Kind.UNRESOLVED, note=str(err)))


def classify_sweep(mu_values, eta_values, p: model.NondimParams,
                   cfg: ClassifyConfig = ClassifyConfig(), x0=None,
                   processes: int | None = None, progress=None) -> list:
    """Parallel per-cell classification; deterministic assembly order."""
    mu_values = np.atleast_1d(np.asarray(mu_values, dtype=float))
    eta_values = np.atleast_1d(np.asarray(eta_values, dtype=float))
    jobs = [(float(mu), float(eta), p, x0, cfg)
            for eta in eta_values for mu in mu_values]
    n_proc = processes if processes is not None else lyapunov.thread_count()
    out = []
    if n_proc <= 1:
        for i, job in enumerate(jobs):
            out.append(_cell(job))
            if progress is not None:
                progress(i + 1, len(jobs))
    else:
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        with ctx.Pool(n_proc) as pool:
            for i, res in enumerate(pool.imap(_cell, jobs, chunksize=2)):
                out.append(res)
                if progress is not None:
                    progress(i + 1, len(jobs))
    return out
