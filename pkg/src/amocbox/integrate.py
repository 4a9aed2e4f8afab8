"""Adaptive time integration and convective-shutdown event detection.

The 4D scaled system runs through the kernel backend (Dormand-Prince 5(4),
dense output).  The 6D dimensional system, needed for conservation checks,
uses a small generic stepper over the same tableau.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model
from ._kernels import get_backend, OK, MAX_STEPS_EXHAUSTED, NONFINITE
from ._kernels import _fallback as _fb


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-11
    max_step: float = 10.0           # caps steps so eps-width layers are seen
    dense_output_interval: float = 1.0
    max_steps: int = 50_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-2):
                raise ValueError(f"{name} must lie in (0, 1e-2]")
        if self.max_step <= 0.0 or self.dense_output_interval <= 0.0:
            raise ValueError("max_step and dense_output_interval must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


class IntegrationError(RuntimeError):
    def __init__(self, reason: str, t_last: float, y_last: np.ndarray):
        super().__init__(f"{reason} at t={t_last:.6g}")
        self.reason = reason
        self.t_last = t_last
        self.y_last = y_last


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    psi: np.ndarray
    K_N: np.ndarray
    K_E: np.ndarray
    params: model.NondimParams

    def __len__(self):
        return len(self.times)


@dataclass
class ShutdownEvent:
    t_enter_intermediate: float
    t_enter_diffusive: float
    t_recover: float
    min_K_N: float


def _raise_on_status(status, t, y):
    if status == MAX_STEPS_EXHAUSTED:
        raise IntegrationError("step-count exhausted", t, y)
    if status == NONFINITE:
        raise IntegrationError("nonfinite state", t, y)


def integrate(x0, p: model.NondimParams, t_span,
              cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Error-controlled solution sampled at the dense-output interval."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 == t1:
        raise ValueError("empty t_span")
    k = get_backend()
    status, t, times, states = k.flow_sampled(
        model.state_array(x0), p.pack(), t0, t1, cfg.dense_output_interval,
        cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.max_steps)
    if status != OK:
        _raise_on_status(status, t, states[-1] if len(states) else model.state_array(x0))
    d = model.derived_series(states, p)
    return Trajectory(times=times, states=states, psi=d["Psi"],
                      K_N=d["K_N"], K_E=d["K_E"], params=p)


def advance(x0, p: model.NondimParams, t_dur: float,
            cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    """Endpoint-only integration over a duration (transient discard)."""
    k = get_backend()
    status, t, y = k.flow_to(model.state_array(x0), p.pack(), 0.0, float(t_dur),
                             cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.max_steps)
    if status != OK:
        _raise_on_status(status, t, y)
    return y


# ---------------------------------------------------------------------------
# Shutdown events
# ---------------------------------------------------------------------------

_CONV, _INTER, _DIFF = 1, 0, -1


def _regimes(traj: Trajectory, a_star: float) -> np.ndarray:
    a = model.sigmoid_argument(traj.states, traj.params, "N")
    return np.where(a >= a_star, _CONV, np.where(a <= -a_star, _DIFF, _INTER))


def _refine_crossing(traj: Trajectory, i: int, threshold: float,
                     cfg: IntegratorConfig, time_tol: float = 1e-3) -> float:
    """Bisect the time where a_N crosses ``threshold`` in (t[i-1], t[i]]."""
    p = traj.params
    par = p.pack()
    k = get_backend()
    t_a, t_b = float(traj.times[i - 1]), float(traj.times[i])
    y_a = traj.states[i - 1].copy()
    g_a = model.sigmoid_argument(y_a, p, "N") - threshold
    while t_b - t_a > time_tol:
        t_m = 0.5 * (t_a + t_b)
        status, _, y_m = k.flow_to(y_a, par, t_a, t_m, cfg.rel_tol, cfg.abs_tol,
                                   cfg.max_step, cfg.max_steps)
        if status != OK:
            break
        g_m = model.sigmoid_argument(y_m, p, "N") - threshold
        if g_a * g_m <= 0.0:
            t_b = t_m
        else:
            t_a, y_a, g_a = t_m, y_m, g_m
    return 0.5 * (t_a + t_b)


def detect_shutdowns(traj: Trajectory, p: model.NondimParams = None,
                     a_star: float = model.A_STAR,
                     cfg: IntegratorConfig = IntegratorConfig(),
                     refine: bool = True, time_tol: float = 1e-3) -> list:
    """Maximal convective -> intermediate -> diffusive excursions of box N.

    Counting starts only once the trajectory has visited the convective
    sheet; re-entries to the intermediate band that do not reach the
    diffusive sheet are discarded.
    """
    if p is not None and p is not traj.params:
        traj = Trajectory(times=traj.times, states=traj.states, psi=traj.psi,
                          K_N=traj.K_N, K_E=traj.K_E, params=p)
    reg = _regimes(traj, a_star)
    events: list[ShutdownEvent] = []
    phase = "conv" if len(reg) and reg[0] == _CONV else "seek_conv"
    t_int = t_diff = None
    i_int = None

    def crossing(i, thr):
        if not refine:
            return float(traj.times[i])
        return _refine_crossing(traj, i, thr, cfg, time_tol)

    for i in range(1, len(reg)):
        r_prev, r = reg[i - 1], reg[i]
        if r_prev == _CONV and r == _DIFF:
            warnings.warn("regime jumped convective->diffusive between samples; "
                          "dense_output_interval too coarse", RuntimeWarning)
        if phase == "seek_conv":
            if r == _CONV:
                phase = "conv"
            continue
        if phase == "conv":
            if r == _INTER:
                t_int, i_int = crossing(i, a_star), i
                phase = "inter"
            elif r == _DIFF:
                # skipped the band entirely; place both crossings here
                t_int, i_int = crossing(i, a_star), i
                t_diff = crossing(i, -a_star)
                phase = "diff"
        elif phase == "inter":
            if r == _DIFF:
                t_diff = crossing(i, -a_star)
                phase = "diff"
            elif r == _CONV:
                phase = "conv"      # no shutdown: did not reach diffusive
                t_int = i_int = None
        elif phase == "diff":
            if r == _CONV:
                t_rec = crossing(i, a_star)
                k_slice = traj.K_N[max(i_int - 1, 0):i + 1]
                events.append(ShutdownEvent(
                    t_enter_intermediate=float(t_int),
                    t_enter_diffusive=float(t_diff),
                    t_recover=float(t_rec),
                    min_K_N=float(np.min(k_slice))))
                phase = "conv"
                t_int = t_diff = i_int = None
    return events


# ---------------------------------------------------------------------------
# 6D dimensional system
# ---------------------------------------------------------------------------

def _generic_rk45(f, y0, t0, t1, rtol, atol, max_step, max_steps):
    """Minimal adaptive DOPRI5 over a Python callback (endpoint only)."""
    y = np.asarray(y0, dtype=float).copy()
    t = t0
    fy = f(y)
    span = abs(t1 - t0)
    direction = 1.0 if t1 >= t0 else -1.0
    scale0 = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale0) ** 2))
    d1 = np.sqrt(np.mean((fy / scale0) ** 2))
    h = min(max_step, 0.01 * d0 / d1 if d0 > 1e-12 and d1 > 1e-12 else 1e-3 * span)
    steps = 0
    K = np.zeros((7, len(y)))
    while direction * (t1 - t) > 1e-12 * max(1.0, span):
        if steps >= max_steps:
            raise IntegrationError("step-count exhausted", t, y)
        steps += 1
        hs = min(h, abs(t1 - t))
        K[0] = fy
        for s in range(1, 6):
            K[s] = f(y + hs * direction * (K[:s].T @ _fb._A[s, :s]))
        y_new = y + hs * direction * (K[:6].T @ _fb._B)
        K[6] = f(y_new)
        err = hs * (K.T @ _fb._E)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not np.isfinite(enorm) or enorm > 1.0:
            h = hs * max(0.2, 0.9 * enorm ** -0.2 if np.isfinite(enorm) else 0.2)
            if h < 1e-12 * span:
                raise IntegrationError("nonfinite state", t, y)
            continue
        t += hs * direction
        y, fy = y_new, K[6]
        h = min(max_step, hs * min(5.0, 0.9 * enorm ** -0.2 if enorm > 0 else 5.0))
    return y


def integrate_full(fs0, dim: model.DimensionalParams, t_span_nondim,
                   cfg: IntegratorConfig = IntegratorConfig(),
                   n_samples: int = 0):
    """Integrate the 6D budgets over a span given in scaled time units.

    Returns the final state, or (times_nondim, states) when ``n_samples``
    is positive.
    """
    unit = dim.V_N / dim.sigma  # seconds per scaled unit
    t0, t1 = (float(t_span_nondim[0]) * unit, float(t_span_nondim[1]) * unit)
    f = lambda y: model.rhs_full(y, dim)
    max_step = cfg.max_step * unit
    if n_samples <= 0:
        return _generic_rk45(f, fs0, t0, t1, cfg.rel_tol, cfg.abs_tol,
                             max_step, cfg.max_steps)
    ts = np.linspace(t0, t1, n_samples + 1)
    out = [np.asarray(fs0, dtype=float)]
    y = out[0]
    for a, b in zip(ts[:-1], ts[1:]):
        y = _generic_rk45(f, y, a, b, cfg.rel_tol, cfg.abs_tol, max_step,
                          cfg.max_steps)
        out.append(y)
    return ts / unit, np.array(out)


def total_salt(fs, dim: model.DimensionalParams) -> float:
    fs = np.asarray(fs, dtype=float)
    return float(dim.V_N * fs[3] + dim.V_E * fs[4] + dim.V_D * fs[5])


def total_heat(fs, dim: model.DimensionalParams) -> float:
    fs = np.asarray(fs, dtype=float)
    return float(dim.V_N * fs[0] + dim.V_E * fs[1] + dim.V_D * fs[2])
