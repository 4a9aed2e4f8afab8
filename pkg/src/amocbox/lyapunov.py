"""Maximal Lyapunov exponent (variational method) and (mu, eta) sweeps."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import model
from ._kernels import get_backend, OK, NONFINITE

DEFAULT_X0 = (1.0, 0.0, 0.0, 0.5)
CHAOS_THRESHOLD = 1e-6


@dataclass(frozen=True)
class LyapunovConfig:
    t_transient: float = 1e5
    t_measure: float = 4e5
    renorm_interval: float = 100.0
    chaos_threshold: float = CHAOS_THRESHOLD
    x0: tuple = DEFAULT_X0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-11
    max_step: float = 10.0
    max_steps: int = 200_000_000

    def __post_init__(self):
        for name in ("t_transient", "t_measure", "renorm_interval",
                     "chaos_threshold"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class LyapunovResult:
    mu: float
    eta: float
    lambda_raw: float
    converged: bool
    history: np.ndarray = field(repr=False, default=None)
    basin_note: str = ""
    error: str = ""

    @property
    def lambda_thresholded(self) -> float:
        # values below the noise threshold are reported as zero
        return self.lambda_raw if self.lambda_raw > CHAOS_THRESHOLD else 0.0

    def thresholded(self, threshold: float) -> float:
        return self.lambda_raw if self.lambda_raw > threshold else 0.0


def lambda_max(mu: float, eta: float, p: model.NondimParams,
               cfg: LyapunovConfig = LyapunovConfig(),
               tangent=None) -> LyapunovResult:
    """Benettin estimate of the maximal Lyapunov exponent at (mu, eta).

    Integrates the state together with one tangent vector of the exact
    variational equations, renormalizing every ``renorm_interval`` and
    averaging the accumulated log growth over ``t_measure`` after the
    transient.  The convergence flag requires the running estimate to vary
    by less than 10% (relative to the final value, with an absolute floor at
    the chaos threshold) over the final quarter of the window.
    """
    k = get_backend()
    pp = p.with_forcing(mu=mu, eta=eta)
    par = pp.pack()
    x0 = np.asarray(cfg.x0, dtype=float)

    status, t_end, y = k.flow_to(x0, par, 0.0, cfg.t_transient, cfg.rel_tol,
                                 cfg.abs_tol, cfg.max_step, cfg.max_steps)
    if status != OK:
        return LyapunovResult(mu=mu, eta=eta, lambda_raw=math.nan,
                              converged=False,
                              error=f"transient failed (status {status}, t={t_end:.3g})")

    if tangent is None:
        tangent = np.array([1.0, 1.0, 1.0, 1.0])
    v0 = np.asarray(tangent, dtype=float)
    v0 = v0 / np.linalg.norm(v0)

    n_int = int(round(cfg.t_measure / cfg.renorm_interval))
    t_total = n_int * cfg.renorm_interval
    status, t_end, y, v, logs = k.lyap_run(y, v0, par, t_total,
                                           cfg.renorm_interval, cfg.rel_tol,
                                           cfg.abs_tol, cfg.max_step,
                                           cfg.max_steps)
    if status != OK or len(logs) == 0:
        return LyapunovResult(mu=mu, eta=eta, lambda_raw=math.nan,
                              converged=False,
                              error=f"measurement failed (status {status}, t={t_end:.3g})")

    cum = np.cumsum(logs)
    times = cfg.renorm_interval * np.arange(1, len(logs) + 1)
    running = cum / times
    lam = float(running[-1])

    q = max(1, len(running) // 4)
    tail = running[-q:]
    spread = float(np.max(tail) - np.min(tail))
    converged = spread < 0.1 * max(abs(lam), cfg.chaos_threshold)

    note = ""
    f_end = k.rhs(np.ascontiguousarray(y), par)
    if float(np.linalg.norm(f_end)) < 1e-9:
        note = "equilibrium"
    return LyapunovResult(mu=mu, eta=eta, lambda_raw=lam, converged=converged,
                          history=running, basin_note=note)


def _cell(args):
    mu, eta, p, cfg = args
    try:
        return lambda_max(mu, eta, p, cfg)
    except Exception as err:  # per-cell failures recorded, sweep continues
        return LyapunovResult(mu=mu, eta=eta, lambda_raw=math.nan,
                              converged=False, error=str(err))


def thread_count() -> int:
    env = os.environ.get("AMOCBOX_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sweep(mu_values, eta_values, p: model.NondimParams,
          cfg: LyapunovConfig = LyapunovConfig(), processes: int | None = None,
          progress=None) -> list:
    """Raster of lambda_max over the grid, row-major in eta then mu.

    Cells run in a process pool; assembly order is fixed by the grid, so the
    raster is deterministic for a given configuration.
    """
    mu_values = np.atleast_1d(np.asarray(mu_values, dtype=float))
    eta_values = np.atleast_1d(np.asarray(eta_values, dtype=float))
    if len(mu_values) * len(eta_values) < 4:
        raise ValueError("sweep grid must be at least 2x2")
    jobs = [(float(mu), float(eta), p, cfg)
            for eta in eta_values for mu in mu_values]
    n_proc = processes if processes is not None else thread_count()
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
            for i, res in enumerate(pool.imap(_cell, jobs, chunksize=4)):
                out.append(res)
                if progress is not None:
                    progress(i + 1, len(jobs))
    for r in out:
        r.history = None  # drop bulky per-cell histories in raster output
    return out
