"""Periodic orbits: multiple shooting, Floquet analysis, branch continuation.

Orbits are discretized by multiple shooting on an adapted mesh (segment
boundaries equidistribute the integral of the state speed, which piles them
up along fast shutdown spikes).  The boundary-value problem couples the
segment states with the period through a discrete integral phase condition;
continuation frees mu as well and monitors the nontrivial Floquet
multipliers for saddle-node (S), period-doubling (PD) and torus (T)
crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model, integrate
from ._kernels import get_backend, OK

SEG_RTOL = 1e-11
SEG_ATOL = 1e-13
POLISH_RTOL = 1e-12
POLISH_ATOL = 1e-14
RESIDUAL_TOL = 1e-10
PERIOD_BLOWUP = 1e6
MIN_PERIOD = 1.0


class CycleError(RuntimeError):
    pass


@dataclass
class PeriodicOrbit:
    fractions: np.ndarray        # segment start fractions in [0, 1)
    states: np.ndarray           # (n_seg, 4) states at segment starts
    period: float
    mu: float
    eta: float
    residual: float = math.nan
    multipliers: np.ndarray | None = None
    logdet: float = math.nan     # log|det M| accumulated per segment
    det_sign: float = 1.0
    trace_integral: float = math.nan   # loop integral of tr J
    psi_max: float = math.nan
    psi_min: float = math.nan
    shutdown_count: int | None = None

    @property
    def n_seg(self) -> int:
        return len(self.fractions)

    @property
    def trivial_index(self) -> int:
        return int(np.argmin(np.abs(self.multipliers - 1.0)))

    @property
    def nontrivial(self) -> np.ndarray:
        return np.delete(self.multipliers, self.trivial_index)

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.nontrivial) < 1.0))


@dataclass
class CycleBifPoint:
    kind: str                    # 'S' | 'PD' | 'T'
    orbit: PeriodicOrbit


@dataclass
class CycleBranch:
    eta: float
    orbits: list = field(default_factory=list)
    bifurcations: list = field(default_factory=list)
    termination: str = "range"


# ---------------------------------------------------------------------------
# Segment integration
# ---------------------------------------------------------------------------

@dataclass
class _SegmentData:
    ends: np.ndarray
    Phis: np.ndarray
    dmus: np.ndarray | None
    traces: np.ndarray
    logdets: np.ndarray
    signs: np.ndarray
    f_ends: np.ndarray


def _durations(fractions, period):
    gaps = np.diff(np.concatenate([fractions, [1.0]]))
    return gaps * period


def _segment_flows(states, fractions, period, par, musens, rtol, atol) -> _SegmentData:
    k = get_backend()
    n = len(states)
    ends = np.empty((n, 4))
    Phis = np.empty((n, 4, 4))
    dmus = np.empty((n, 4)) if musens else None
    traces = np.empty(n)
    logdets = np.empty(n)
    signs = np.empty(n)
    f_ends = np.empty((n, 4))
    for i, dur in enumerate(_durations(fractions, period)):
        status, _, y, Phi, dmu, tr = k.flow_var(
            np.ascontiguousarray(states[i]), par, dur, rtol, atol,
            10.0, 50_000_000, musens)
        if status != OK:
            raise CycleError(f"segment {i} integration failed (status {status})")
        ends[i] = y
        Phis[i] = Phi
        traces[i] = tr
        sgn, ld = np.linalg.slogdet(Phi)
        logdets[i] = ld
        signs[i] = sgn
        f_ends[i] = k.rhs(np.ascontiguousarray(y), par)
        if musens:
            dmus[i] = dmu
    return _SegmentData(ends, Phis, dmus, traces, logdets, signs, f_ends)


def _assemble(states, fractions, period, seg: _SegmentData, ref_states,
              ref_f, weights, free_mu):
    """Residual and Jacobian of the shooting system.

    Unknowns (s_0..s_{n-1}, T[, mu]); equations: n continuity blocks plus
    the discrete integral phase condition.
    """
    n = len(states)
    dim = 4 * n + 1 + (1 if free_mu else 0)
    F = np.zeros(4 * n + 1)
    J = np.zeros((4 * n + 1, dim))
    gaps = np.diff(np.concatenate([fractions, [1.0]]))
    for i in range(n):
        nxt = (i + 1) % n
        F[4 * i:4 * i + 4] = seg.ends[i] - states[nxt]
        J[4 * i:4 * i + 4, 4 * i:4 * i + 4] = seg.Phis[i]
        J[4 * i:4 * i + 4, 4 * nxt:4 * nxt + 4] -= np.eye(4)
        J[4 * i:4 * i + 4, 4 * n] = gaps[i] * seg.f_ends[i]
        if free_mu:
            J[4 * i:4 * i + 4, 4 * n + 1] = seg.dmus[i]
    F[4 * n] = float(np.sum(weights[:, None] * (states - ref_states) * ref_f))
    for i in range(n):
        J[4 * n, 4 * i:4 * i + 4] = weights[i] * ref_f[i]
    return F, J


def _phase_reference(states, par):
    k = get_backend()
    return np.array([k.rhs(np.ascontiguousarray(s), par) for s in states])


# ---------------------------------------------------------------------------
# Fixed-parameter solve
# ---------------------------------------------------------------------------

def solve_cycle(guess: PeriodicOrbit, p: model.NondimParams,
                tol: float = RESIDUAL_TOL, max_iter: int = 25,
                rtol: float = SEG_RTOL, atol: float = SEG_ATOL,
                polish: bool = True) -> PeriodicOrbit:
    """Converge the periodic boundary-value problem at fixed parameters."""
    p = p.with_forcing(mu=guess.mu)
    par = p.pack()
    states = guess.states.copy()
    fractions = guess.fractions.copy()
    period = float(guess.period)
    ref_states = states.copy()
    ref_f = _phase_reference(states, par)
    weights = np.diff(np.concatenate([fractions, [1.0]]))
    n = len(states)

    seg = None
    res = math.inf
    for _ in range(max_iter):
        if not (MIN_PERIOD < period < PERIOD_BLOWUP):
            raise CycleError(f"period out of range: {period:.3g}")
        seg = _segment_flows(states, fractions, period, par, False, rtol, atol)
        F, J = _assemble(states, fractions, period, seg, ref_states, ref_f,
                         weights, free_mu=False)
        res = float(np.max(np.abs(F)))
        if res < tol:
            break
        try:
            du = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise CycleError("singular shooting Jacobian")
        if not np.all(np.isfinite(du)):
            raise CycleError("nonfinite Newton step")
        states = states + du[:4 * n].reshape(n, 4)
        period = period + du[4 * n]
    if res >= tol:
        raise CycleError(f"no convergence: residual {res:.2e}")

    if polish and rtol > POLISH_RTOL:
        orb = PeriodicOrbit(fractions=fractions, states=states, period=period,
                            mu=p.mu, eta=p.eta)
        return solve_cycle(orb, p, tol=tol, max_iter=8, rtol=POLISH_RTOL,
                           atol=POLISH_ATOL, polish=False)

    orbit = PeriodicOrbit(fractions=fractions, states=states, period=period,
                          mu=p.mu, eta=p.eta, residual=res)
    _finalize(orbit, seg, p)
    return orbit


def _finalize(orbit: PeriodicOrbit, seg: _SegmentData, p: model.NondimParams):
    M = _condensed_product(seg.Phis)
    orbit.multipliers = np.linalg.eigvals(M)
    orbit.logdet = float(np.sum(seg.logdets))
    orbit.det_sign = float(np.prod(seg.signs))
    orbit.trace_integral = float(np.sum(seg.traces))
    tr = sample_orbit(orbit, p)
    orbit.psi_max = float(np.max(tr.psi))
    orbit.psi_min = float(np.min(tr.psi))


def _condensed_product(Phis):
    """Monodromy as a product with norm rescaling against over/underflow."""
    M = np.eye(4)
    log_scale = 0.0
    for Phi in Phis:
        M = Phi @ M
        nrm = float(np.linalg.norm(M))
        if nrm > 1e100 or (0.0 < nrm < 1e-100):
            M /= nrm
            log_scale += math.log(nrm)
    if log_scale != 0.0:
        M *= math.exp(log_scale)
    return M


def floquet_multipliers(orbit: PeriodicOrbit, p: model.NondimParams,
                        rtol: float = POLISH_RTOL,
                        atol: float = POLISH_ATOL) -> np.ndarray:
    """(Re)compute multipliers from a fresh segment-wise variational solve."""
    p = p.with_forcing(mu=orbit.mu)
    par = p.pack()
    seg = _segment_flows(orbit.states, orbit.fractions, orbit.period, par,
                         False, rtol, atol)
    M = _condensed_product(seg.Phis)
    orbit.multipliers = np.linalg.eigvals(M)
    orbit.logdet = float(np.sum(seg.logdets))
    orbit.det_sign = float(np.prod(seg.signs))
    orbit.trace_integral = float(np.sum(seg.traces))
    return orbit.multipliers


def sample_orbit(orbit: PeriodicOrbit, p: model.NondimParams,
                 n_samples: int = 2000) -> integrate.Trajectory:
    """Dense one-period trajectory from the first mesh point."""
    cfg = integrate.IntegratorConfig(
        rel_tol=1e-10, abs_tol=1e-12,
        dense_output_interval=orbit.period / n_samples)
    return integrate.integrate(orbit.states[0], p.with_forcing(mu=orbit.mu),
                               (0.0, orbit.period), cfg)


# ---------------------------------------------------------------------------
# Mesh construction and orbit capture
# ---------------------------------------------------------------------------

def adapted_fractions(times, states, par, n_seg: int) -> np.ndarray:
    """Segment start fractions equidistributing the state-speed integral."""
    k = get_backend()
    speed = np.array([np.linalg.norm(k.rhs(np.ascontiguousarray(s), par))
                      for s in states])
    w = speed + 0.2 * float(np.mean(speed)) + 1e-300
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1])
                                           * np.diff(times))])
    cum /= cum[-1]
    targets = np.arange(n_seg) / n_seg
    fr = np.interp(targets, cum, (times - times[0]) / (times[-1] - times[0]))
    fr[0] = 0.0
    return fr


def orbit_from_trajectory(times, states, period, p: model.NondimParams,
                          n_seg: int = 40) -> PeriodicOrbit:
    """Shooting initial guess from one sampled period of a trajectory."""
    par = p.pack()
    mask = times - times[0] <= period
    t_one = times[mask]
    s_one = states[mask]
    fr = adapted_fractions(t_one, s_one, par, n_seg)
    idx = np.minimum(np.searchsorted(t_one - t_one[0], fr * period),
                     len(t_one) - 1)
    return PeriodicOrbit(fractions=fr, states=s_one[idx].copy(),
                         period=float(period), mu=p.mu, eta=p.eta)


def remesh(orbit: PeriodicOrbit, p: model.NondimParams,
           n_seg: int | None = None) -> PeriodicOrbit:
    """Re-adapt segment boundaries along a converged orbit."""
    n_seg = n_seg or orbit.n_seg
    tr = sample_orbit(orbit, p, n_samples=4000)
    return orbit_from_trajectory(tr.times, tr.states, orbit.period,
                                 p.with_forcing(mu=orbit.mu), n_seg)


def capture_orbit(x_on_attractor, p: model.NondimParams,
                  t_search: float = 3e5, dt: float = 1.0,
                  recurrence_tol: float = 1e-5, min_period: float = 100.0,
                  n_seg: int = 40) -> PeriodicOrbit:
    """Detect a periodic attractor by nearest return and converge it."""
    cfg = integrate.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12,
                                     dense_output_interval=dt)
    tr = integrate.integrate(x_on_attractor, p, (0.0, t_search), cfg)
    ref = tr.states[0]
    dist = np.max(np.abs(tr.states - ref), axis=1)
    start = int(np.searchsorted(tr.times, min_period))
    period = None
    for i in range(start, len(dist) - 1):
        if dist[i] < recurrence_tol and dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1]:
            period = tr.times[i]
            break
    if period is None:
        raise CycleError("no recurrence found; not on a periodic attractor?")
    guess = orbit_from_trajectory(tr.times, tr.states, period, p, n_seg)
    return solve_cycle(guess, p)


# ---------------------------------------------------------------------------
# Hopf start
# ---------------------------------------------------------------------------

def hopf_initial_orbit(x_star, omega: float, eigvec: np.ndarray,
                       p: model.NondimParams, amplitude: float = 1e-4,
                       n_seg: int = 40) -> PeriodicOrbit:
    """First-order predictor x(t) = x* + 2 sqrt(amp) Re(e^{i omega t} w)."""
    fr = np.arange(n_seg) / n_seg
    amp = 2.0 * math.sqrt(amplitude)
    states = np.array([x_star + amp * (np.exp(2j * math.pi * f) * eigvec).real
                       for f in fr])
    return PeriodicOrbit(fractions=fr, states=states,
                         period=2.0 * math.pi / omega, mu=p.mu, eta=p.eta)


def solve_cycle_from_hopf(x_star, omega: float, eigvec: np.ndarray,
                          p: model.NondimParams, amplitude: float = 1e-4,
                          n_seg: int = 40, max_iter: int = 30) -> PeriodicOrbit:
    """Converge a small orbit near a Hopf point with mu free.

    The amplitude is pinned by <s_0 - x*, w_r> = 2 sqrt(amp) |w_r| and the
    phase by <s_0 - x*, w_i> = 0, which excludes the zero-amplitude
    solution; mu adjusts to the amplitude.  Falls back to smaller amplitudes
    on failure (minimum 1e-6).
    """
    amp_try = amplitude
    last_err = None
    while amp_try >= 1e-6:
        try:
            return _solve_hopf_system(np.asarray(x_star, dtype=float), omega,
                                      eigvec, p, amp_try, n_seg, max_iter)
        except CycleError as err:
            last_err = err
            amp_try /= 10.0
    raise CycleError(f"Hopf predictor rejected down to amplitude 1e-6: {last_err}")


def _solve_hopf_system(x_star, omega, eigvec, p, amplitude, n_seg, max_iter):
    orbit = hopf_initial_orbit(x_star, omega, eigvec, p, amplitude, n_seg)
    states = orbit.states.copy()
    fractions = orbit.fractions
    period = orbit.period
    mu = p.mu
    wr = eigvec.real / np.linalg.norm(eigvec.real)
    wi = eigvec.imag / np.linalg.norm(eigvec.imag)
    target = float((states[0] - x_star) @ wr)
    n = n_seg

    for _ in range(max_iter):
        pp = p.with_forcing(mu=mu)
        par = pp.pack()
        seg = _segment_flows(states, fractions, period, par, True,
                             SEG_RTOL, SEG_ATOL)
        F = np.zeros(4 * n + 2)
        J = np.zeros((4 * n + 2, 4 * n + 2))
        gaps = np.diff(np.concatenate([fractions, [1.0]]))
        for i in range(n):
            nxt = (i + 1) % n
            F[4 * i:4 * i + 4] = seg.ends[i] - states[nxt]
            J[4 * i:4 * i + 4, 4 * i:4 * i + 4] = seg.Phis[i]
            J[4 * i:4 * i + 4, 4 * nxt:4 * nxt + 4] -= np.eye(4)
            J[4 * i:4 * i + 4, 4 * n] = gaps[i] * seg.f_ends[i]
            J[4 * i:4 * i + 4, 4 * n + 1] = seg.dmus[i]
        F[4 * n] = float((states[0] - x_star) @ wr) - target
        J[4 * n, 0:4] = wr
        F[4 * n + 1] = float((states[0] - x_star) @ wi)
        J[4 * n + 1, 0:4] = wi
        res = float(np.max(np.abs(F)))
        if res < RESIDUAL_TOL:
            orb = PeriodicOrbit(fractions=fractions.copy(), states=states,
                                period=period, mu=mu, eta=p.eta, residual=res)
            _finalize(orb, seg, pp)
            return orb
        try:
            du = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise CycleError("singular Hopf-start system")
        if not np.all(np.isfinite(du)):
            raise CycleError("nonfinite Newton step near Hopf")
        states = states + du[:4 * n].reshape(n, 4)
        period += du[4 * n]
        mu += du[4 * n + 1]
        if not (0.2 * orbit.period < period < 5.0 * orbit.period):
            raise CycleError("period ran away near Hopf")
    raise CycleError("no convergence of the Hopf-start system")


# ---------------------------------------------------------------------------
# Continuation
# ---------------------------------------------------------------------------

def _multiplier_tests(multipliers):
    triv = int(np.argmin(np.abs(multipliers - 1.0)))
    rest = np.delete(multipliers, triv)
    psi_s = float(np.real(np.prod(rest - 1.0)))
    psi_pd = float(np.real(np.prod(rest + 1.0)))
    psi_t = 1.0
    for i in range(len(rest)):
        for j in range(i + 1, len(rest)):
            psi_t *= float(np.real(rest[i] * rest[j] - 1.0))
    return {"S": psi_s, "PD": psi_pd, "T": psi_t}


class _CycleContinuation:
    """Pseudo-arclength continuation state for the shooting system."""

    def __init__(self, orbit: PeriodicOrbit, p_eta: model.NondimParams,
                 rtol=SEG_RTOL, atol=SEG_ATOL, mu_scale=1e4):
        self.p_eta = p_eta
        self.rtol = rtol
        self.atol = atol
        self.mu_scale = mu_scale
        self.set_anchor(orbit)

    def set_anchor(self, orbit: PeriodicOrbit):
        self.n = orbit.n_seg
        self.fractions = orbit.fractions.copy()
        par = self.p_eta.with_forcing(mu=orbit.mu).pack()
        self.ref_states = orbit.states.copy()
        self.ref_f = _phase_reference(orbit.states, par)
        self.weights = np.diff(np.concatenate([self.fractions, [1.0]]))
        self.scale = np.ones(4 * self.n + 2)
        self.scale[4 * self.n] = 1.0 / max(orbit.period, 1.0)
        self.scale[4 * self.n + 1] = self.mu_scale

    def pack(self, orbit: PeriodicOrbit):
        return np.concatenate([orbit.states.ravel(),
                               [orbit.period, orbit.mu]])

    def unpack(self, u) -> PeriodicOrbit:
        return PeriodicOrbit(fractions=self.fractions.copy(),
                             states=u[:4 * self.n].reshape(self.n, 4).copy(),
                             period=float(u[4 * self.n]),
                             mu=float(u[4 * self.n + 1]), eta=self.p_eta.eta)

    def evaluate(self, u):
        orb = self.unpack(u)
        par = self.p_eta.with_forcing(mu=orb.mu).pack()
        seg = _segment_flows(orb.states, self.fractions, orb.period, par,
                             True, self.rtol, self.atol)
        F, J = _assemble(orb.states, self.fractions, orb.period, seg,
                         self.ref_states, self.ref_f, self.weights,
                         free_mu=True)
        return F, J, seg

    def tangent_from_jac(self, J, prev=None):
        Js = J / self.scale[None, :]
        _, _, vh = np.linalg.svd(Js)
        t = vh[-1]
        if prev is not None and float(t @ prev) < 0.0:
            t = -t
        return t / float(np.linalg.norm(t))

    def correct(self, u_pred, tangent, max_iter=10, tol=RESIDUAL_TOL):
        """Newton with the arclength border; returns (u, F, J, seg) or None."""
        u = u_pred.copy()
        for _ in range(max_iter):
            F, J, seg = self.evaluate(u)
            res = float(np.max(np.abs(F)))
            arc = float(((u - u_pred) * self.scale) @ tangent)
            if res < tol:
                return u, F, J, seg
            Jext = np.vstack([J, (tangent * self.scale)[None, :]])
            try:
                du = np.linalg.solve(Jext, -np.concatenate([F, [arc]]))
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(du)):
                return None
            u = u + du
            if not (MIN_PERIOD < u[4 * self.n] < PERIOD_BLOWUP):
                return None
        return None

    def make_orbit(self, u, F, seg) -> PeriodicOrbit:
        orb = self.unpack(u)
        orb.residual = float(np.max(np.abs(F)))
        _finalize(orb, seg, self.p_eta.with_forcing(mu=orb.mu))
        return orb


def _transport_tangent(old_fr, t_old, new_fr, n):
    """Interpolate the state part of a tangent onto a new mesh (periodic)."""
    t_new = np.empty(4 * n + 2)
    old_states = t_old[:4 * n].reshape(n, 4)
    xs = np.concatenate([old_fr, [1.0]])
    for c in range(4):
        ys = np.concatenate([old_states[:, c], [old_states[0, c]]])
        t_new[:4 * n].reshape(n, 4)[:, c] = np.interp(new_fr, xs, ys)
    t_new[4 * n:] = t_old[4 * n:]
    return t_new


def continue_cycles(start: PeriodicOrbit, p_eta: model.NondimParams,
                    mu_range, ds: float = 0.05, ds_min: float = 1e-9,
                    ds_max: float = 0.8, max_orbits: int = 4000,
                    param_tol: float = 1e-8, initial_direction: float = -1.0,
                    remesh_every: int = 8, progress=None,
                    stop_at=None) -> CycleBranch:
    """Continue a cycle branch in mu, registering S/PD/T bifurcations.

    ``initial_direction`` picks the sign of the initial mu-tangent component
    (-1: toward decreasing mu).  Terminates on the mu window, period
    blow-up (reported as such), step collapse, the orbit budget, or when
    ``stop_at(branch)`` returns true.
    """
    branch = CycleBranch(eta=p_eta.eta)
    orbit = start
    if orbit.multipliers is None:
        floquet_multipliers(orbit, p_eta.with_forcing(mu=orbit.mu))
    branch.orbits.append(orbit)
    mu_lo, mu_hi = min(mu_range), max(mu_range)

    cont = _CycleContinuation(orbit, p_eta)
    u = cont.pack(orbit)
    _, J0, _ = cont.evaluate(u)
    t = cont.tangent_from_jac(J0)
    if t[4 * cont.n + 1] * initial_direction < 0.0:
        t = -t

    step = ds
    since_remesh = 0
    while True:
        if len(branch.orbits) >= max_orbits:
            branch.termination = "orbit budget"
            break
        result = cont.correct(u + step * t / cont.scale, t)
        if result is None:
            step *= 0.5
            if step < ds_min:
                branch.termination = "step collapse"
                break
            continue
        u_new, F_new, J_new, seg_new = result
        new_orbit = cont.make_orbit(u_new, F_new, seg_new)
        if new_orbit.period >= PERIOD_BLOWUP:
            branch.termination = "period blow-up"
            break
        prev_orbit = branch.orbits[-1]
        if _is_retrace(branch.orbits, new_orbit, step):
            # corrector slid back onto the previous rung: flip and shorten
            t = -t
            step = max(0.25 * step, ds_min)
            continue
        _register_cycle_crossings(branch, cont, u, u_new, t, prev_orbit,
                                  new_orbit, param_tol)
        branch.orbits.append(new_orbit)
        if progress is not None:
            progress(new_orbit)
        if not (mu_lo <= new_orbit.mu <= mu_hi):
            branch.termination = "range"
            break
        if stop_at is not None and stop_at(branch):
            branch.termination = "stop condition"
            break

        since_remesh += 1
        if since_remesh >= remesh_every:
            since_remesh = 0
            try:
                orbit_rm = solve_cycle(remesh(new_orbit, p_eta),
                                       p_eta.with_forcing(mu=new_orbit.mu),
                                       rtol=cont.rtol, atol=cont.atol,
                                       polish=False)
                old_fr = cont.fractions
                cont.set_anchor(orbit_rm)
                u = cont.pack(orbit_rm)
                t_ref = _transport_tangent(old_fr, t, cont.fractions, cont.n)
                _, J_new, _ = cont.evaluate(u)
                t = cont.tangent_from_jac(J_new, prev=t_ref)
                if step <= 2 * ds_min:
                    step = ds
                continue
            except CycleError:
                pass
        # reuse the Jacobian at the accepted point; only the phase row
        # changes with the new anchor
        cont.set_anchor(new_orbit)
        u = cont.pack(new_orbit)
        for i in range(cont.n):
            J_new[4 * cont.n, 4 * i:4 * i + 4] = cont.weights[i] * cont.ref_f[i]
        t = cont.tangent_from_jac(J_new, prev=t)
        step = min(step * 1.2, ds_max)
    return branch


def _is_retrace(orbits, new_orbit, step, mu_scale=1e4):
    """True when the new point coincides with the second-to-last one."""
    if len(orbits) < 2:
        return False
    prev2, prev1 = orbits[-2], orbits[-1]

    def dist(a, b):
        return math.hypot((a.period - b.period) / max(a.period, 1.0),
                          (a.mu - b.mu) * mu_scale)

    d_back = dist(new_orbit, prev2)
    d_fwd = dist(new_orbit, prev1)
    return d_back < min(1e-3 * max(1.0, d_fwd), 0.05 * step)


def _register_cycle_crossings(branch, cont, u_a, u_b, tangent, orb_a, orb_b,
                              param_tol):
    tests_a = _multiplier_tests(orb_a.multipliers)
    tests_b = _multiplier_tests(orb_b.multipliers)
    for kind in ("S", "PD", "T"):
        if tests_a[kind] * tests_b[kind] < 0.0:
            refined = _refine_cycle_crossing(cont, u_a, u_b, kind,
                                             tests_a[kind], tests_b[kind],
                                             param_tol)
            if refined is None:
                continue
            if kind == "T":
                rest = refined.nontrivial
                if np.sum(np.abs(rest.imag) > 1e-8) < 2:
                    continue  # neutral saddle, not a torus bifurcation
            branch.bifurcations.append(CycleBifPoint(kind=kind, orbit=refined))


def _offender_scale(multipliers, kind):
    """Test-function value divided by the offending factor's magnitude."""
    triv = int(np.argmin(np.abs(multipliers - 1.0)))
    rest = np.delete(multipliers, triv)
    if kind == "S":
        factors = rest - 1.0
    elif kind == "PD":
        factors = rest + 1.0
    else:
        factors = np.array([rest[i] * rest[j] - 1.0
                            for i in range(len(rest))
                            for j in range(i + 1, len(rest))])
    mags = np.sort(np.abs(factors))
    return float(np.prod(mags[1:])) if len(mags) > 1 else 1.0


def _refine_cycle_crossing(cont, u_a, u_b, kind, f_a, f_b, param_tol,
                           max_iter=60, factor_tol=3e-10):
    """Illinois iteration on the multiplier test function along the chord.

    Stops when the offending multiplier factor is within ``factor_tol`` of
    its critical value (so a registered PD has a multiplier at -1 to that
    accuracy), or the bracket collapses below ``param_tol`` in mu.  Runs at
    polish-grade segment tolerances: the multiplier noise floor at the
    continuation tolerances is larger than the target accuracy.
    """
    ua, ub = u_a.copy(), u_b.copy()
    fa, fb = f_a, f_b
    best = None
    n = cont.n
    side = 0
    saved_tols = (cont.rtol, cont.atol)
    cont.rtol, cont.atol = POLISH_RTOL, POLISH_ATOL
    try:
        return _illinois_loop(cont, ua, ub, fa, fb, kind, param_tol,
                              max_iter, factor_tol)
    finally:
        cont.rtol, cont.atol = saved_tols


def _illinois_loop(cont, ua, ub, fa, fb, kind, param_tol, max_iter,
                   factor_tol):
    best = None
    best_rel = math.inf
    n = cont.n
    side = 0
    for _ in range(max_iter):
        denom = fa - fb
        s = 0.5 if denom == 0.0 else fa / denom
        s = min(max(s, 1e-3), 1.0 - 1e-3)
        chord = ub - ua
        nrm = float(np.linalg.norm(chord * cont.scale))
        if nrm == 0.0:
            break
        direction = chord * cont.scale / nrm
        result = cont.correct(ua + s * chord, direction)
        if result is None:
            result = cont.correct(0.5 * (ua + ub), direction)
            if result is None:
                break
        u_m, F_m, _, seg_m = result
        orb = cont.make_orbit(u_m, F_m, seg_m)
        fm = _multiplier_tests(orb.multipliers)[kind]
        scale = _offender_scale(orb.multipliers, kind)
        rel = abs(fm) / max(scale, 1e-300)
        if rel < best_rel:
            best, best_rel = orb, rel
        if rel < factor_tol:
            return orb
        if fa * fm <= 0.0:
            ub, fb = u_m, fm
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            ua, fa = u_m, fm
            if side == +1:
                fb *= 0.5
            side = +1
        if abs(ub[4 * n + 1] - ua[4 * n + 1]) < 1e-2 * param_tol and nrm < 1e-7:
            break
    return best


def stable_windows(branch: CycleBranch) -> list:
    """Maximal mu-intervals covered by consecutive stable branch orbits."""
    windows = []
    current = None
    for orb in branch.orbits:
        if orb.stable:
            if current is None:
                current = [orb.mu, orb.mu]
            else:
                current[0] = min(current[0], orb.mu)
                current[1] = max(current[1], orb.mu)
        elif current is not None:
            windows.append(tuple(current))
            current = None
    if current is not None:
        windows.append(tuple(current))
    return windows


def orbit_at_mu(branch: CycleBranch, mu_target: float,
                p_eta: model.NondimParams, stable_only: bool = True,
                **solve_kwargs) -> PeriodicOrbit:
    """Solve for the branch orbit at an exact mu, seeded from the nearest
    branch point (on a stable segment when requested)."""
    candidates = [o for o in branch.orbits if (o.stable or not stable_only)]
    if not candidates:
        raise CycleError("branch has no suitable orbits")
    seed = min(candidates, key=lambda o: abs(o.mu - mu_target))
    guess = PeriodicOrbit(fractions=seed.fractions.copy(),
                          states=seed.states.copy(), period=seed.period,
                          mu=float(mu_target), eta=branch.eta)
    orb = solve_cycle(guess, p_eta.with_forcing(mu=mu_target), **solve_kwargs)
    floquet_multipliers(orb, p_eta.with_forcing(mu=mu_target))
    return orb


def count_shutdowns(orbit: PeriodicOrbit, p: model.NondimParams,
                    dense_interval: float | None = None) -> int:
    """Shutdown events of box N per period (phase-shift invariant)."""
    p = p.with_forcing(mu=orbit.mu)
    T = orbit.period
    if dense_interval is None:
        dense_interval = min(1.0, T / 4000.0)
    cfg = integrate.IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12,
                                     dense_output_interval=dense_interval)
    tr = integrate.integrate(orbit.states[0], p, (0.0, T), cfg)
    a = model.sigmoid_argument(tr.states, p, "N")
    conv_idx = np.nonzero(a >= model.A_STAR)[0]
    if len(conv_idx) == 0:
        orbit.shutdown_count = 0
        return 0
    # restart on the convective sheet and cover one period plus margin
    x_c = tr.states[conv_idx[0]]
    tr2 = integrate.integrate(x_c, p, (0.0, 1.2 * T), cfg)
    events = integrate.detect_shutdowns(tr2, cfg=cfg)
    count = sum(1 for ev in events if ev.t_enter_intermediate < T)
    orbit.shutdown_count = count
    return count
