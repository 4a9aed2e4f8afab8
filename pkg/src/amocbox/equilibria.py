"""Equilibria: global root finding, branch continuation, bifurcation curves.

One-parameter branches use pseudo-arclength continuation in mu with
eigenvalue-based test functions (det J for saddle-nodes, the product of
pairwise eigenvalue-sum real parts for Hopf).  Two-parameter saddle-node and
Hopf curves continue the standard extended systems in (mu, eta) and carry
codimension-2 monitors (BT, GH, ZH).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from ._kernels import get_backend

NEWTON_TOL = 1e-12
DEDUP_TOL = 1e-8

# Default seeding box: brackets all states seen in trajectory projections.
SEED_BOX = ((-2.0, 8.0), (-6.0, 8.0), (-6.0, 8.0), (-2.0, 8.0))


class NoConvergence(RuntimeError):
    pass


class NearBifurcation(RuntimeError):
    """Newton hit a (numerically) singular Jacobian."""


@dataclass
class Equilibrium:
    state: np.ndarray
    mu: float
    eta: float
    eigenvalues: np.ndarray
    psi: float

    @property
    def stable(self) -> bool:
        return float(np.max(self.eigenvalues.real)) < 0.0

    @property
    def direction(self) -> str:
        return "N" if self.psi >= 0.0 else "S"


@dataclass
class BifPoint:
    kind: str              # 'SN' | 'H'
    eq: Equilibrium
    omega: float = 0.0     # Hopf frequency (0 for SN)
    l1: float = 0.0        # first Lyapunov coefficient at Hopf
    codim2: str = ""       # 'BT' | 'GH' | 'ZH' flag on curves


@dataclass
class EqBranch:
    eta: float
    points: list = field(default_factory=list)        # Equilibrium, ordered
    bifurcations: list = field(default_factory=list)  # BifPoint
    termination: str = "range"


@dataclass
class CurvePoint:
    state: np.ndarray
    mu: float
    eta: float
    omega_or_sv: float      # Hopf frequency, or smallest singular value on SN
    detJ: float
    l1: float = math.nan    # first Lyapunov coefficient (Hopf curves)
    hopf_re: float = math.nan   # Re of the near-axis complex pair (SN curves)
    sn_second: float = math.nan  # product of non-fold eigenvalues (SN curves)
    codim2: str = ""


@dataclass
class RegionLabel:
    n_stable: int
    n_north: int
    n_south: int

    @property
    def category(self) -> str:
        if self.n_stable >= 4:
            return "4"
        if self.n_stable == 3:
            return "3"
        if self.n_stable == 2:
            return "2"
        if self.n_stable == 1:
            return "1N" if self.n_north == 1 else "1S"
        return "0"


def _nondim(p: model.NondimParams, mu=None, eta=None) -> model.NondimParams:
    return p.with_forcing(mu=mu, eta=eta)


def newton_equilibrium(seed, p: model.NondimParams, tol: float = NEWTON_TOL,
                       max_iter: int = 50) -> Equilibrium:
    """Damped Newton from ``seed``; raises NoConvergence / NearBifurcation."""
    k = get_backend()
    par = p.pack()
    x = model.state_array(seed).copy()
    for _ in range(max_iter):
        f = k.rhs(x, par)
        fn = float(np.linalg.norm(f))
        if fn < tol:
            break
        J = k.jac(x, par)
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            raise NearBifurcation("singular Jacobian during Newton")
        if not np.all(np.isfinite(dx)):
            raise NearBifurcation("singular Jacobian during Newton")
        lam = 1.0
        while lam > 1e-10:
            xn = x + lam * dx
            if float(np.linalg.norm(k.rhs(xn, par))) < fn:
                break
            lam *= 0.5
        x = x + lam * dx
        if not np.all(np.isfinite(x)) or float(np.max(np.abs(x))) > 1e8:
            raise NoConvergence("Newton iterate diverged")
    else:
        raise NoConvergence(f"no convergence in {max_iter} iterations")
    ev = np.linalg.eigvals(k.jac(x, par))
    return Equilibrium(state=x, mu=p.mu, eta=p.eta, eigenvalues=ev,
                       psi=model.psi(x, p))


def find_all_equilibria(p: model.NondimParams, seeds=None, box=SEED_BOX,
                        points_per_axis: int = 5) -> list:
    """Grid-seeded multistart Newton; deduplicated list, unstable included.

    The count is a lower bound: roots outside the seeding basin may be
    missed.
    """
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in box]
    all_seeds = [np.array(s) for s in itertools.product(*axes)]
    if seeds is not None:
        all_seeds = [model.state_array(s) for s in seeds] + all_seeds
    roots: list[Equilibrium] = []
    for s in all_seeds:
        try:
            eq = newton_equilibrium(s, p)
        except (NoConvergence, NearBifurcation):
            continue
        if any(np.linalg.norm(eq.state - r.state) <= DEDUP_TOL for r in roots):
            continue
        roots.append(eq)
    return roots


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

def test_sn(eigenvalues: np.ndarray) -> float:
    """Vanishes at a saddle-node: product of eigenvalues (= det J)."""
    return float(np.real(np.prod(eigenvalues)))


def test_hopf(eigenvalues: np.ndarray) -> float:
    """Vanishes at a Hopf point: product of Re(lambda_i + lambda_j), i<j."""
    out = 1.0
    n = len(eigenvalues)
    for i in range(n):
        for j in range(i + 1, n):
            out *= float((eigenvalues[i] + eigenvalues[j]).real)
    return out


def _hopf_pair(eigenvalues: np.ndarray):
    """Complex pair with smallest |Re|, or None if all are real."""
    cplx = [ev for ev in eigenvalues if abs(ev.imag) > 1e-12]
    if not cplx:
        return None
    ev = min(cplx, key=lambda z: abs(z.real))
    return complex(ev.real, abs(ev.imag))


# ---------------------------------------------------------------------------
# One-parameter continuation in mu
# ---------------------------------------------------------------------------

@dataclass
class _ContState:
    u: np.ndarray   # (x0..x3, mu)
    tangent: np.ndarray


def _branch_F(u, p_eta: model.NondimParams, k):
    p = _nondim(p_eta, mu=u[4])
    return k.rhs(u[:4], p.pack())


def _branch_J(u, p_eta, k):
    """4x5 Jacobian of rhs wrt (state, mu); d rhs/d mu is constant."""
    p = _nondim(p_eta, mu=u[4])
    J = np.zeros((4, 5))
    J[:, :4] = k.jac(u[:4], p.pack())
    J[1, 4] = 1.0
    J[2, 4] = -1.0 / p.V_E_t
    return J


def _corrector(u, tangent, p_eta, k, tol=NEWTON_TOL, max_iter=12):
    u = u.copy()
    for it in range(max_iter):
        F = _branch_F(u, p_eta, k)
        if float(np.linalg.norm(F)) < tol:
            return u, it
        Jext = np.vstack([_branch_J(u, p_eta, k), tangent])
        rhs_ext = np.concatenate([-F, [0.0]])
        try:
            du = np.linalg.solve(Jext, rhs_ext)
        except np.linalg.LinAlgError:
            return None, it
        u = u + du
        if not np.all(np.isfinite(u)):
            return None, it
    F = _branch_F(u, p_eta, k)
    if float(np.linalg.norm(F)) < tol:
        return u, max_iter
    return None, max_iter


def _tangent_vector(u, p_eta, k, prev=None):
    J = _branch_J(u, p_eta, k)
    _, _, vh = np.linalg.svd(J)
    t = vh[-1]
    if prev is not None and float(np.dot(t, prev)) < 0.0:
        t = -t
    return t / np.linalg.norm(t)


def _eq_at(u, p_eta, k) -> Equilibrium:
    p = _nondim(p_eta, mu=u[4])
    ev = np.linalg.eigvals(k.jac(u[:4], p.pack()))
    return Equilibrium(state=u[:4].copy(), mu=float(u[4]), eta=p_eta.eta,
                       eigenvalues=ev, psi=model.psi(u[:4], p))


def continue_eq_branch(start: Equilibrium, p_eta: model.NondimParams,
                       mu_range, ds: float = 1e-5, ds_min: float = 1e-12,
                       ds_max: float = 5e-4, max_points: int = 20000,
                       param_tol: float = 1e-9,
                       direction: float = -1.0) -> EqBranch:
    """Pseudo-arclength continuation of an equilibrium branch in mu.

    ``mu_range = (mu_lo, mu_hi)`` bounds the window; ``direction`` is the
    sign of the initial mu-component of the tangent (-1: decreasing mu
    first).  Sign changes of the SN and Hopf test functions are refined by
    secant to ``param_tol`` in mu and polished with the extended defining
    systems.
    """
    k = get_backend()
    mu_lo, mu_hi = min(mu_range), max(mu_range)
    branch = EqBranch(eta=p_eta.eta)

    u = np.concatenate([start.state, [start.mu]])
    t = _tangent_vector(u, p_eta, k)
    if t[4] * direction < 0:
        t = -t
    branch.points.append(_eq_at(u, p_eta, k))

    step = ds
    n_fail = 0
    while len(branch.points) < max_points:
        pred = u + step * t
        sol, it = _corrector(pred, t, p_eta, k)
        if sol is None:
            step *= 0.5
            n_fail += 1
            if step < ds_min:
                branch.termination = "step collapse"
                break
            continue
        n_fail = 0
        t_new = _tangent_vector(sol, p_eta, k, prev=t)
        eq_new = _eq_at(sol, p_eta, k)
        eq_old = branch.points[-1]
        _register_crossings(branch, eq_old, eq_new, u, sol, t, p_eta, k, param_tol)
        branch.points.append(eq_new)
        u, t = sol, t_new
        if it <= 3:
            step = min(step * 1.3, ds_max)
        elif it >= 8:
            step = max(step * 0.5, ds_min)
        if not (mu_lo <= u[4] <= mu_hi):
            branch.termination = "range"
            break
    return branch


def _register_crossings(branch, eq_old, eq_new, u_old, u_new, tangent,
                        p_eta, k, param_tol):
    f_sn = (test_sn(eq_old.eigenvalues), test_sn(eq_new.eigenvalues))
    f_h = (test_hopf(eq_old.eigenvalues), test_hopf(eq_new.eigenvalues))
    if f_sn[0] * f_sn[1] < 0.0:
        bp = _refine_on_segment(u_old, u_new, tangent, p_eta, k, "SN", param_tol)
        if bp is not None:
            branch.bifurcations.append(bp)
    if f_h[0] * f_h[1] < 0.0:
        bp = _refine_on_segment(u_old, u_new, tangent, p_eta, k, "H", param_tol)
        if bp is not None:
            branch.bifurcations.append(bp)


def _refine_on_segment(u_a, u_b, tangent, p_eta, k, kind, param_tol):
    """Secant refinement of a test-function zero between two branch points."""

    def test_at(u):
        eq = _eq_at(u, p_eta, k)
        return (test_sn if kind == "SN" else test_hopf)(eq.eigenvalues)

    ua, ub = u_a.copy(), u_b.copy()
    fa, fb = test_at(ua), test_at(ub)
    for _ in range(80):
        if abs(fb - fa) < 1e-300:
            break
        s = -fa / (fb - fa)
        s = min(max(s, 0.05), 0.95)
        um = ua + s * (ub - ua)
        sol, _ = _corrector(um, tangent, p_eta, k)
        if sol is None:
            sol, _ = _corrector(um, (ub - ua) / np.linalg.norm(ub - ua), p_eta, k)
            if sol is None:
                break
        fm = test_at(sol)
        if fa * fm <= 0.0:
            ub, fb = sol, fm
        else:
            ua, fa = sol, fm
        if abs(ub[4] - ua[4]) < param_tol and np.linalg.norm(ub[:4] - ua[:4]) < 1e-7:
            break
    u_mid = 0.5 * (ua + ub)
    # polish with the extended defining system
    if kind == "SN":
        res = solve_sn_point(u_mid[:4], _nondim(p_eta, mu=u_mid[4]))
    else:
        res = solve_hopf_point(u_mid[:4], _nondim(p_eta, mu=u_mid[4]))
    return res


# ---------------------------------------------------------------------------
# Extended defining systems (one free parameter: mu)
# ---------------------------------------------------------------------------

def _fd_jacobian(F, u, h=1e-7):
    n = len(u)
    F0 = F(u)
    J = np.zeros((len(F0), n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h * max(1.0, abs(u[i]))
        J[:, i] = (F(u + e) - F(u - e)) / (2.0 * e[i])
    return J


def _newton_system(F, u0, tol=1e-10, max_iter=40):
    u = u0.copy()
    for _ in range(max_iter):
        F0 = F(u)
        if float(np.linalg.norm(F0)) < tol:
            return u
        J = _fd_jacobian(F, u)
        try:
            du = np.linalg.solve(J, -F0)
        except np.linalg.LinAlgError:
            du, *_ = np.linalg.lstsq(J, -F0, rcond=None)
        lam = 1.0
        n0 = float(np.linalg.norm(F0))
        while lam > 1e-6:
            un = u + lam * du
            if float(np.linalg.norm(F(un))) < n0:
                break
            lam *= 0.5
        u = u + lam * du
        if not np.all(np.isfinite(u)):
            return None
    return u if float(np.linalg.norm(F(u))) < tol else None


def solve_sn_point(x_guess, p: model.NondimParams) -> BifPoint | None:
    """Solve {rhs=0, J v=0, |v|=1} for (x, v, mu) at fixed eta."""
    k = get_backend()
    J0 = k.jac(model.state_array(x_guess), p.pack())
    _, s, vh = np.linalg.svd(J0)
    v0 = vh[-1]

    def F(u):
        x, v, mu = u[:4], u[4:8], u[8]
        pp = _nondim(p, mu=mu)
        par = pp.pack()
        J = k.jac(x, par)
        return np.concatenate([k.rhs(x, par), J @ v,
                               [0.5 * (float(v @ v) - 1.0)]])

    u0 = np.concatenate([model.state_array(x_guess), v0, [p.mu]])
    sol = _newton_system(F, u0)
    if sol is None:
        return None
    eq = newton_equilibrium(sol[:4], _nondim(p, mu=sol[8]))
    return BifPoint(kind="SN", eq=eq, omega=0.0)


def solve_hopf_point(x_guess, p: model.NondimParams) -> BifPoint | None:
    """Solve the real Hopf system for (x, w_r, w_i, omega, mu) at fixed eta."""
    k = get_backend()
    ev = np.linalg.eigvals(k.jac(model.state_array(x_guess), p.pack()))
    pair = _hopf_pair(ev)
    if pair is None:
        return None
    omega0 = pair.imag
    J0 = k.jac(model.state_array(x_guess), p.pack())
    # eigenvector for the pair closest to +i*omega0
    w = _eigvec_for(J0, complex(pair.real, pair.imag))
    wr, wi = w.real, w.imag

    def F(u):
        x, wr, wi, om, mu = u[:4], u[4:8], u[8:12], u[12], u[13]
        pp = _nondim(p, mu=mu)
        par = pp.pack()
        J = k.jac(x, par)
        return np.concatenate([
            k.rhs(x, par),
            J @ wr + om * wi,
            J @ wi - om * wr,
            [0.5 * (float(wr @ wr + wi @ wi) - 1.0), float(wr @ wi)],
        ])

    u0 = np.concatenate([model.state_array(x_guess), wr, wi, [omega0, p.mu]])
    sol = _newton_system(F, u0)
    if sol is None or sol[12] <= 0:
        return None
    eq = newton_equilibrium(sol[:4], _nondim(p, mu=sol[13]))
    pt = BifPoint(kind="H", eq=eq, omega=float(sol[12]))
    try:
        pt.l1 = first_lyapunov_coeff(eq, _nondim(p, mu=sol[13]))
    except (NearBifurcation, np.linalg.LinAlgError):
        pt.l1 = math.nan
    return pt


def _eigvec_for(J, target):
    w, V = np.linalg.eig(J)
    idx = int(np.argmin(np.abs(w - target)))
    v = V[:, idx]
    # normalize: |v| = 1, Re(v) orthogonal to Im(v) via phase rotation
    v = v / np.linalg.norm(v)
    a, b = v.real, v.imag
    # choose phase alpha so that (e^{i alpha} v) has orthogonal real/imag parts
    alpha = 0.5 * math.atan2(2.0 * float(a @ b), float(a @ a - b @ b))
    v = v * complex(math.cos(alpha), math.sin(alpha))
    if w[idx].imag < 0:
        v = v.conj()
    return v


# ---------------------------------------------------------------------------
# First Lyapunov coefficient (Hopf criticality)
# ---------------------------------------------------------------------------

def _multilinear_B(x0, p, u, v, h=1e-4, richardson=True):
    """Second directional derivative B(u, v) of rhs at x0 (real vectors)."""
    k = get_backend()
    par = p.pack()

    def bform(step):
        fpp = k.rhs(x0 + step * (u + v), par)
        fpm = k.rhs(x0 + step * (u - v), par)
        fmp = k.rhs(x0 - step * (u - v), par)
        fmm = k.rhs(x0 - step * (u + v), par)
        return (fpp - fpm - fmp + fmm) / (4.0 * step * step)

    if not richardson:
        return bform(h)
    b1, b2 = bform(h), bform(h / 2.0)
    return (4.0 * b2 - b1) / 3.0


def _multilinear_C(x0, p, u, v, w, h=1e-4, richardson=True):
    """Third directional derivative C(u, v, w) via polarization."""

    def cform(a, step):
        # third derivative along a single direction a
        k = get_backend()
        par = p.pack()
        f = lambda s: k.rhs(x0 + s * a, par)
        d = (f(2 * step) - 2.0 * f(step) + 2.0 * f(-step) - f(-2 * step)) / (2.0 * step ** 3)
        return d

    def c_sym(step):
        # polarization identity for symmetric trilinear forms
        return (cform(u + v + w, step) - cform(u + v - w, step)
                - cform(u - v + w, step) - cform(-u + v + w, step)
                + cform(u - v - w, step) + cform(-u + v - w, step)
                + cform(-u - v + w, step) - cform(-u - v - w, step)) / 24.0

    if not richardson:
        return c_sym(h)
    c1, c2 = c_sym(h), c_sym(h / 2.0)
    return (4.0 * c2 - c1) / 3.0


def _B_complex(x0, p, a, b):
    """B on complex vectors by bilinearity."""
    return (_multilinear_B(x0, p, a.real, b.real)
            - _multilinear_B(x0, p, a.imag, b.imag)
            + 1j * (_multilinear_B(x0, p, a.real, b.imag)
                    + _multilinear_B(x0, p, a.imag, b.real)))


def _C_complex(x0, p, a, b, c):
    out = np.zeros(4, dtype=complex)
    for pa, fa in ((a.real, 1.0), (a.imag, 1j)):
        for pb, fb in ((b.real, 1.0), (b.imag, 1j)):
            for pc, fc in ((c.real, 1.0), (c.imag, 1j)):
                if (np.any(pa) and np.any(pb) and np.any(pc)):
                    out = out + fa * fb * fc * _multilinear_C(x0, p, pa, pb, pc)
    return out


def first_lyapunov_coeff(hopf_eq: Equilibrium, p: model.NondimParams) -> float:
    """Sign-stable l1 from the projected normal form at a Hopf point.

    Negative l1 means supercritical (a stable cycle emanates).  Raises
    NearBifurcation when the projection is ill conditioned (near BT/ZH).
    """
    k = get_backend()
    x0 = hopf_eq.state
    A = k.jac(x0, p.pack())
    ev = np.linalg.eigvals(A)
    pair = _hopf_pair(ev)
    if pair is None:
        raise NearBifurcation("no complex pair at alleged Hopf point")
    omega = pair.imag
    if omega < 1e-12:
        raise NearBifurcation("omega ~ 0: Bogdanov-Takens vicinity")

    q = _eigvec_for(A, complex(0.0, omega))
    w_adj, V_adj = np.linalg.eig(A.T)
    idx = int(np.argmin(np.abs(w_adj - complex(0.0, -omega))))
    pvec = V_adj[:, idx]
    denom = np.vdot(pvec, q)
    if abs(denom) < 1e-10:
        raise NearBifurcation("degenerate adjoint projection")
    pvec = pvec / np.conj(denom)

    B_qq = _B_complex(x0, p, q, q)
    B_qqbar = _B_complex(x0, p, q, q.conj())
    C_qqqbar = _C_complex(x0, p, q, q, q.conj())

    try:
        Ainv_Bqqbar = np.linalg.solve(A, B_qqbar)
    except np.linalg.LinAlgError:
        raise NearBifurcation("singular A: zero eigenvalue vicinity (ZH)")
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-10 * sv[0]:
        raise NearBifurcation("near-singular A: ZH vicinity")
    M = 2j * omega * np.eye(4) - A
    resolvent_Bqq = np.linalg.solve(M, B_qq)

    g = (np.vdot(pvec, C_qqqbar)
         - 2.0 * np.vdot(pvec, _B_complex(x0, p, q, Ainv_Bqqbar))
         + np.vdot(pvec, _B_complex(x0, p, q.conj(), resolvent_Bqq)))
    return float(g.real / (2.0 * omega))


# ---------------------------------------------------------------------------
# Two-parameter curves (free: mu and eta)
# ---------------------------------------------------------------------------

def _curve_continuation(F, u0, mu_idx, eta_idx, window, ds, ds_max,
                        max_points, monitor, scale=None):
    """Generic pseudo-arclength continuation of F(u)=0 with one degree of
    freedom; ``monitor(u)`` returns a CurvePoint for recording."""
    n = len(u0)
    if scale is None:
        scale = np.ones(n)

    def tangent_of(u, prev=None):
        J = _fd_jacobian(F, u)
        _, _, vh = np.linalg.svd(J)
        t = vh[-1]
        if prev is not None and float(np.dot(t, prev)) < 0.0:
            t = -t
        return t / np.linalg.norm(t)

    def corrector(pred, t):
        u = pred.copy()
        for it in range(12):
            F0 = F(u)
            if float(np.linalg.norm(F0)) < 1e-10:
                return u, it
            J = _fd_jacobian(F, u)
            Jext = np.vstack([J, t])
            try:
                du = np.linalg.solve(Jext, np.concatenate([-F0, [0.0]]))
            except np.linalg.LinAlgError:
                return None, it
            u = u + du
            if not np.all(np.isfinite(u)):
                return None, it
        return (u, 12) if float(np.linalg.norm(F(u))) < 1e-10 else (None, 12)

    out = []
    for direction in (+1.0, -1.0):
        u = u0.copy()
        t = tangent_of(u) * direction
        pts = [monitor(u)]
        step = ds
        while len(pts) < max_points:
            sol, it = corrector(u + step * t * scale, t)
            if sol is None:
                step *= 0.5
                if step < 1e-12:
                    break
                continue
            pts.append(monitor(sol))
            t = tangent_of(sol, prev=t)
            u = sol
            if it <= 3:
                step = min(step * 1.3, ds_max)
            elif it >= 8:
                step = max(step * 0.5, 1e-12)
            mu, eta = u[mu_idx], u[eta_idx]
            if not (window[0] <= mu <= window[1] and window[2] <= eta <= window[3]):
                break
        if direction > 0:
            out = pts
        else:
            out = pts[1:][::-1] + out
    return out


def continue_sn_curve(sn: BifPoint, p: model.NondimParams, window,
                      ds: float = 2e-5, ds_max: float = 5e-2,
                      max_points: int = 4000) -> list:
    """Continue {rhs=0, Jv=0, |v|=1} in (mu, eta); flags BT and ZH."""
    k = get_backend()
    J0 = k.jac(sn.eq.state, _nondim(p, mu=sn.eq.mu, eta=sn.eq.eta).pack())
    _, _, vh = np.linalg.svd(J0)
    v0 = vh[-1]
    u0 = np.concatenate([sn.eq.state, v0, [sn.eq.mu, sn.eq.eta]])

    def F(u):
        x, v, mu, eta = u[:4], u[4:8], u[8], u[9]
        par = _nondim(p, mu=mu, eta=eta).pack()
        J = k.jac(x, par)
        return np.concatenate([k.rhs(x, par), J @ v,
                               [0.5 * (float(v @ v) - 1.0)]])

    def monitor(u):
        x, mu, eta = u[:4], u[8], u[9]
        par = _nondim(p, mu=mu, eta=eta).pack()
        J = k.jac(x, par)
        sv = np.linalg.svd(J, compute_uv=False)
        ev = np.linalg.eigvals(J)
        # split off the fold eigenvalue (closest to 0)
        rest = np.delete(ev, int(np.argmin(np.abs(ev))))
        return CurvePoint(state=x.copy(), mu=float(mu), eta=float(eta),
                          omega_or_sv=float(sv[-1]), detJ=float(np.linalg.det(J)),
                          hopf_re=_hopf_real_part(rest),
                          sn_second=float(np.real(np.prod(rest))))

    pts = _curve_continuation(F, u0, 8, 9, window, ds, ds_max, max_points, monitor)
    _flag_sn_codim2(pts)
    return pts


def _hopf_real_part(ev) -> float:
    """Re of the complex pair closest to the imaginary axis (nan if none)."""
    pair = _hopf_pair(ev)
    return float(pair.real) if pair is not None else math.nan


def _flag_sn_codim2(pts):
    """ZH: a complex pair of the non-fold eigenvalues crosses the axis.
    BT: a second real eigenvalue reaches zero."""
    for a, b in zip(pts, pts[1:]):
        if (math.isfinite(a.hopf_re) and math.isfinite(b.hopf_re)
                and a.hopf_re * b.hopf_re < 0.0):
            b.codim2 = "ZH"
        elif a.sn_second * b.sn_second < 0.0:
            b.codim2 = "BT"


def continue_hopf_curve(hopf: BifPoint, p: model.NondimParams, window,
                        ds: float = 2e-5, ds_max: float = 5e-2,
                        max_points: int = 4000, with_l1: bool = True) -> list:
    """Continue the real Hopf system in (mu, eta); flags BT, GH, ZH."""
    k = get_backend()
    par0 = _nondim(p, mu=hopf.eq.mu, eta=hopf.eq.eta).pack()
    J0 = k.jac(hopf.eq.state, par0)
    w = _eigvec_for(J0, complex(0.0, hopf.omega))
    u0 = np.concatenate([hopf.eq.state, w.real, w.imag,
                         [hopf.omega, hopf.eq.mu, hopf.eq.eta]])

    def F(u):
        x, wr, wi, om, mu, eta = u[:4], u[4:8], u[8:12], u[12], u[13], u[14]
        par = _nondim(p, mu=mu, eta=eta).pack()
        J = k.jac(x, par)
        return np.concatenate([
            k.rhs(x, par),
            J @ wr + om * wi,
            J @ wi - om * wr,
            [0.5 * (float(wr @ wr + wi @ wi) - 1.0), float(wr @ wi)],
        ])

    def monitor(u):
        x, om, mu, eta = u[:4], u[12], u[13], u[14]
        pp = _nondim(p, mu=mu, eta=eta)
        J = k.jac(x, pp.pack())
        detJ = float(np.linalg.det(J))
        cp = CurvePoint(state=x.copy(), mu=float(mu), eta=float(eta),
                        omega_or_sv=float(om), detJ=detJ)
        if with_l1:
            ev = np.linalg.eigvals(J)
            eq = Equilibrium(state=x.copy(), mu=float(mu), eta=float(eta),
                             eigenvalues=ev, psi=model.psi(x, pp))
            try:
                cp.l1 = first_lyapunov_coeff(eq, pp)
            except (NearBifurcation, np.linalg.LinAlgError):
                cp.l1 = math.nan
        return cp

    pts = _curve_continuation(F, u0, 13, 14, window, ds, ds_max, max_points, monitor)
    _flag_hopf_codim2(pts)
    return pts


def _flag_hopf_codim2(pts, omega_tol=1e-6, det_window=None):
    """Mark BT (omega -> 0), ZH (det J -> 0) and GH (l1 zero crossing)."""
    for a, b in zip(pts, pts[1:]):
        if a.detJ * b.detJ < 0.0:
            b.codim2 = "ZH"
        if (a.omega_or_sv - omega_tol) * (b.omega_or_sv - omega_tol) < 0.0:
            b.codim2 = "BT"
    for a, b in zip(pts, pts[1:]):
        if not (math.isfinite(a.l1) and math.isfinite(b.l1)):
            continue
        if a.l1 * b.l1 < 0.0 and not b.codim2:
            # distinguish a true l1 zero (GH) from a sign flip through
            # infinity at ZH: at GH the magnitude is locally small
            scale = np.nanmedian([abs(pt.l1) for pt in pts if math.isfinite(pt.l1)])
            if min(abs(a.l1), abs(b.l1)) < 10.0 * scale:
                b.codim2 = "GH"
    return pts


# ---------------------------------------------------------------------------
# Window scans (root transport across a mu grid)
# ---------------------------------------------------------------------------

def scan_bifurcation_points(p_eta: model.NondimParams, mu_window,
                            n_grid: int = 60, points_per_axis: int = 4,
                            match_tol: float = 0.5) -> dict:
    """Locate Hopf and saddle-node points of all equilibrium families.

    Roots are transported across a decreasing-mu grid and matched by
    nearest state; sign changes of the pair real part (Hopf) and det J
    (fold) trigger refinement with the extended defining systems.  Returns
    {'H': [...], 'SN': [...]} sorted by decreasing mu.
    """
    k = get_backend()
    mu_hi, mu_lo = max(mu_window), min(mu_window)
    mus = np.linspace(mu_hi, mu_lo, n_grid)
    prev: list[Equilibrium] = []
    hopfs: list[BifPoint] = []
    sns: list[BifPoint] = []

    def _closest(eq, pool):
        if not pool:
            return None
        cand = min(pool, key=lambda r: np.linalg.norm(r.state - eq.state))
        if np.linalg.norm(cand.state - eq.state) > match_tol:
            return None
        return cand

    for mu in mus:
        p = _nondim(p_eta, mu=float(mu))
        roots = find_all_equilibria(p, seeds=[r.state for r in prev],
                                    points_per_axis=points_per_axis)
        for r in roots:
            old = _closest(r, prev)
            if old is None:
                continue
            re_new = _hopf_real_part(r.eigenvalues)
            re_old = _hopf_real_part(old.eigenvalues)
            if (math.isfinite(re_new) and math.isfinite(re_old)
                    and re_old * re_new < 0.0):
                mid = 0.5 * (old.state + r.state)
                pt = solve_hopf_point(mid, _nondim(p_eta, mu=0.5 * (old.mu + r.mu)))
                if pt is not None and mu_lo <= pt.eq.mu <= mu_hi:
                    hopfs.append(pt)
            det_new = float(np.linalg.det(k.jac(r.state, p.pack())))
            det_old = float(np.linalg.det(k.jac(old.state,
                                                _nondim(p_eta, mu=old.mu).pack())))
            if det_old * det_new < 0.0:
                mid = 0.5 * (old.state + r.state)
                pt = solve_sn_point(mid, _nondim(p_eta, mu=0.5 * (old.mu + r.mu)))
                if pt is not None and mu_lo <= pt.eq.mu <= mu_hi:
                    sns.append(pt)
        prev = roots

    def _dedup(points):
        out = []
        for pt in sorted(points, key=lambda b: -b.eq.mu):
            if any(abs(pt.eq.mu - q.eq.mu) < 1e-7
                   and np.linalg.norm(pt.eq.state - q.eq.state) < 1e-4
                   for q in out):
                continue
            out.append(pt)
        return out

    return {"H": _dedup(hopfs), "SN": _dedup(sns)}


# ---------------------------------------------------------------------------
# Region classification
# ---------------------------------------------------------------------------

def region_classify(mu: float, eta: float, p: model.NondimParams,
                    **find_kwargs) -> RegionLabel:
    roots = find_all_equilibria(_nondim(p, mu=mu, eta=eta), **find_kwargs)
    stable = [r for r in roots if r.stable]
    n_north = sum(1 for r in stable if r.direction == "N")
    return RegionLabel(n_stable=len(stable), n_north=n_north,
                       n_south=len(stable) - n_north)


def region_sweep(mu_values, eta_values, p: model.NondimParams,
                 points_per_axis: int = 5) -> list:
    """Raster of RegionLabels over the (mu, eta) grid, row-major in eta."""
    out = []
    for eta in eta_values:
        for mu in mu_values:
            out.append((float(mu), float(eta),
                        region_classify(mu, eta, p,
                                        points_per_axis=points_per_axis)))
    return out
