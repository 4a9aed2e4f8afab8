"""Pure-Python backend: reference implementation of the numerical kernels.

Semantics are the contract for the compiled core in _core.pyx: Dormand-Prince
5(4) with adaptive steps, the scipy-style quartic dense-output interpolant,
and the same augmented systems (tangent for Lyapunov runs, variational matrix
plus mu-sensitivity and a trace quadrature for monodromy work).

Parameter vector layout (see model.PARAM_NAMES):
  0 mu, 1 eta, 2 phi, 3 x_E_a, 4 y_D, 5 W_t, 6 V_E_t, 7 V_D_t,
  8 kappa_N, 9 kappa_E, 10 kappa_d, 11 delta_N, 12 epsilon, 13 vartheta
"""

import numpy as np

OK = 0
MAX_STEPS_EXHAUSTED = 1
NONFINITE = 2

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# error = y5 - y4, using the FSAL stage K7
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
# dense-output polynomial coefficients (interpolant of scipy's RK45)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def rhs(y, par):
    y = np.asarray(y, dtype=float)
    (mu, eta, phi, x_E_a, y_D, W, V_E, V_D,
     k_N, k_E, k_d, d_N, eps, theta) = par
    x_n, y_n, y_e, x_d = y

    psi = phi * ((y_n - x_n) - (y_e - x_E_a))
    A = psi * np.tanh(psi / theta)
    K_N = k_d + 0.5 * (k_N - k_d) * (1.0 + np.tanh(
        ((y_n - x_n) - (y_D - x_d) - eta) / eps))
    K_E = k_d + 0.5 * (k_E - k_d) * (1.0 + np.tanh(
        ((y_e - x_E_a) - (y_D - x_d) - eta) / eps))

    f0 = (-d_N * (x_n - 1.0) + 0.5 * psi * (x_E_a - x_d)
          + 0.5 * A * (x_E_a + x_d - 2.0 * x_n) + W * (x_E_a - x_n)
          - K_N * (x_n - x_d))
    f1 = (mu + 0.5 * psi * (y_e - y_D) + 0.5 * A * (y_e + y_D - 2.0 * y_n)
          + W * (y_e - y_n) - K_N * (y_n - y_D))
    f2 = (-mu + 0.5 * psi * (y_D - y_n) + 0.5 * A * (y_D + y_n - 2.0 * y_e)
          - W * (y_e - y_n) - K_E * (y_e - y_D)) / V_E
    f3 = (0.5 * psi * (x_n - x_E_a) + 0.5 * A * (x_n + x_E_a - 2.0 * x_d)
          + K_N * (x_n - x_d) + K_E * (x_E_a - x_d)) / V_D
    return np.array([f0, f1, f2, f3])


def jac(y, par):
    y = np.asarray(y, dtype=float)
    (mu, eta, phi, x_E_a, y_D, W, V_E, V_D,
     k_N, k_E, k_d, d_N, eps, theta) = par
    x_n, y_n, y_e, x_d = y

    psi = phi * ((y_n - x_n) - (y_e - x_E_a))
    dpsi = np.array([-phi, phi, -phi, 0.0])
    s = np.tanh(psi / theta)
    A = psi * s
    dA_dpsi = s + (psi / theta) * (1.0 - s * s)

    a_n = ((y_n - x_n) - (y_D - x_d) - eta) / eps
    da_n = np.array([-1.0, 1.0, 0.0, 1.0]) / eps
    t_n = np.tanh(a_n)
    K_N = k_d + 0.5 * (k_N - k_d) * (1.0 + t_n)
    dK_N = 0.5 * (k_N - k_d) * (1.0 - t_n * t_n) * da_n

    a_e = ((y_e - x_E_a) - (y_D - x_d) - eta) / eps
    da_e = np.array([0.0, 0.0, 1.0, 1.0]) / eps
    t_e = np.tanh(a_e)
    K_E = k_d + 0.5 * (k_E - k_d) * (1.0 + t_e)
    dK_E = 0.5 * (k_E - k_d) * (1.0 - t_e * t_e) * da_e

    dA = dA_dpsi * dpsi
    J = np.zeros((4, 4))

    # dx_N row
    J[0] = (0.5 * dpsi * (x_E_a - x_d) + 0.5 * dA * (x_E_a + x_d - 2.0 * x_n)
            - dK_N * (x_n - x_d))
    J[0, 0] += -d_N - A - W - K_N
    J[0, 3] += -0.5 * psi + 0.5 * A + K_N
    # dy_N row
    J[1] = (0.5 * dpsi * (y_e - y_D) + 0.5 * dA * (y_e + y_D - 2.0 * y_n)
            - dK_N * (y_n - y_D))
    J[1, 1] += -A - W - K_N
    J[1, 2] += 0.5 * psi + 0.5 * A + W
    # dy_E row
    J[2] = (0.5 * dpsi * (y_D - y_n) + 0.5 * dA * (y_D + y_n - 2.0 * y_e)
            - dK_E * (y_e - y_D))
    J[2, 1] += -0.5 * psi + 0.5 * A + W
    J[2, 2] += -A - W - K_E
    J[2] /= V_E
    # dx_D row
    J[3] = (0.5 * dpsi * (x_n - x_E_a) + 0.5 * dA * (x_n + x_E_a - 2.0 * x_d)
            + dK_N * (x_n - x_d) + dK_E * (x_E_a - x_d))
    J[3, 0] += 0.5 * psi + 0.5 * A + K_N
    J[3, 3] += -A - K_N - K_E
    J[3] /= V_D
    return J


def _dfdmu(par):
    return np.array([0.0, 1.0, -1.0 / par[6], 0.0])


def _deriv(mode, y, par):
    """Augmented right-hand sides.

    mode 0: plain state (4,)
    mode 1: state + tangent (8,)
    mode 2: state + variational matrix + trace quadrature (21,)
    mode 3: state + variational matrix + d/dmu sensitivity + trace (25,)
    """
    if mode == 0:
        return rhs(y, par)
    x = y[:4]
    f = rhs(x, par)
    J = jac(x, par)
    if mode == 1:
        return np.concatenate([f, J @ y[4:8]])
    Phi = y[4:20].reshape(4, 4)
    dPhi = (J @ Phi).reshape(16)
    tr = np.trace(J)
    if mode == 2:
        return np.concatenate([f, dPhi, [tr]])
    dmu = J @ y[20:24] + _dfdmu(par)
    return np.concatenate([f, dPhi, dmu, [tr]])


_MODE_DIM = {0: 4, 1: 8, 2: 21, 3: 25}


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(mode, y0, f0, par, direction, rtol, atol, max_step):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = _deriv(mode, y1, par)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


class _Stepper:
    """Adaptive DOPRI5 stepping with FSAL and dense output."""

    def __init__(self, mode, y0, t0, par, rtol, atol, max_step, max_steps):
        self.mode = mode
        self.par = np.asarray(par, dtype=float)
        self.t = float(t0)
        self.y = np.asarray(y0, dtype=float).copy()
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self.steps_left = int(max_steps)
        self.f = _deriv(mode, self.y, self.par)
        self.h = None
        self.K = np.zeros((7, len(self.y)))
        # previous accepted step, for dense interpolation
        self.t_old = self.t
        self.y_old = self.y.copy()
        self.h_old = 0.0

    def propose(self, direction):
        if self.h is None:
            self.h = _initial_step(self.mode, self.y, self.f, self.par,
                                   direction, self.rtol, self.atol, self.max_step)
        return self.h

    def step(self, h, direction):
        """Attempt one step of size h (signed by direction); True if accepted."""
        if self.steps_left <= 0:
            return None
        self.steps_left -= 1
        hs = h * direction
        K = self.K
        K[0] = self.f
        for i in range(1, 6):
            yi = self.y + hs * (K[:i].T @ _A[i, :i])
            K[i] = _deriv(self.mode, yi, self.par)
        y_new = self.y + hs * (K[:6].T @ _B)
        K[6] = _deriv(self.mode, y_new, self.par)
        if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(K[6])):
            self.h = max(h * _MIN_FACTOR, 1e-14)
            return False
        err = hs * (K.T @ _E)
        enorm = _error_norm(err, self.y, y_new, self.rtol, self.atol)
        if not np.isfinite(enorm):
            self.h = max(h * _MIN_FACTOR, 1e-14)
            return False
        if enorm > 1.0:
            self.h = h * max(_MIN_FACTOR, _SAFETY * enorm ** -0.2)
            return False
        factor = _MAX_FACTOR if enorm == 0.0 else min(_MAX_FACTOR, _SAFETY * enorm ** -0.2)
        self.h = min(h * factor, self.max_step)
        self.t_old = self.t
        self.y_old = self.y.copy()
        self.h_old = hs
        self.t = self.t + hs
        self.y = y_new
        self.f = K[6].copy()
        return True

    def dense(self, t):
        """Interpolate within the last accepted step."""
        theta = (t - self.t_old) / self.h_old
        q = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
        return self.y_old + self.h_old * ((self.K.T @ _P) @ q)


def _run(mode, y0, par, t0, t1, rtol, atol, max_step, max_steps,
         sample_dt=None, renorm_dt=None, store_samples=False):
    """Shared driver; at most one of sample_dt / renorm_dt may be set."""
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    st = _Stepper(mode, y0, t0, par, rtol, atol, max_step, max_steps)

    times, samples = [], []
    next_sample = None
    if sample_dt is not None:
        times.append(t0)
        samples.append(st.y.copy())
        next_sample = 1

    logs = []
    next_renorm = t0 + direction * renorm_dt if renorm_dt is not None else None

    status = OK
    while direction * (t1 - st.t) > 1e-12 * max(1.0, span):
        h = st.propose(direction)
        h = min(h, abs(t1 - st.t))
        if next_renorm is not None:
            h = min(h, abs(next_renorm - st.t))
        h = max(h, 1e-14)
        accepted = st.step(h, direction)
        if accepted is None:
            status = MAX_STEPS_EXHAUSTED
            break
        if not accepted:
            if st.h <= 1e-13 * max(1.0, abs(st.t)):
                status = NONFINITE
                break
            continue
        if sample_dt is not None:
            while True:
                t_s = t0 + direction * next_sample * sample_dt
                if direction * (t_s - st.t) > 1e-9 * sample_dt:
                    break
                if direction * (t_s - t1) > 0:
                    break
                times.append(t_s)
                samples.append(st.dense(t_s))
                next_sample += 1
        if next_renorm is not None and abs(st.t - next_renorm) <= 1e-9 * renorm_dt:
            v = st.y[4:8]
            r = float(np.linalg.norm(v))
            logs.append(np.log(r))
            st.y[4:8] = v / r
            st.f = _deriv(mode, st.y, st.par)
            next_renorm += direction * renorm_dt

    out = {
        "status": status,
        "t": st.t,
        "y": st.y,
    }
    if store_samples:
        out["times"] = np.array(times)
        out["samples"] = np.array(samples)
    if renorm_dt is not None:
        out["logs"] = np.array(logs)
    return out


def flow_to(y0, par, t0, t1, rtol, atol, max_step, max_steps):
    """Integrate the 4D state; returns (status, t_reached, y)."""
    r = _run(0, y0, par, t0, t1, rtol, atol, max_step, max_steps)
    return r["status"], r["t"], r["y"]


def flow_sampled(y0, par, t0, t1, dt, rtol, atol, max_step, max_steps):
    """Integrate storing dense samples every dt; (status, t, times, states)."""
    r = _run(0, y0, par, t0, t1, rtol, atol, max_step, max_steps,
             sample_dt=dt, store_samples=True)
    return r["status"], r["t"], r["times"], r["samples"]


def flow_var(y0, par, t_dur, rtol, atol, max_step, max_steps, musens=False):
    """Flow plus variational matrix over duration t_dur (autonomous).

    Returns (status, t, y_end, Phi, dmu, trace_integral); dmu is None unless
    requested.
    """
    mode = 3 if musens else 2
    dim = _MODE_DIM[mode]
    z0 = np.zeros(dim)
    z0[:4] = np.asarray(y0, dtype=float)
    z0[4:20] = np.eye(4).reshape(16)
    r = _run(mode, z0, par, 0.0, t_dur, rtol, atol, max_step, max_steps)
    z = r["y"]
    Phi = z[4:20].reshape(4, 4).copy()
    dmu = z[20:24].copy() if musens else None
    trace = z[-1]
    return r["status"], r["t"], z[:4].copy(), Phi, dmu, trace


def lyap_run(y0, v0, par, t_total, renorm_dt, rtol, atol, max_step, max_steps):
    """Benettin tangent propagation; returns (status, t, y, v, logs)."""
    z0 = np.concatenate([np.asarray(y0, dtype=float), np.asarray(v0, dtype=float)])
    r = _run(1, z0, par, 0.0, t_total, rtol, atol, max_step, max_steps,
             renorm_dt=renorm_dt)
    return r["status"], r["t"], r["y"][:4].copy(), r["y"][4:8].copy(), r["logs"]
