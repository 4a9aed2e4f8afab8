# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: model right-hand side, Jacobian, and DOPRI5 drivers.

Mirrors _fallback.py exactly (same tableau, error control, dense output and
augmented systems); that module is the readable reference.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, log, sqrt, fabs, isfinite, fmin, fmax

cnp.import_array()

DEF MAXDIM = 25

cdef int OK = 0
cdef int MAX_STEPS_EXHAUSTED = 1
cdef int NONFINITE = 2

# Dormand-Prince 5(4) tableau (same as _fallback.py)
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double[6][6] A_TAB
cdef double[6] B_TAB
cdef double[7] E_TAB
cdef double[7][4] P_TAB

A_TAB[1][0] = 1.0 / 5
A_TAB[2][0] = 3.0 / 40; A_TAB[2][1] = 9.0 / 40
A_TAB[3][0] = 44.0 / 45; A_TAB[3][1] = -56.0 / 15; A_TAB[3][2] = 32.0 / 9
A_TAB[4][0] = 19372.0 / 6561; A_TAB[4][1] = -25360.0 / 2187
A_TAB[4][2] = 64448.0 / 6561; A_TAB[4][3] = -212.0 / 729
A_TAB[5][0] = 9017.0 / 3168; A_TAB[5][1] = -355.0 / 33
A_TAB[5][2] = 46732.0 / 5247; A_TAB[5][3] = 49.0 / 176
A_TAB[5][4] = -5103.0 / 18656
B_TAB[0] = 35.0 / 384; B_TAB[1] = 0.0; B_TAB[2] = 500.0 / 1113
B_TAB[3] = 125.0 / 192; B_TAB[4] = -2187.0 / 6784; B_TAB[5] = 11.0 / 84
E_TAB[0] = 71.0 / 57600; E_TAB[1] = 0.0; E_TAB[2] = -71.0 / 16695
E_TAB[3] = 71.0 / 1920; E_TAB[4] = -17253.0 / 339200
E_TAB[5] = 22.0 / 525; E_TAB[6] = -1.0 / 40
P_TAB[0][0] = 1.0
P_TAB[0][1] = -8048581381.0 / 2820520608.0
P_TAB[0][2] = 8663915743.0 / 2820520608.0
P_TAB[0][3] = -12715105075.0 / 11282082432.0
P_TAB[1][0] = 0; P_TAB[1][1] = 0; P_TAB[1][2] = 0; P_TAB[1][3] = 0
P_TAB[2][1] = 131558114200.0 / 32700410799.0
P_TAB[2][2] = -68118460800.0 / 10900136933.0
P_TAB[2][3] = 87487479700.0 / 32700410799.0
P_TAB[3][1] = -1754552775.0 / 470086768.0
P_TAB[3][2] = 14199869525.0 / 1410260304.0
P_TAB[3][3] = -10690763975.0 / 1880347072.0
P_TAB[4][1] = 127303824393.0 / 49829197408.0
P_TAB[4][2] = -318862633887.0 / 49829197408.0
P_TAB[4][3] = 701980252875.0 / 199316789632.0
P_TAB[5][1] = -282668133.0 / 205662961.0
P_TAB[5][2] = 2019193451.0 / 616988883.0
P_TAB[5][3] = -1453857185.0 / 822651844.0
P_TAB[6][1] = 40617522.0 / 29380423.0
P_TAB[6][2] = -110615467.0 / 29380423.0
P_TAB[6][3] = 69997945.0 / 29380423.0

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 5.0


cdef inline void c_rhs(const double* y, const double* p, double* f) noexcept nogil:
    cdef double mu = p[0], eta = p[1], phi = p[2], xea = p[3], yd = p[4]
    cdef double W = p[5], VE = p[6], VD = p[7]
    cdef double kN = p[8], kE = p[9], kd = p[10], dN = p[11]
    cdef double eps = p[12], theta = p[13]
    cdef double xn = y[0], yn = y[1], ye = y[2], xd = y[3]
    cdef double psi, A, KN, KE

    psi = phi * ((yn - xn) - (ye - xea))
    A = psi * tanh(psi / theta)
    KN = kd + 0.5 * (kN - kd) * (1.0 + tanh(((yn - xn) - (yd - xd) - eta) / eps))
    KE = kd + 0.5 * (kE - kd) * (1.0 + tanh(((ye - xea) - (yd - xd) - eta) / eps))

    f[0] = (-dN * (xn - 1.0) + 0.5 * psi * (xea - xd)
            + 0.5 * A * (xea + xd - 2.0 * xn) + W * (xea - xn) - KN * (xn - xd))
    f[1] = (mu + 0.5 * psi * (ye - yd) + 0.5 * A * (ye + yd - 2.0 * yn)
            + W * (ye - yn) - KN * (yn - yd))
    f[2] = (-mu + 0.5 * psi * (yd - yn) + 0.5 * A * (yd + yn - 2.0 * ye)
            - W * (ye - yn) - KE * (ye - yd)) / VE
    f[3] = (0.5 * psi * (xn - xea) + 0.5 * A * (xn + xea - 2.0 * xd)
            + KN * (xn - xd) + KE * (xea - xd)) / VD


cdef inline void c_jac(const double* y, const double* p, double* J) noexcept nogil:
    # J is 16 doubles, row major
    cdef double eta = p[1], phi = p[2], xea = p[3], yd = p[4]
    cdef double W = p[5], VE = p[6], VD = p[7]
    cdef double kN = p[8], kE = p[9], kd = p[10], dN = p[11]
    cdef double eps = p[12], theta = p[13]
    cdef double xn = y[0], yn = y[1], ye = y[2], xd = y[3]
    cdef double psi, s, A, dA_dpsi, a_n, t_n, KN, dKNda, a_e, t_e, KE, dKEda
    cdef double[4] dpsi, dan, dae, dA, dKN, dKE
    cdef int j

    psi = phi * ((yn - xn) - (ye - xea))
    dpsi[0] = -phi; dpsi[1] = phi; dpsi[2] = -phi; dpsi[3] = 0.0
    s = tanh(psi / theta)
    A = psi * s
    dA_dpsi = s + (psi / theta) * (1.0 - s * s)

    a_n = ((yn - xn) - (yd - xd) - eta) / eps
    dan[0] = -1.0 / eps; dan[1] = 1.0 / eps; dan[2] = 0.0; dan[3] = 1.0 / eps
    t_n = tanh(a_n)
    KN = kd + 0.5 * (kN - kd) * (1.0 + t_n)
    dKNda = 0.5 * (kN - kd) * (1.0 - t_n * t_n)

    a_e = ((ye - xea) - (yd - xd) - eta) / eps
    dae[0] = 0.0; dae[1] = 0.0; dae[2] = 1.0 / eps; dae[3] = 1.0 / eps
    t_e = tanh(a_e)
    KE = kd + 0.5 * (kE - kd) * (1.0 + t_e)
    dKEda = 0.5 * (kE - kd) * (1.0 - t_e * t_e)

    for j in range(4):
        dA[j] = dA_dpsi * dpsi[j]
        dKN[j] = dKNda * dan[j]
        dKE[j] = dKEda * dae[j]

    for j in range(4):
        J[0 * 4 + j] = (0.5 * dpsi[j] * (xea - xd) + 0.5 * dA[j] * (xea + xd - 2.0 * xn)
                        - dKN[j] * (xn - xd))
        J[1 * 4 + j] = (0.5 * dpsi[j] * (ye - yd) + 0.5 * dA[j] * (ye + yd - 2.0 * yn)
                        - dKN[j] * (yn - yd))
        J[2 * 4 + j] = (0.5 * dpsi[j] * (yd - yn) + 0.5 * dA[j] * (yd + yn - 2.0 * ye)
                        - dKE[j] * (ye - yd))
        J[3 * 4 + j] = (0.5 * dpsi[j] * (xn - xea) + 0.5 * dA[j] * (xn + xea - 2.0 * xd)
                        + dKN[j] * (xn - xd) + dKE[j] * (xea - xd))
    J[0 * 4 + 0] += -dN - A - W - KN
    J[0 * 4 + 3] += -0.5 * psi + 0.5 * A + KN
    J[1 * 4 + 1] += -A - W - KN
    J[1 * 4 + 2] += 0.5 * psi + 0.5 * A + W
    J[2 * 4 + 1] += -0.5 * psi + 0.5 * A + W
    J[2 * 4 + 2] += -A - W - KE
    J[3 * 4 + 0] += 0.5 * psi + 0.5 * A + KN
    J[3 * 4 + 3] += -A - KN - KE
    for j in range(4):
        J[2 * 4 + j] /= VE
        J[3 * 4 + j] /= VD


cdef inline int mode_dim(int mode) noexcept nogil:
    if mode == 0:
        return 4
    elif mode == 1:
        return 8
    elif mode == 2:
        return 21
    return 25


cdef inline void c_deriv(int mode, const double* y, const double* p,
                         double* out) noexcept nogil:
    cdef double[16] J
    cdef double tr
    cdef int i, j
    c_rhs(y, p, out)
    if mode == 0:
        return
    c_jac(y, p, J)
    if mode == 1:
        for i in range(4):
            out[4 + i] = 0.0
            for j in range(4):
                out[4 + i] += J[4 * i + j] * y[4 + j]
        return
    # variational matrix: columns propagate as J @ Phi
    for i in range(4):
        for j in range(4):
            out[4 + 4 * i + j] = (J[4 * i + 0] * y[4 + 0 + j]
                                  + J[4 * i + 1] * y[4 + 4 + j]
                                  + J[4 * i + 2] * y[4 + 8 + j]
                                  + J[4 * i + 3] * y[4 + 12 + j])
    tr = J[0] + J[5] + J[10] + J[15]
    if mode == 2:
        out[20] = tr
        return
    for i in range(4):
        out[20 + i] = (J[4 * i + 0] * y[20] + J[4 * i + 1] * y[21]
                       + J[4 * i + 2] * y[22] + J[4 * i + 3] * y[23])
    out[21] += 1.0           # d f_yN / d mu
    out[22] += -1.0 / p[6]   # d f_yE / d mu
    out[24] = tr


cdef inline double err_norm(int n, const double* err, const double* y0,
                            const double* y1, double rtol, double atol) noexcept nogil:
    cdef double acc = 0.0, sc, e
    cdef int i
    for i in range(n):
        sc = atol + rtol * fmax(fabs(y0[i]), fabs(y1[i]))
        e = err[i] / sc
        acc += e * e
    return sqrt(acc / n)


cdef double c_initial_step(int mode, const double* y0, const double* f0,
                           const double* p, double direction, double rtol,
                           double atol, double max_step) noexcept nogil:
    cdef int n = mode_dim(mode)
    cdef double[MAXDIM] y1, f1
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, sc, h0, h1
    cdef int i
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d0 += (y0[i] / sc) * (y0[i] / sc)
        d1 += (f0[i] / sc) * (f0[i] / sc)
    d0 = sqrt(d0 / n)
    d1 = sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for i in range(n):
        y1[i] = y0[i] + h0 * direction * f0[i]
    c_deriv(mode, y1, p, f1)
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) * ((f1[i] - f0[i]) / sc)
    d2 = sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / fmax(d1, d2)) ** 0.2
    return fmin(fmin(100.0 * h0, h1), max_step)


cdef int c_run(int mode, double* y, double* t_io, const double* p,
               double t1, double rtol, double atol, double max_step,
               long max_steps,
               double sample_dt, double* sample_t, double* sample_y,
               long* n_samples_io, long max_samples,
               double renorm_dt, double* logs, long* n_logs_io) noexcept nogil:
    cdef int n = mode_dim(mode)
    cdef double t0 = t_io[0], t = t_io[0]
    cdef double direction = 1.0 if t1 >= t0 else -1.0
    cdef double span = fabs(t1 - t0)
    cdef double[7][MAXDIM] K
    cdef double[MAXDIM] f, y_old, y_new, yi, err_v
    cdef double h, hs, enorm, factor, t_old, h_old, t_s, theta_s, q1, q2, q3, q4, acc, r
    cdef long steps_left = max_steps, next_sample = 1, n_logs = 0, n_samples = 0
    cdef double next_renorm = 0.0
    cdef bint have_renorm = renorm_dt > 0.0, have_samples = sample_dt > 0.0
    cdef bint bad
    cdef int i, j, s_i, status = OK

    c_deriv(mode, y, p, f)
    h = c_initial_step(mode, y, f, p, direction, rtol, atol, max_step)
    if have_samples:
        sample_t[0] = t0
        for i in range(4):
            sample_y[i] = y[i]
        n_samples = 1
    if have_renorm:
        next_renorm = t0 + direction * renorm_dt

    while direction * (t1 - t) > 1e-12 * fmax(1.0, span):
        hs = fmin(h, fabs(t1 - t))
        if have_renorm:
            hs = fmin(hs, fabs(next_renorm - t))
        hs = fmax(hs, 1e-14)
        if steps_left <= 0:
            status = MAX_STEPS_EXHAUSTED
            break
        steps_left -= 1
        # stages
        for i in range(n):
            K[0][i] = f[i]
        for s_i in range(1, 6):
            for i in range(n):
                acc = 0.0
                for j in range(s_i):
                    acc += A_TAB[s_i][j] * K[j][i]
                yi[i] = y[i] + hs * direction * acc
            c_deriv(mode, yi, p, K[s_i])
        bad = 0
        for i in range(n):
            acc = 0.0
            for j in range(6):
                acc += B_TAB[j] * K[j][i]
            y_new[i] = y[i] + hs * direction * acc
            if not isfinite(y_new[i]):
                bad = 1
        if not bad:
            c_deriv(mode, y_new, p, K[6])
            for i in range(n):
                if not isfinite(K[6][i]):
                    bad = 1
        if bad:
            h = fmax(hs * MIN_FACTOR, 1e-14)
            if h <= 1e-13 * fmax(1.0, fabs(t)):
                status = NONFINITE
                break
            continue
        for i in range(n):
            acc = 0.0
            for j in range(7):
                acc += E_TAB[j] * K[j][i]
            err_v[i] = hs * direction * acc
        enorm = err_norm(n, err_v, y, y_new, rtol, atol)
        if not isfinite(enorm) or enorm > 1.0:
            if not isfinite(enorm):
                h = fmax(hs * MIN_FACTOR, 1e-14)
            else:
                h = hs * fmax(MIN_FACTOR, SAFETY * enorm ** -0.2)
            if h <= 1e-13 * fmax(1.0, fabs(t)):
                status = NONFINITE
                break
            continue
        if enorm == 0.0:
            factor = MAX_FACTOR
        else:
            factor = fmin(MAX_FACTOR, SAFETY * enorm ** -0.2)
        h = fmin(hs * factor, max_step)
        t_old = t
        for i in range(n):
            y_old[i] = y[i]
        h_old = hs * direction
        t = t + hs * direction
        for i in range(n):
            y[i] = y_new[i]
            f[i] = K[6][i]
        # dense samples within (t_old, t]
        if have_samples:
            while n_samples < max_samples:
                t_s = t0 + direction * next_sample * sample_dt
                if direction * (t_s - t) > 1e-9 * sample_dt:
                    break
                if direction * (t_s - t1) > 0.0:
                    break
                theta_s = (t_s - t_old) / h_old
                q1 = theta_s; q2 = q1 * theta_s; q3 = q2 * theta_s; q4 = q3 * theta_s
                for i in range(4):
                    acc = 0.0
                    for j in range(7):
                        acc += K[j][i] * (P_TAB[j][0] * q1 + P_TAB[j][1] * q2
                                          + P_TAB[j][2] * q3 + P_TAB[j][3] * q4)
                    sample_y[n_samples * 4 + i] = y_old[i] + h_old * acc
                sample_t[n_samples] = t_s
                n_samples += 1
                next_sample += 1
        if have_renorm and fabs(t - next_renorm) <= 1e-9 * renorm_dt:
            r = 0.0
            for i in range(4):
                r += y[4 + i] * y[4 + i]
            r = sqrt(r)
            logs[n_logs] = log(r)
            n_logs += 1
            for i in range(4):
                y[4 + i] /= r
            c_deriv(mode, y, p, f)
            next_renorm += direction * renorm_dt

    t_io[0] = t
    n_samples_io[0] = n_samples
    n_logs_io[0] = n_logs
    return status


# ---------------------------------------------------------------------------
# Python-facing wrappers
# ---------------------------------------------------------------------------

def rhs(double[::1] y, double[::1] par):
    out = np.empty(4)
    cdef double[::1] o = out
    c_rhs(&y[0], &par[0], &o[0])
    return out


def jac(double[::1] y, double[::1] par):
    out = np.empty((4, 4))
    cdef double[:, ::1] o = out
    c_jac(&y[0], &par[0], &o[0, 0])
    return out


def flow_to(double[::1] y0, double[::1] par, double t0, double t1,
            double rtol, double atol, double max_step, long max_steps):
    y = np.array(y0, dtype=np.float64, copy=True)
    cdef double[::1] yv = y
    cdef double t = t0
    cdef long ns = 0, nl = 0
    cdef int status
    status = c_run(0, &yv[0], &t, &par[0], t1, rtol, atol, max_step, max_steps,
                   -1.0, NULL, NULL, &ns, 0, -1.0, NULL, &nl)
    return status, t, y


def flow_sampled(double[::1] y0, double[::1] par, double t0, double t1,
                 double dt, double rtol, double atol, double max_step,
                 long max_steps):
    cdef long max_samples = <long>(fabs(t1 - t0) / dt * (1.0 + 1e-12)) + 2
    times = np.empty(max_samples)
    states = np.empty((max_samples, 4))
    y = np.array(y0, dtype=np.float64, copy=True)
    cdef double[::1] yv = y
    cdef double[::1] tv = times
    cdef double[:, ::1] sv = states
    cdef double t = t0
    cdef long ns = 0, nl = 0
    cdef int status
    status = c_run(0, &yv[0], &t, &par[0], t1, rtol, atol, max_step, max_steps,
                   dt, &tv[0], &sv[0, 0], &ns, max_samples, -1.0, NULL, &nl)
    return status, t, times[:ns], states[:ns]


def flow_var(double[::1] y0, double[::1] par, double t_dur, double rtol,
             double atol, double max_step, long max_steps, bint musens=False):
    cdef int mode = 3 if musens else 2
    cdef int n = mode_dim(mode)
    z = np.zeros(n)
    z[:4] = np.asarray(y0)
    z[4:20] = np.eye(4).reshape(16)
    cdef double[::1] zv = z
    cdef double t = 0.0
    cdef long ns = 0, nl = 0
    cdef int status
    status = c_run(mode, &zv[0], &t, &par[0], t_dur, rtol, atol, max_step,
                   max_steps, -1.0, NULL, NULL, &ns, 0, -1.0, NULL, &nl)
    Phi = z[4:20].reshape(4, 4).copy()
    dmu = z[20:24].copy() if musens else None
    return status, t, z[:4].copy(), Phi, dmu, z[n - 1]


def lyap_run(double[::1] y0, double[::1] v0, double[::1] par, double t_total,
             double renorm_dt, double rtol, double atol, double max_step,
             long max_steps):
    cdef long max_logs = <long>(t_total / renorm_dt * (1.0 + 1e-12)) + 2
    logs = np.empty(max_logs)
    z = np.empty(8)
    z[:4] = np.asarray(y0)
    z[4:] = np.asarray(v0)
    cdef double[::1] zv = z
    cdef double[::1] lv = logs
    cdef double t = 0.0
    cdef long ns = 0, nl = 0
    cdef int status
    status = c_run(1, &zv[0], &t, &par[0], t_total, rtol, atol, max_step,
                   max_steps, -1.0, NULL, NULL, &ns, 0, renorm_dt, &lv[0], &nl)
    return status, t, z[:4].copy(), z[4:].copy(), logs[:nl]
