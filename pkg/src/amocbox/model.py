"""Three-box AMOC model equations.

Boxes: tropical surface (E), subpolar North Atlantic surface (N), deep water
(D).  The full model tracks temperature and salinity in each box (6D).  The
reduced model holds deep salinity constant and slaves tropical temperature to
the atmosphere (4D), and is non-dimensionalized with the advective timescale
V_N/sigma.  State order of the non-dimensional system: (x_N, y_N, y_E, x_D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

import numpy as np

from ._kernels import get_backend

SECONDS_PER_YEAR = 365.0 * 86400.0  # 365-day year for gamma_N conversion
SV = 1.0e6                          # m^3/s per Sverdrup

# Packing order of NondimParams into the flat parameter vector consumed by
# the compiled kernels.  Must match _kernels/_core.pyx.
PARAM_NAMES = (
    "mu", "eta", "phi", "x_E_a", "y_D", "W_t", "V_E_t", "V_D_t",
    "kappa_N", "kappa_E", "kappa_d", "delta_N", "epsilon", "vartheta",
)

# Curvature extrema of tanh: |tanh''| is maximal at argument artanh(1/sqrt(3)).
A_STAR = math.atanh(1.0 / math.sqrt(3.0))


class MixingRegime(Enum):
    CONVECTIVE = "convective"
    INTERMEDIATE = "intermediate"
    DIFFUSIVE = "diffusive"


@dataclass(frozen=True)
class DimensionalParams:
    """Physical parameters of the dimensional three-box model.

    Flow parameters are stored in m^3/s.  ``F_E`` is not stored: the net
    freshwater influx is zero, so F_E = -F_N always.  ``epsilon`` and
    ``vartheta`` are the dimensionless smoothing parameters of the scaled
    system; the dimensional equations convert them internally.
    """

    alpha_T: float = 1.7e-4        # 1/degC
    alpha_S: float = 0.8e-3        # dimensionless
    T_N_a: float = 7.0             # degC
    T_E_a: float = 25.0            # degC
    T_0: float = 2.65              # degC
    S_0: float = 35.0              # dimensionless
    S_D: float = 34.538            # dimensionless
    gamma_N: float = 1.0 / SECONDS_PER_YEAR   # 1/s (Table value: 1/yr)
    gamma_E: float = 0.0           # 1/s; tropical restoring (0 in reduced use)
    V_N: float = 7.2106e15         # m^3
    V_E: float = 6.3515e16         # m^3
    V_D: float = 1.2979e17         # m^3
    sigma: float = 2.1e4 * SV      # m^3/s
    W: float = 5.456 * SV          # m^3/s
    k_N: float = 8.0 * SV          # m^3/s
    k_E: float = 4.0 * SV          # m^3/s
    k_d: float = 0.01 * SV         # m^3/s
    F_N: float = 0.0               # m^3/s, virtual salinity flux (<0: freshwater)
    Delta_rho: float = 0.0         # kg/m^3, convection onset threshold
    rho_0: float = 1025.0          # kg/m^3, reference density for reporting
    epsilon: float = 0.02          # dimensionless smoothing (convective switch)
    vartheta: float = 0.02         # dimensionless smoothing (|Psi|)

    def __post_init__(self):
        if not (0.0 < self.k_d < self.k_E < self.k_N):
            raise ValueError("mixing strengths must satisfy 0 < k_d < k_E < k_N")
        for name in ("V_N", "V_E", "V_D", "sigma", "alpha_T", "alpha_S", "rho_0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not (self.T_0 < self.T_N_a < self.T_E_a):
            raise ValueError("temperatures must satisfy T_0 < T_N_a < T_E_a")
        if self.epsilon <= 0.0 or self.vartheta <= 0.0:
            raise ValueError("smoothing parameters must be positive")


@dataclass(frozen=True)
class NondimParams:
    """Parameters of the scaled 4D system."""

    mu: float                      # virtual salinity flux (<0: freshwater input)
    eta: float                     # density threshold for convection onset
    phi: float = 7.395e-4          # alpha_T * (T_N_a - T_0)
    x_E_a: float = 22.35 / 4.35    # scaled tropical atmospheric temperature
    y_D: float = 0.8e-3 * (34.538 - 35.0) / 7.395e-4
    W_t: float = 5.456 / 2.1e4
    V_E_t: float = 6.3515e16 / 7.2106e15
    V_D_t: float = 1.2979e17 / 7.2106e15
    kappa_N: float = 8.0 / 2.1e4
    kappa_E: float = 4.0 / 2.1e4
    kappa_d: float = 0.01 / 2.1e4
    delta_N: float = 7.2106e15 / (2.1e10 * SECONDS_PER_YEAR)
    epsilon: float = 0.02
    vartheta: float = 0.02

    def __post_init__(self):
        if not (0.0 < self.kappa_d < self.kappa_E < self.kappa_N):
            raise ValueError("mixing strengths must satisfy 0 < kappa_d < kappa_E < kappa_N")
        if self.epsilon <= 0.0 or self.vartheta <= 0.0:
            raise ValueError("smoothing parameters must be positive")
        if self.phi <= 0.0:
            raise ValueError("phi must be positive")
        if self.V_E_t <= 1.0 or self.V_D_t <= 1.0:
            raise ValueError("volume ratios V_E_t, V_D_t must exceed 1")

    def pack(self) -> np.ndarray:
        """Flat float64 vector in PARAM_NAMES order, for the kernels."""
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    def with_forcing(self, mu: float | None = None, eta: float | None = None) -> "NondimParams":
        kw = {}
        if mu is not None:
            kw["mu"] = float(mu)
        if eta is not None:
            kw["eta"] = float(eta)
        return replace(self, **kw) if kw else self


def build_nondim(dim: DimensionalParams, mu: float | None = None,
                 eta: float | None = None) -> NondimParams:
    """Non-dimensionalize the physical parameters.

    ``mu`` / ``eta`` override the values implied by ``dim.F_N`` /
    ``dim.Delta_rho``.  The restoring rate is scaled with the full advective
    time unit V_N/sigma (it multiplies a rate, not a flux).
    """
    phi = dim.alpha_T * (dim.T_N_a - dim.T_0)
    if phi <= 0.0:
        raise ValueError("alpha_T * (T_N_a - T_0) must be positive")
    mu_val = mu if mu is not None else dim.F_N * dim.S_0 * dim.alpha_S / (dim.sigma * phi)
    eta_val = eta if eta is not None else dim.Delta_rho / (phi * dim.rho_0)
    return NondimParams(
        mu=float(mu_val),
        eta=float(eta_val),
        phi=phi,
        x_E_a=(dim.T_E_a - dim.T_0) / (dim.T_N_a - dim.T_0),
        y_D=dim.alpha_S * (dim.S_D - dim.S_0) / phi,
        W_t=dim.W / dim.sigma,
        V_E_t=dim.V_E / dim.V_N,
        V_D_t=dim.V_D / dim.V_N,
        kappa_N=dim.k_N / dim.sigma,
        kappa_E=dim.k_E / dim.sigma,
        kappa_d=dim.k_d / dim.sigma,
        delta_N=dim.gamma_N * dim.V_N / dim.sigma,
        epsilon=dim.epsilon,
        vartheta=dim.vartheta,
    )


def time_unit_days(dim: DimensionalParams) -> float:
    """Length of one scaled time unit, V_N/sigma, in days."""
    if dim.sigma <= 0.0 or dim.V_N <= 0.0:
        raise ValueError("sigma and V_N must be positive")
    return (dim.V_N / dim.sigma) / 86400.0


def smooth_abs(psi_value, vartheta: float):
    """C-infinity regularization of |psi|: psi * tanh(psi/vartheta)."""
    if vartheta <= 0.0:
        raise ValueError("vartheta must be positive")
    psi_value = np.asarray(psi_value, dtype=float)
    out = psi_value * np.tanh(psi_value / vartheta)
    return float(out) if out.ndim == 0 else out


def state_array(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape != (4,):
        raise ValueError("state must have 4 components (x_N, y_N, y_E, x_D)")
    return arr


def psi(state, p: NondimParams):
    """Scaled overturning strength; > 0 means northward surface flow."""
    s = np.asarray(state, dtype=float)
    x_N, y_N, y_E = s[..., 0], s[..., 1], s[..., 2]
    out = p.phi * ((y_N - x_N) - (y_E - p.x_E_a))
    return float(out) if np.ndim(out) == 0 else out


def sigmoid_argument(state, p: NondimParams, box: str):
    """Argument of the convective-switch tanh for box 'N' or 'E'."""
    s = np.asarray(state, dtype=float)
    x_D = s[..., 3]
    if box == "N":
        surf = s[..., 1] - s[..., 0]
    elif box == "E":
        surf = s[..., 2] - p.x_E_a
    else:
        raise ValueError("box must be 'N' or 'E'")
    out = (surf - (p.y_D - x_D) - p.eta) / p.epsilon
    return float(out) if np.ndim(out) == 0 else out


def conv_exchange(state, p: NondimParams, box: str):
    """Convective exchange strength K_N or K_E.

    Lies strictly between kappa_d (diffusive) and kappa_box (convective) and
    increases with the surface-minus-deep density difference.
    """
    a = sigmoid_argument(state, p, box)
    k_box = p.kappa_N if box == "N" else p.kappa_E
    out = p.kappa_d + 0.5 * (k_box - p.kappa_d) * (1.0 + np.tanh(a))
    return float(out) if np.ndim(out) == 0 else out


def regime(state, p: NondimParams, box: str, a_star: float = A_STAR) -> MixingRegime:
    """Mixing regime of a box; boundaries +-a_star assign outward."""
    return regime_of_argument(sigmoid_argument(state, p, box), a_star)


def regime_of_argument(a: float, a_star: float = A_STAR) -> MixingRegime:
    if a >= a_star:
        return MixingRegime.CONVECTIVE
    if a <= -a_star:
        return MixingRegime.DIFFUSIVE
    return MixingRegime.INTERMEDIATE


def rhs(state, p: NondimParams) -> np.ndarray:
    """Right-hand side of the scaled 4D system, (dx_N, dy_N, dy_E, dx_D)."""
    return get_backend().rhs(state_array(state), p.pack())


def jacobian(state, p: NondimParams) -> np.ndarray:
    """Exact 4x4 derivative of :func:`rhs` with respect to the state."""
    return get_backend().jac(state_array(state), p.pack())


# ---------------------------------------------------------------------------
# Dimensional systems (used for conservation and consistency checks)
# ---------------------------------------------------------------------------

def _density(dim: DimensionalParams, T, S):
    # Linear equation of state; dimensionless anomaly (multiply by rho_0 for kg/m^3).
    return -dim.alpha_T * (T - dim.T_0) + dim.alpha_S * (S - dim.S_0)


def rhs_full(full_state, dim: DimensionalParams) -> np.ndarray:
    """Six dimensional budgets (dT_N, dT_E, dT_D, dS_N, dS_E, dS_D)/dt.

    Volume-weighted budgets divided through by the box volumes; time in
    seconds.  F_E = -F_N is applied internally.
    """
    T_N, T_E, T_D, S_N, S_E, S_D = np.asarray(full_state, dtype=float)
    phi = dim.alpha_T * (dim.T_N_a - dim.T_0)
    rho_N = _density(dim, T_N, S_N)
    rho_E = _density(dim, T_E, S_E)
    rho_D = _density(dim, T_D, S_D)

    Psi = dim.sigma * (rho_N - rho_E)
    A = Psi * math.tanh(Psi / (dim.sigma * dim.vartheta))
    K_N = dim.k_d + 0.5 * (dim.k_N - dim.k_d) * (
        1.0 + math.tanh((rho_N - rho_D - dim.Delta_rho / dim.rho_0) / (phi * dim.epsilon)))
    K_E = dim.k_d + 0.5 * (dim.k_E - dim.k_d) * (
        1.0 + math.tanh((rho_E - rho_D - dim.Delta_rho / dim.rho_0) / (phi * dim.epsilon)))
    F_E = -dim.F_N

    dT_N = (-dim.gamma_N * dim.V_N * (T_N - dim.T_N_a) + 0.5 * Psi * (T_E - T_D)
            + dim.W * (T_E - T_N) + 0.5 * A * (T_E + T_D - 2.0 * T_N)
            - K_N * (T_N - T_D)) / dim.V_N
    dS_N = (dim.F_N * dim.S_0 + 0.5 * Psi * (S_E - S_D)
            + 0.5 * A * (S_E + S_D - 2.0 * S_N) + dim.W * (S_E - S_N)
            + K_N * (S_D - S_N)) / dim.V_N
    dT_E = (-dim.gamma_E * dim.V_E * (T_E - dim.T_E_a) + 0.5 * Psi * (T_D - T_N)
            + 0.5 * A * (T_D + T_N - 2.0 * T_E) - dim.W * (T_E - T_N)
            - K_E * (T_E - T_D)) / dim.V_E
    dS_E = (F_E * dim.S_0 + 0.5 * Psi * (S_D - S_N)
            + 0.5 * A * (S_D + S_N - 2.0 * S_E) - dim.W * (S_E - S_N)
            - K_E * (S_E - S_D)) / dim.V_E
    dT_D = (0.5 * Psi * (T_N - T_E) + 0.5 * A * (T_N + T_E - 2.0 * T_D)
            + K_N * (T_N - T_D) + K_E * (T_E - T_D)) / dim.V_D
    dS_D = (0.5 * Psi * (S_N - S_E) + 0.5 * A * (S_N + S_E - 2.0 * S_D)
            + K_N * (S_N - S_D) + K_E * (S_E - S_D)) / dim.V_D
    return np.array([dT_N, dT_E, dT_D, dS_N, dS_E, dS_D])


def rhs_reduced_dimensional(red_state, dim: DimensionalParams) -> np.ndarray:
    """Reduced dimensional system (dT_N, dS_N, dS_E, dT_D)/dt.

    Deep salinity fixed at dim.S_D and T_E slaved to T_E_a; time in seconds.
    """
    T_N, S_N, S_E, T_D = np.asarray(red_state, dtype=float)
    phi = dim.alpha_T * (dim.T_N_a - dim.T_0)
    rho_N = _density(dim, T_N, S_N)
    rho_E = _density(dim, dim.T_E_a, S_E)
    rho_D = _density(dim, T_D, dim.S_D)

    Psi = dim.sigma * (rho_N - rho_E)
    A = Psi * math.tanh(Psi / (dim.sigma * dim.vartheta))
    K_N = dim.k_d + 0.5 * (dim.k_N - dim.k_d) * (
        1.0 + math.tanh((rho_N - rho_D - dim.Delta_rho / dim.rho_0) / (phi * dim.epsilon)))
    K_E = dim.k_d + 0.5 * (dim.k_E - dim.k_d) * (
        1.0 + math.tanh((rho_E - rho_D - dim.Delta_rho / dim.rho_0) / (phi * dim.epsilon)))

    dT_N = (-dim.gamma_N * dim.V_N * (T_N - dim.T_N_a) + 0.5 * Psi * (dim.T_E_a - T_D)
            + dim.W * (dim.T_E_a - T_N) + 0.5 * A * (dim.T_E_a + T_D - 2.0 * T_N)
            - K_N * (T_N - T_D)) / dim.V_N
    dS_N = (dim.F_N * dim.S_0 + 0.5 * Psi * (S_E - dim.S_D)
            + 0.5 * A * (S_E + dim.S_D - 2.0 * S_N) + dim.W * (S_E - S_N)
            + K_N * (dim.S_D - S_N)) / dim.V_N
    dS_E = (-dim.F_N * dim.S_0 + 0.5 * Psi * (dim.S_D - S_N)
            + 0.5 * A * (dim.S_D + S_N - 2.0 * S_E) - dim.W * (S_E - S_N)
            - K_E * (S_E - dim.S_D)) / dim.V_E
    dT_D = (0.5 * Psi * (T_N - dim.T_E_a) + 0.5 * A * (T_N + dim.T_E_a - 2.0 * T_D)
            + K_N * (T_N - T_D) + K_E * (dim.T_E_a - T_D)) / dim.V_D
    return np.array([dT_N, dS_N, dS_E, dT_D])


def nondim_state_from_dimensional(red_state, dim: DimensionalParams) -> np.ndarray:
    """Map (T_N, S_N, S_E, T_D) to (x_N, y_N, y_E, x_D)."""
    T_N, S_N, S_E, T_D = np.asarray(red_state, dtype=float)
    dT = dim.T_N_a - dim.T_0
    phi = dim.alpha_T * dT
    return np.array([
        (T_N - dim.T_0) / dT,
        dim.alpha_S * (S_N - dim.S_0) / phi,
        dim.alpha_S * (S_E - dim.S_0) / phi,
        (T_D - dim.T_0) / dT,
    ])


def dimensional_state_from_nondim(state, dim: DimensionalParams) -> np.ndarray:
    """Inverse of :func:`nondim_state_from_dimensional`."""
    x_N, y_N, y_E, x_D = state_array(state)
    dT = dim.T_N_a - dim.T_0
    phi = dim.alpha_T * dT
    return np.array([
        dim.T_0 + x_N * dT,
        dim.S_0 + y_N * phi / dim.alpha_S,
        dim.S_0 + y_E * phi / dim.alpha_S,
        dim.T_0 + x_D * dT,
    ])


def dimensional_report(p: NondimParams, dim: DimensionalParams) -> dict:
    """Convert the scaled forcing back to physical units."""
    F_N = p.mu * dim.sigma * p.phi / (dim.S_0 * dim.alpha_S)
    return {
        "mu": p.mu,
        "eta": p.eta,
        "F_N_Sv": F_N / SV,
        "Delta_rho_kg_m3": p.eta * p.phi * dim.rho_0,
        "time_unit_days": time_unit_days(dim),
        "time_unit_years": time_unit_days(dim) / 365.0,
    }


def derived_series(states: np.ndarray, p: NondimParams) -> dict:
    """Psi, K_N, K_E along an (n, 4) array of states."""
    states = np.asarray(states, dtype=float)
    return {
        "Psi": psi(states, p),
        "K_N": conv_exchange(states, p, "N"),
        "K_E": conv_exchange(states, p, "E"),
    }


def default_params(mu: float = 0.0, eta: float = 0.0, **overrides) -> NondimParams:
    """Table-1 scaled parameters with the given forcing."""
    dim = DimensionalParams(**{k: v for k, v in overrides.items()
                               if k in DimensionalParams.__dataclass_fields__})
    return build_nondim(dim, mu=mu, eta=eta)
