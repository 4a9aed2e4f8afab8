"""CSV and JSON writers for all pipeline outputs.

Comma-separated, '.' decimal, scientific notation with 17 significant
digits (exact round-trip for binary64).  Every file starts with a
provenance comment line carrying the tool version and a configuration hash.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from . import __version__

FLOAT_FMT = "{:.16e}"


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return FLOAT_FMT.format(x)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance_line(config: dict, backend: str) -> str:
    return (f"# amocbox {__version__} config={config_hash(config)} "
            f"backend={backend}")


def write_csv(path, header_cols, rows, config: dict, backend: str):
    """Rows are sequences; floats are formatted exactly, others via str."""
    with open(path, "w") as fh:
        fh.write(provenance_line(config, backend) + "\n")
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            out = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    out.append(format_float(v))
                elif isinstance(v, (int, np.integer)):
                    out.append(str(int(v)))
                else:
                    out.append(str(v))
            fh.write(",".join(out) + "\n")


def read_csv(path):
    """Read back a provenance-headed CSV into (header, list of row dicts)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    header = body[0].split(",")
    rows = []
    for ln in body[1:]:
        parts = ln.split(",")
        rows.append(dict(zip(header, parts)))
    return header, rows


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

TRAJECTORY_COLS = ["t", "x_N", "y_N", "y_E", "x_D", "Psi", "K_N", "K_E"]
EVENT_COLS = ["t_enter_intermediate", "t_enter_diffusive", "t_recover", "min_K_N"]
BRANCH_COLS = (["mu", "eta", "x_N", "y_N", "y_E", "x_D", "Psi", "stable"]
               + [f"re_{i}" for i in range(1, 5)]
               + [f"im_{i}" for i in range(1, 5)] + ["bif"])
CURVE_COLS = ["mu", "eta", "kind", "omega_or_sv", "codim2_flag"]
CYCLE_COLS = (["mu", "eta", "period", "psi_max", "psi_min", "stable",
               "shutdown_count"]
              + [f"m_re_{i}" for i in range(1, 5)]
              + [f"m_im_{i}" for i in range(1, 5)] + ["bif"])
LYAP_COLS = ["mu", "eta", "lambda_raw", "lambda_thresholded", "converged",
             "basin_note"]
CLASSIFY_COLS = ["mu", "eta", "label", "k", "period", "lambda_max",
                 "psi_mean", "psi_min", "psi_max"]
REGION_COLS = ["mu", "eta", "n_stable", "n_north", "n_south", "category"]


def trajectory_rows(traj):
    for i in range(len(traj)):
        s = traj.states[i]
        yield (traj.times[i], s[0], s[1], s[2], s[3], traj.psi[i],
               traj.K_N[i], traj.K_E[i])


def event_rows(events):
    for ev in events:
        yield (ev.t_enter_intermediate, ev.t_enter_diffusive, ev.t_recover,
               ev.min_K_N)


def branch_rows(branch):
    """Branch points with refined bifurcation points spliced in by mu."""
    tagged = [(pt, "none") for pt in branch.points]
    for bp in branch.bifurcations:
        tagged.append((bp.eq, bp.kind if bp.kind != "H" else "H"))
    for eq, tag in tagged:
        ev = eq.eigenvalues
        yield ((eq.mu, eq.eta) + tuple(eq.state)
               + (eq.psi, 1 if eq.stable else 0)
               + tuple(float(z.real) for z in ev)
               + tuple(float(z.imag) for z in ev) + (tag,))


def curve_rows(points, kind):
    for q in points:
        yield (q.mu, q.eta, kind, q.omega_or_sv, q.codim2 or "none")


def cycle_rows(branch):
    tagged = [(o, "none") for o in branch.orbits]
    for bp in branch.bifurcations:
        tagged.append((bp.orbit, bp.kind))
    for o, tag in tagged:
        m = o.multipliers if o.multipliers is not None else np.full(4, np.nan, complex)
        yield ((o.mu, o.eta, o.period, o.psi_max, o.psi_min,
                1 if (o.multipliers is not None and o.stable) else 0,
                o.shutdown_count if o.shutdown_count is not None else -1)
               + tuple(float(z.real) for z in m)
               + tuple(float(z.imag) for z in m) + (tag,))


def lyap_rows(results, threshold):
    for r in results:
        yield (r.mu, r.eta, r.lambda_raw, r.thresholded(threshold),
               1 if r.converged else 0, r.basin_note or r.error or "")


def classify_rows(cells):
    for mu, eta, lab in cells:
        yield (mu, eta, lab.kind.value, lab.k, lab.period, lab.lambda_max,
               lab.psi_mean, lab.psi_min, lab.psi_max)


def region_rows(cells):
    for mu, eta, lab in cells:
        yield (mu, eta, lab.n_stable, lab.n_north, lab.n_south, lab.category)


def orbit_json(orbit, config: dict, backend: str) -> str:
    """Orbit dump: mesh times and states plus diagnostics."""
    times = (orbit.fractions * orbit.period).tolist()
    doc = {
        "provenance": {"version": __version__,
                       "config": config_hash(config), "backend": backend},
        "mu": orbit.mu,
        "eta": orbit.eta,
        "period": orbit.period,
        "residual": orbit.residual,
        "stable": bool(orbit.stable) if orbit.multipliers is not None else None,
        "shutdown_count": orbit.shutdown_count,
        "mesh_times": times,
        "states": orbit.states.tolist(),
        "multipliers": None if orbit.multipliers is None else
            [[float(z.real), float(z.imag)] for z in orbit.multipliers],
    }
    return json.dumps(doc, indent=1)
