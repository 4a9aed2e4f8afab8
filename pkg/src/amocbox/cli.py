"""Command-line front end.

Subcommands: simulate, equilibria, continue {eq, hopf, sn, cycle},
sweep {lyapunov, classify, regions}, convert.  Configuration comes from
defaults (Table-1 physics, eps = vartheta = 0.02), overridden by a flat
``key = value`` config file (--config), overridden by flags.  The thread
count for sweeps is AMOCBOX_THREADS.  All outputs are deterministic for a
given configuration and carry a provenance header.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import re
import sys

import numpy as np

from . import model, integrate, equilibria, cycles, lyapunov, classify, csvio
from ._kernels import backend_name

_DIM_KEYS = set(model.DimensionalParams.__dataclass_fields__)
_NONDIM_KEYS = set(model.NondimParams.__dataclass_fields__) - {"mu", "eta"}
_INT_KEYS = {"rel_tol", "abs_tol", "max_step", "dense_output_interval",
             "max_steps"}
_SWEEP_KEYS = {"t_transient", "t_measure", "renorm_interval",
               "chaos_threshold", "t_window", "recurrence_tol",
               "x0_x_N", "x0_y_N", "x0_y_E", "x0_x_D"}
_KNOWN_KEYS = _DIM_KEYS | _NONDIM_KEYS | _INT_KEYS | _SWEEP_KEYS


class ConfigError(ValueError):
    pass


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' comments; unknown keys rejected."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = float(val) if key != "max_steps" else int(float(val))
    return out


class Run:
    """Resolved configuration shared by the subcommands."""

    def __init__(self, args):
        cfg = parse_config_file(args.config) if args.config else {}
        dim_kwargs = {k: v for k, v in cfg.items() if k in _DIM_KEYS}
        self.dim = model.DimensionalParams(**dim_kwargs)
        base = model.build_nondim(self.dim)
        nd_over = {k: v for k, v in cfg.items() if k in _NONDIM_KEYS}
        if nd_over:
            base = dataclasses.replace(base, **nd_over)
        self.params = base
        ik = {k: cfg[k] for k in _INT_KEYS if k in cfg}
        if "max_steps" in ik:
            ik["max_steps"] = int(ik["max_steps"])
        self.int_cfg = integrate.IntegratorConfig(**ik)
        self.sweep_cfg = {k: cfg[k] for k in _SWEEP_KEYS if k in cfg}
        self.raw = dict(cfg)

    _PATH_ARGS = {"func", "out", "events_out", "orbit_json", "config"}

    def provenance(self, args) -> dict:
        # output paths do not influence the computation, so they stay out
        # of the config hash
        doc = dict(self.raw)
        doc.update({k: v for k, v in vars(args).items()
                    if k not in self._PATH_ARGS and v is not None})
        return doc

    def x0(self):
        keys = ("x0_x_N", "x0_y_N", "x0_y_E", "x0_x_D")
        if all(k in self.sweep_cfg for k in keys):
            return tuple(self.sweep_cfg[k] for k in keys)
        return lyapunov.DEFAULT_X0

    def lyap_cfg(self, **over) -> lyapunov.LyapunovConfig:
        kw = {k: self.sweep_cfg[k] for k in
              ("t_transient", "t_measure", "renorm_interval", "chaos_threshold")
              if k in self.sweep_cfg}
        kw["x0"] = self.x0()
        kw.update({k: v for k, v in over.items() if v is not None})
        return lyapunov.LyapunovConfig(**kw)

    def classify_cfg(self, **over) -> classify.ClassifyConfig:
        kw = {}
        if "t_transient" in self.sweep_cfg:
            kw["t_transient"] = self.sweep_cfg["t_transient"]
        if "t_window" in self.sweep_cfg:
            kw["t_window"] = self.sweep_cfg["t_window"]
        if "recurrence_tol" in self.sweep_cfg:
            kw["recurrence_tol"] = self.sweep_cfg["recurrence_tol"]
        kw["x0"] = self.x0()
        kw["lyap"] = self.lyap_cfg()
        kw.update({k: v for k, v in over.items() if v is not None})
        return classify.ClassifyConfig(**kw)


def _fail(msg: str, code: int = 1):
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(code)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    run = Run(args)
    p = run.params.with_forcing(mu=args.mu, eta=args.eta)
    icfg = run.int_cfg
    if args.dense_interval is not None:
        icfg = dataclasses.replace(icfg, dense_output_interval=args.dense_interval)
    x0 = np.asarray(args.x0 if args.x0 else run.x0(), dtype=float)
    try:
        if args.transient > 0:
            x0 = integrate.advance(x0, p, args.transient, icfg)
        traj = integrate.integrate(x0, p, (0.0, args.t_end), icfg)
        events = integrate.detect_shutdowns(traj, cfg=icfg)
    except integrate.IntegrationError as err:
        _fail(f"integration failed: {err}")
    prov = run.provenance(args)
    csvio.write_csv(args.out, csvio.TRAJECTORY_COLS,
                    csvio.trajectory_rows(traj), prov, backend_name())
    csvio.write_csv(args.events_out, csvio.EVENT_COLS,
                    csvio.event_rows(events), prov, backend_name())
    print(f"wrote {args.out} ({len(traj)} samples) and {args.events_out} "
          f"({len(events)} events)")


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------

def cmd_equilibria(args):
    run = Run(args)
    p = run.params.with_forcing(mu=args.mu, eta=args.eta)
    roots = equilibria.find_all_equilibria(p, points_per_axis=args.seeds)
    fake_branch = equilibria.EqBranch(eta=args.eta, points=roots)
    csvio.write_csv(args.out, csvio.BRANCH_COLS, csvio.branch_rows(fake_branch),
                    run.provenance(args), backend_name())
    print(f"{len(roots)} equilibria at mu={args.mu:g}, eta={args.eta:g} "
          f"(count is a lower bound)")
    for r in roots:
        print(f"  psi={r.psi:+.4e} {'stable' if r.stable else 'unstable'} "
              f"{r.direction}  x=({', '.join(f'{v:.5g}' for v in r.state)})")
    print(f"wrote {args.out}")


# ---------------------------------------------------------------------------
# continue
# ---------------------------------------------------------------------------

def _seed_branch_start(p, mu_seed, prefer="north"):
    roots = equilibria.find_all_equilibria(p.with_forcing(mu=mu_seed))
    if not roots:
        _fail("no equilibria found at the seed point")
    stable = [r for r in roots if r.stable] or roots
    if prefer == "north":
        return max(stable, key=lambda r: r.psi)
    return min(stable, key=lambda r: r.psi)


def cmd_continue_eq(args):
    run = Run(args)
    p = run.params.with_forcing(eta=args.eta)
    start = _seed_branch_start(p, args.seed_mu if args.seed_mu is not None
                               else args.mu_from, args.branch)
    br = equilibria.continue_eq_branch(start, p, (args.mu_from, args.mu_to),
                                       ds=args.ds, ds_max=args.ds_max)
    csvio.write_csv(args.out, csvio.BRANCH_COLS, csvio.branch_rows(br),
                    run.provenance(args), backend_name())
    print(f"branch: {len(br.points)} points, termination: {br.termination}")
    for b in br.bifurcations:
        extra = f" omega={b.omega:.5g} l1={b.l1:.4g}" if b.kind == "H" else ""
        print(f"  {b.kind} at mu={b.eq.mu:.9e}{extra}")
    print(f"wrote {args.out}")


def _scan_points(run, args, kind):
    p = run.params.with_forcing(eta=args.eta)
    window = (args.mu_from, args.mu_to)
    found = equilibria.scan_bifurcation_points(p, window, n_grid=args.scan_grid)
    pts = found[kind]
    if not pts:
        _fail(f"no {kind} points found in the scan window")
    if args.point > len(pts):
        _fail(f"only {len(pts)} {kind} points found; --point {args.point} "
              "out of range")
    return p, pts[args.point - 1], pts


def cmd_continue_hopf(args):
    run = Run(args)
    p, pt, all_pts = _scan_points(run, args, "H")
    print(f"Hopf points found: "
          + ", ".join(f"H{i+1}: mu={q.eq.mu:.6e}" for i, q in enumerate(all_pts)))
    window = (args.mu_min, args.mu_max, args.eta_min, args.eta_max)
    pts = equilibria.continue_hopf_curve(pt, p, window, max_points=args.max_points)
    csvio.write_csv(args.out, csvio.CURVE_COLS, csvio.curve_rows(pts, "H"),
                    run.provenance(args), backend_name())
    flags = [(q.codim2, q.mu, q.eta) for q in pts if q.codim2]
    print(f"H curve: {len(pts)} points; codim-2 flags: "
          + (", ".join(f"{k} at ({m:.5e}, {e:.5g})" for k, m, e in flags) or "none"))
    print(f"wrote {args.out}")


def cmd_continue_sn(args):
    run = Run(args)
    p, pt, all_pts = _scan_points(run, args, "SN")
    print(f"SN points found: "
          + ", ".join(f"SN{i+1}: mu={q.eq.mu:.6e}" for i, q in enumerate(all_pts)))
    window = (args.mu_min, args.mu_max, args.eta_min, args.eta_max)
    pts = equilibria.continue_sn_curve(pt, p, window, max_points=args.max_points)
    csvio.write_csv(args.out, csvio.CURVE_COLS, csvio.curve_rows(pts, "SN"),
                    run.provenance(args), backend_name())
    flags = [(q.codim2, q.mu, q.eta) for q in pts if q.codim2]
    print(f"SN curve: {len(pts)} points; codim-2 flags: "
          + (", ".join(f"{k} at ({m:.5e}, {e:.5g})" for k, m, e in flags) or "none"))
    print(f"wrote {args.out}")


def cmd_continue_cycle(args):
    run = Run(args)
    p = run.params.with_forcing(eta=args.eta)
    idx = int(args.from_hopf.upper().lstrip("H"))
    window = (args.mu_from, args.mu_to)
    found = equilibria.scan_bifurcation_points(p, window, n_grid=args.scan_grid)
    hopfs = found["H"]
    if len(hopfs) < idx:
        _fail(f"only {len(hopfs)} Hopf points found in the window; "
              f"--from-hopf {args.from_hopf} unavailable")
    hopf = hopfs[idx - 1]
    print(f"starting from H{idx}: mu={hopf.eq.mu:.8e} omega={hopf.omega:.5g} "
          f"l1={hopf.l1:.4g}")
    pp = p.with_forcing(mu=hopf.eq.mu)
    J = model.jacobian(hopf.eq.state, pp)
    w = equilibria._eigvec_for(J, complex(0.0, hopf.omega))
    try:
        orb0 = cycles.solve_cycle_from_hopf(hopf.eq.state, hopf.omega, w, pp,
                                            n_seg=args.segments)
    except cycles.CycleError as err:
        _fail(f"could not start the cycle branch: {err}")
    stop = None
    if args.stop_at_bif:
        stop = lambda br: len(br.bifurcations) > 0
    br = cycles.continue_cycles(orb0, p, window, max_orbits=args.max_orbits,
                                stop_at=stop)
    for orb in br.orbits:
        cycles.count_shutdowns(orb, p)
    csvio.write_csv(args.out, csvio.CYCLE_COLS, csvio.cycle_rows(br),
                    run.provenance(args), backend_name())
    print(f"cycle branch: {len(br.orbits)} orbits, termination: {br.termination}")
    for b in br.bifurcations:
        print(f"  {b.kind} at mu={b.orbit.mu:.9e} period={b.orbit.period:.6g}")
    if args.orbit_json:
        target = br.orbits[-1]
        if args.orbit_at_mu is not None:
            target = cycles.orbit_at_mu(br, args.orbit_at_mu, p,
                                        stable_only=False)
            cycles.count_shutdowns(target, p)
        with open(args.orbit_json, "w") as fh:
            fh.write(csvio.orbit_json(target, run.provenance(args),
                                      backend_name()))
        print(f"wrote {args.orbit_json}")
    print(f"wrote {args.out}")


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _grid(args):
    if args.nx < 2 or args.ny < 2:
        _fail("sweep grid must be at least 2x2", 2)
    mus = np.linspace(args.mu_min, args.mu_max, args.nx)
    etas = np.linspace(args.eta_min, args.eta_max, args.ny)
    return mus, etas


def _progress_printer(total):
    def cb(i, n):
        if i % max(1, n // 20) == 0 or i == n:
            print(f"  {i}/{n} cells", flush=True)
    return cb


def cmd_sweep_lyapunov(args):
    run = Run(args)
    mus, etas = _grid(args)
    cfg = run.lyap_cfg(t_transient=args.transient, t_measure=args.measure)
    res = lyapunov.sweep(mus, etas, run.params, cfg,
                         progress=_progress_printer(len(mus) * len(etas)))
    csvio.write_csv(args.out, csvio.LYAP_COLS,
                    csvio.lyap_rows(res, cfg.chaos_threshold),
                    run.provenance(args), backend_name())
    bad = sum(1 for r in res if math.isnan(r.lambda_raw))
    n_pos = sum(1 for r in res if r.thresholded(cfg.chaos_threshold) > 0)
    print(f"wrote {args.out}: {len(res)} cells, {n_pos} above threshold, "
          f"{bad} failed")
    if bad > 0.05 * len(res):
        _fail("more than 5% of cells failed")


def cmd_sweep_classify(args):
    run = Run(args)
    mus, etas = _grid(args)
    cfg = run.classify_cfg(t_transient=args.transient)
    cells = classify.classify_sweep(mus, etas, run.params, cfg,
                                    progress=_progress_printer(len(mus) * len(etas)))
    csvio.write_csv(args.out, csvio.CLASSIFY_COLS, csvio.classify_rows(cells),
                    run.provenance(args), backend_name())
    unresolved = sum(1 for _, _, lab in cells
                     if lab.kind is classify.Kind.UNRESOLVED)
    print(f"wrote {args.out}: {len(cells)} cells, {unresolved} unresolved")
    if unresolved > 0.05 * len(cells):
        _fail("more than 5% of cells unresolved")


def cmd_sweep_regions(args):
    run = Run(args)
    mus, etas = _grid(args)
    cells = equilibria.region_sweep(mus, etas, run.params,
                                    points_per_axis=args.seeds)
    csvio.write_csv(args.out, csvio.REGION_COLS, csvio.region_rows(cells),
                    run.provenance(args), backend_name())
    print(f"wrote {args.out}: {len(cells)} cells")


# ---------------------------------------------------------------------------
# convert
# ---------------------------------------------------------------------------

def cmd_convert(args):
    run = Run(args)
    p = run.params.with_forcing(mu=args.mu, eta=args.eta)
    rep = model.dimensional_report(p, run.dim)
    print(f"mu = {rep['mu']:.6g}  ->  F_N = {rep['F_N_Sv']:.4g} Sv")
    print(f"eta = {rep['eta']:.6g}  ->  Delta_rho = {rep['Delta_rho_kg_m3']:.4g} kg/m^3")
    print(f"time unit = {rep['time_unit_days']:.4g} days "
          f"({rep['time_unit_years']:.4g} years)")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amocbox",
                                 description="Three-box AMOC model toolkit")
    ap.add_argument("--config", help="flat key = value configuration file")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate a trajectory")
    sim.add_argument("--mu", type=float, required=True)
    sim.add_argument("--eta", type=float, required=True)
    sim.add_argument("--t-end", type=float, required=True, dest="t_end")
    sim.add_argument("--transient", type=float, default=0.0)
    sim.add_argument("--x0", type=float, nargs=4, metavar=("xN", "yN", "yE", "xD"))
    sim.add_argument("--dense-interval", type=float, dest="dense_interval")
    sim.add_argument("--out", default="trajectory.csv")
    sim.add_argument("--events-out", default="events.csv", dest="events_out")
    sim.set_defaults(func=cmd_simulate)

    eqp = sub.add_parser("equilibria", help="find all equilibria at (mu, eta)")
    eqp.add_argument("--mu", type=float, required=True)
    eqp.add_argument("--eta", type=float, required=True)
    eqp.add_argument("--seeds", type=int, default=5, help="seed points per axis")
    eqp.add_argument("--out", default="equilibria.csv")
    eqp.set_defaults(func=cmd_equilibria)

    cont = sub.add_parser("continue", help="continuation runs")
    csub = cont.add_subparsers(dest="what", required=True)

    ceq = csub.add_parser("eq", help="equilibrium branch in mu")
    ceq.add_argument("--eta", type=float, required=True)
    ceq.add_argument("--mu-from", type=float, required=True, dest="mu_from")
    ceq.add_argument("--mu-to", type=float, required=True, dest="mu_to")
    ceq.add_argument("--seed-mu", type=float, dest="seed_mu")
    ceq.add_argument("--branch", choices=["north", "south"], default="north")
    ceq.add_argument("--ds", type=float, default=1e-5)
    ceq.add_argument("--ds-max", type=float, default=5e-4, dest="ds_max")
    ceq.add_argument("--out", default="branch.csv")
    ceq.set_defaults(func=cmd_continue_eq)

    for kind, fn in (("hopf", cmd_continue_hopf), ("sn", cmd_continue_sn)):
        c2 = csub.add_parser(kind, help=f"two-parameter {kind} curve")
        c2.add_argument("--eta", type=float, required=True,
                        help="eta of the scan slice for the starting point")
        c2.add_argument("--mu-from", type=float, required=True, dest="mu_from")
        c2.add_argument("--mu-to", type=float, required=True, dest="mu_to")
        c2.add_argument("--point", type=int, default=1,
                        help="index of the scanned point (sorted by decreasing mu)")
        c2.add_argument("--scan-grid", type=int, default=40, dest="scan_grid")
        c2.add_argument("--two-param", action="store_true", dest="two_param",
                        help="accepted for compatibility; curves are 2-parameter")
        c2.add_argument("--mu-min", type=float, required=True, dest="mu_min")
        c2.add_argument("--mu-max", type=float, required=True, dest="mu_max")
        c2.add_argument("--eta-min", type=float, required=True, dest="eta_min")
        c2.add_argument("--eta-max", type=float, required=True, dest="eta_max")
        c2.add_argument("--max-points", type=int, default=1000, dest="max_points")
        c2.add_argument("--out", default=f"{kind}_curve.csv")
        c2.set_defaults(func=fn)

    ccy = csub.add_parser("cycle", help="periodic-orbit branch from a Hopf point")
    ccy.add_argument("--from-hopf", required=True, dest="from_hopf",
                     help="H1, H2, ... (sorted by decreasing mu)")
    ccy.add_argument("--eta", type=float, required=True)
    ccy.add_argument("--mu-from", type=float, default=-2.0e-3, dest="mu_from")
    ccy.add_argument("--mu-to", type=float, default=-2.3e-3, dest="mu_to")
    ccy.add_argument("--scan-grid", type=int, default=40, dest="scan_grid")
    ccy.add_argument("--segments", type=int, default=40)
    ccy.add_argument("--max-orbits", type=int, default=600, dest="max_orbits")
    ccy.add_argument("--stop-at-bif", action="store_true", dest="stop_at_bif",
                     help="stop at the first registered bifurcation")
    ccy.add_argument("--orbit-json", dest="orbit_json",
                     help="dump an orbit (mesh times and states) as JSON")
    ccy.add_argument("--orbit-at-mu", type=float, dest="orbit_at_mu",
                     help="solve the dumped orbit at this exact mu")
    ccy.add_argument("--out", default="cycle_branch.csv")
    ccy.set_defaults(func=cmd_continue_cycle)

    sw = sub.add_parser("sweep", help="(mu, eta) rasters")
    ssub = sw.add_subparsers(dest="what", required=True)
    for kind, fn in (("lyapunov", cmd_sweep_lyapunov),
                     ("classify", cmd_sweep_classify),
                     ("regions", cmd_sweep_regions)):
        s2 = ssub.add_parser(kind)
        s2.add_argument("--mu-min", type=float, required=True, dest="mu_min")
        s2.add_argument("--mu-max", type=float, required=True, dest="mu_max")
        s2.add_argument("--eta-min", type=float, required=True, dest="eta_min")
        s2.add_argument("--eta-max", type=float, required=True, dest="eta_max")
        s2.add_argument("--nx", type=int, required=True)
        s2.add_argument("--ny", type=int, required=True)
        if kind in ("lyapunov", "classify"):
            s2.add_argument("--transient", type=float, dest="transient")
        if kind == "lyapunov":
            s2.add_argument("--measure", type=float, dest="measure")
        if kind == "regions":
            s2.add_argument("--seeds", type=int, default=5)
        s2.add_argument("--out", default=f"sweep_{kind}.csv")
        s2.set_defaults(func=fn)

    cv = sub.add_parser("convert", help="dimensional report for (mu, eta)")
    cv.add_argument("--mu", type=float, required=True)
    cv.add_argument("--eta", type=float, default=0.0)
    cv.set_defaults(func=cmd_convert)

    _allow_scientific_negatives(ap)
    return ap


def _allow_scientific_negatives(parser):
    """Let values like -2.128e-3 follow a flag with a space."""
    matcher = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")
    parser._negative_number_matcher = matcher
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub_parser in action.choices.values():
                _allow_scientific_negatives(sub_parser)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as err:
        _fail(str(err), 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
