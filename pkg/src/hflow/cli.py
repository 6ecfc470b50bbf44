"""Command-line entry point: ``hflow run | check | compare``.

Exit status 0 on success, 1 when ``check`` finds a failed gate, 2 on any
configuration or input error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ambient import standard_hyperkahler_torus, verify_structure_relations
from .diagnostics import (SPECIAL_GATE, beta_mu_diagnostics, energy, energy_from_lambda, q_field,
                          special_identity_residuals)
from .exceptions import ConfigurationError, HFlowError
from .flow import FLOW_KINDS, _cfl, integrate, velocity_hflow_gradient, velocity_hflow_hamiltonian
from .io import joined_csv_text, write_diagnostics_csv, write_snapshot
from .scenarios import GRAPH_MAPS, build_initial_surface, load_scenario, serialize_scenario, with_grid
from .surface import compute_geometry

logger = logging.getLogger("hflow")

FLOW_SUFFIXES = {"hflow_gradient": "_hflow", "mcf": "_mcf", "hflow_hamiltonian": "_hflow_ham"}
SNAPSHOT_SUFFIX = {"flat_binary": ".bin", "vtk_legacy": ".vtk"}


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    gate: float
    passed: bool

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.name:<28} {self.value:.3e}  (gate {self.gate:.0e})"


def _upper(name, value, gate):
    return Check(name, float(value), gate, bool(value <= gate))


def run_checks(state, ambient, scenario):
    """Invariant and residual suite at one state; returns a list of :class:`Check`."""
    checks = [_upper("structure", verify_structure_relations(ambient).max_residual, 1e-14)]
    geom = compute_geometry(state, ambient, hamiltonian=True)
    lam = geom.lam
    checks.append(_upper("pythagorean", np.abs(np.sum(geom.n**2, axis=0) - lam**2).max(), 1e-10))
    h_norm = np.sqrt(geom.norm_sq_h)
    tangential = np.einsum("Axy,iAxy->ixy", geom.mean_curvature, geom.df)
    d_norm = np.sqrt(np.einsum("iAxy,iAxy->ixy", geom.df, geom.df))
    checks.append(_upper("normality_of_H", (np.abs(tangential) / np.maximum(h_norm * d_norm, 1e-300)).max()
                         if h_norm.max() > 0 else 0.0, 1e-10))
    checks.append(_upper("eta_bound", max(np.abs(geom.eta).max() - 1.0, 0.0), 1e-10))
    checks.append(_upper("trace_bound", max((geom.norm_sq_h / 2 - geom.norm_sq_a).max(), 0.0), 1e-12))
    beta1, beta2, *_ = beta_mu_diagnostics(geom)
    checks.append(_upper("beta_bound", max((beta1**2).max() - 1.0, (beta2**2).max() - 1.0, 0.0), 1e-10))
    e1, e2 = energy(state, geom), energy_from_lambda(state, geom)
    checks.append(_upper("energy_cross_check", abs(e1 - e2), 1e-10 * max(abs(e1), 1.0)))
    diff = np.abs(velocity_hflow_hamiltonian(geom, ambient) - velocity_hflow_gradient(geom)).max()
    if state.scheme == "spectral":
        checks.append(_upper("velocity_equivalence", diff, 1e-8))
    _, max_q = q_field(geom)
    if scenario.rho_mode == "pullback_omega2" and scenario.initial_map in GRAPH_MAPS:
        checks.append(_upper("initial_Q", max_q, 1e-12))
    if max_q <= SPECIAL_GATE:
        report = special_identity_residuals(state, geom, ambient)
        checks.append(_upper("gradient_identity", report.residuals["gradient_identity"], 1e-6))
    return checks


def _output_dir(args, scenario):
    for candidate in (args.output_dir, os.environ.get("HFLOW_OUTPUT_DIR"), scenario.output_dir, "."):
        if candidate:
            path = Path(candidate)
            try:
                path.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigurationError(f"cannot create output directory {path}: {exc.strerror}") from exc
            return path
    raise AssertionError("unreachable")


def _load(args):
    scenario = load_scenario(args.scenario)
    if args.grid is not None:
        scenario = with_grid(scenario, args.grid)
    return scenario


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_run(args):
    scenario = _load(args)
    out = _output_dir(args, scenario)
    ambient = standard_hyperkahler_torus(scenario.lattice)
    state = build_initial_surface(scenario, ambient)
    traj = integrate(state, ambient, scenario.flow_kind, scenario.integrator,
                     scenario.diagnostics_cadence, scenario.snapshot_cadence)
    (out / f"{scenario.name}.scenario").write_text(serialize_scenario(scenario), encoding="utf-8")
    write_diagnostics_csv(traj, out / f"{scenario.name}_diagnostics.csv")
    ext = SNAPSHOT_SUFFIX[scenario.snapshot_format]
    for i, snap in enumerate(traj.snapshots):
        try:
            geom = compute_geometry(snap, ambient)
        except HFlowError:
            continue
        write_snapshot(snap, geom, out / f"{scenario.name}_snap_{i:05d}{ext}",
                       scenario.snapshot_format, ambient)
    last = traj.records[-1]
    _say(args, f"{scenario.name}: {traj.status} after {traj.terminal_step} steps, t = {last.t:.6g}, "
               f"E = {last.energy:.12g}, max Q = {last.max_q:.3e}")
    if traj.message:
        _say(args, f"  {traj.message}")
    _say(args, f"  output in {out}")
    return 0


def cmd_check(args):
    scenario = _load(args)
    ambient = standard_hyperkahler_torus(scenario.lattice)
    state = build_initial_surface(scenario, ambient)
    checks = run_checks(state, ambient, scenario)
    for c in checks:
        _say(args, c.line())
    failed = [c.name for c in checks if not c.passed]
    _say(args, "all gates passed" if not failed else f"failed: {', '.join(failed)}")
    return 1 if failed else 0


def cmd_compare(args):
    scenario = _load(args)
    flows = [f.strip() for f in args.flows.split(",") if f.strip()]
    for f in flows:
        if f not in FLOW_KINDS:
            raise ConfigurationError(f"--flows: unknown flow {f!r}; expected some of {FLOW_KINDS}")
    if len(set(flows)) != len(flows) or len(flows) < 2:
        raise ConfigurationError("--flows needs at least two distinct flows")
    out = _output_dir(args, scenario)
    ambient = standard_hyperkahler_torus(scenario.lattice)
    state = build_initial_surface(scenario, ambient)
    integ = scenario.integrator
    if integ.dt_mode == "cfl":
        # one shared step so that the runs sample the same times
        dt = _cfl(float(compute_geometry(state, ambient).lam.max()), state.grid_size, integ.cfl_safety)
        integ = replace(integ, dt_mode="fixed", dt=dt)
    trajs = [integrate(state, ambient, f, integ, scenario.diagnostics_cadence, 0) for f in flows]
    path = out / f"{scenario.name}_compare.csv"
    text = joined_csv_text(trajs, [FLOW_SUFFIXES[f] for f in flows])
    try:
        path.write_bytes(text.encode("ascii"))
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path}: {exc.strerror}") from exc
    for f, tr in zip(flows, trajs):
        last = tr.records[-1]
        _say(args, f"{f}: {tr.status} at t = {last.t:.6g}, E = {last.energy:.12g}, "
                   f"int |A|^2 = {last.int_a_sq_dmu:.6g}")
    _say(args, f"  joined diagnostics in {path}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=argparse.SUPPRESS,
                        help="directory for outputs (default: $HFLOW_OUTPUT_DIR, the scenario's outputDir, or .)")
    common.add_argument("--grid", type=int, default=argparse.SUPPRESS, metavar="N",
                        help="override the scenario grid with N x N")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="print nothing on success")
    parser = argparse.ArgumentParser(prog="hflow", parents=[common],
                                     description="Simulate and verify the hyperkähler mean curvature flow of tori.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="integrate a scenario and write its outputs")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", parents=[common], help="run the invariant and residual suite at t = 0")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("compare", parents=[common], help="run several flows from the same initial data")
    p.add_argument("scenario")
    p.add_argument("--flows", default="hflow_gradient,mcf",
                   help="comma-separated flow kinds (default: hflow_gradient,mcf)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors and 0 for --help
        return int(exc.code or 0)
    for name, default in (("output_dir", None), ("grid", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"hflow: configuration error: {exc}", file=sys.stderr)
        return 2
    except HFlowError as exc:
        print(f"hflow: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
