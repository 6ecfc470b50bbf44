"""Acceptance criteria: one PASS/FAIL line per criterion.

The lines are printed as each test runs and repeated in the terminal
summary.  Tolerances are the pinned gates; timings are reported, not gated.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_state, observed_order, shear
from hflow.ambient import verify_structure_relations
from hflow.diagnostics import DiagnosticsRecord, evolution_residuals, fit_type_one
from hflow.flow import (IntegratorConfig, cfl_dt, integrate, snapshot_window, velocity_hflow_gradient,
                        velocity_hflow_hamiltonian)
from hflow.io import CSV_HEADER, diagnostics_csv_text, flat_binary_bytes, parse_flat_binary, snapshot_fields
from hflow.scenarios import ScenarioConfig, parse_scenario, serialize_scenario
from hflow.surface import compute_geometry


def record(number, title, passed, detail, started):
    verdict = "PASS" if passed else "FAIL"
    line = f"{verdict} criterion {number:>2} {title}: {detail} [{time.perf_counter() - started:.1f} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def worst_step(values, increasing):
    steps = np.diff(np.asarray(values))
    wrong = -steps if increasing else steps
    return float(max(wrong.max(initial=0.0), 0.0))


def test_criterion_01_structure(ambient):
    started = time.perf_counter()
    report = verify_structure_relations(ambient)
    exact = all(report.residuals[k] == 0.0 for k in ("squares", "compatibility", "orthogonality", "antisymmetry"))
    signs = report.wedge_squares["calibration"] * report.wedge_squares["omega2"] < 0
    product = report.product_sign == -1 and report.residuals["product"] == 0.0
    record(1, "structure suite", exact and signs and product,
           f"max residual {report.max_residual:.1e}, wedge squares "
           f"{report.wedge_squares['omega2']:+.0f}/{report.wedge_squares['calibration']:+.0f}, "
           f"I J = {report.product_sign:+d} K", started)


def test_criterion_02_pythagorean_identity(ambient):
    started = time.perf_counter()
    states = {"identity": make_state(), "shear": shear(0.05),
              "sinusoid": make_state("normal_sinusoid", epsilon1=0.1, rho_mode="constant")}
    for seed in range(5):
        states[f"fourier{seed}"] = make_state("fourier_perturbation", seed=seed, rho_mode="constant")
    worst = {}
    for name, state in states.items():
        geom = compute_geometry(state, ambient)
        worst[name] = float(np.abs((geom.n**2).sum(axis=0) - geom.lam**2).max())
    top = max(worst.values())
    record(2, "Pythagorean identity", top <= 1e-10, f"max residual {top:.1e} over {len(states)} states (gate 1e-10)",
           started)


def test_criterion_03_velocity_equivalence(ambient):
    started = time.perf_counter()

    def gap(state):
        geom = compute_geometry(state, ambient, hamiltonian=True)
        return float(np.abs(velocity_hflow_hamiltonian(geom, ambient) - velocity_hflow_gradient(geom)).max())

    spectral = gap(shear(0.05))
    diffs = [gap(shear(0.05, n=n, scheme="central4")) for n in (32, 64, 128)]
    orders = observed_order(diffs)
    passed = spectral <= 1e-8 and orders.min() >= 3.5
    record(3, "velocity equivalence", passed,
           f"spectral gap {spectral:.1e} (gate 1e-8), central4 orders {np.round(orders, 2).tolist()} (gate 3.5)",
           started)


def test_criterion_04_stationarity(ambient):
    started = time.perf_counter()
    state0 = make_state()
    geom0 = compute_geometry(state0, ambient)
    dt = cfl_dt(geom0, state0.grid_size, 0.2)
    traj = integrate(state0, ambient, "hflow_gradient",
                     IntegratorConfig(dt_mode="fixed", dt=dt, t_end=1.0, max_steps=100), diagnostics_cadence=1)
    drift = float(np.abs(traj.final_state.periodic - state0.periodic).max())
    rows = np.array([r.as_row()[1:-1] for r in traj.records])
    spread = float(np.abs(rows - rows[0]).max())
    passed = traj.terminal_step == 100 and drift <= 1e-13 and spread <= 1e-13
    record(4, "stationarity", passed,
           f"{traj.terminal_step} rk4 steps, drift {drift:.1e}, diagnostics spread {spread:.1e} (gates 1e-13)",
           started)


@pytest.fixture(scope="module")
def short_shear_run(ambient):
    started = time.perf_counter()
    traj = integrate(shear(0.05), ambient, "hflow_gradient", IntegratorConfig(cfl_safety=0.2, t_end=0.1),
                     diagnostics_cadence=1, snapshot_cadence=0)
    return traj, time.perf_counter() - started


def test_criterion_05_special_class_preserved(short_shear_run):
    traj, elapsed = short_shear_run
    started = time.perf_counter() - elapsed
    q = traj.series("max_q")
    passed = traj.status == "completed" and q[0] <= 1e-12 and q.max() <= 1e-6
    record(5, "Q stays zero along the flow", passed,
           f"{traj.status} after {traj.terminal_step} steps, Q(0) = {q[0]:.1e} (gate 1e-12), "
           f"max Q = {q.max():.1e} (gate 1e-6)", started)


def test_criterion_06_lambda_bounds(short_shear_run):
    traj, _ = short_shear_run
    started = time.perf_counter()
    max_lam, min_lam = traj.series("max_lambda"), traj.series("min_lambda")
    rise = worst_step(max_lam, increasing=False)
    excursion = float(max(min_lam[0] - min_lam.min(), max_lam.max() - max_lam[0], 0.0))
    record(6, "max lambda nonincreasing, lambda within initial bounds", rise <= 1e-8 and excursion <= 1e-6,
           f"worst per-step rise {rise:.1e} (gate 1e-8), excursion {excursion:.1e} (gate 1e-6)", started)


def test_criterion_07_energy_decay(short_shear_run):
    traj, _ = short_shear_run
    started = time.perf_counter()
    e = traj.series("energy")
    rise = worst_step(e, increasing=False)
    decrease = e[0] - e[-1]
    record(7, "energy decay", rise <= 1e-10 * e[0] and decrease > 0,
           f"E {e[0]:.10f} -> {e[-1]:.10f}, worst per-step rise {rise:.1e} (gate {1e-10 * e[0]:.1e})", started)


def test_criterion_08_evolution_residuals(ambient):
    started = time.perf_counter()
    state = shear(0.05, 0.05)
    dt0 = cfl_dt(compute_geometry(state, ambient), state.grid_size, 0.1)
    reports = []
    for k in range(3):
        # spacing of 4 steps; the middle snapshot sits at t = 8 dt0 on every level
        window = snapshot_window(state, ambient, "hflow_gradient", dt0 / 2**k, 4, offset_steps=8 * 2**k - 4)
        reports.append(evolution_residuals(window, ambient))
    series = {name: [r.residuals[name] for r in reports] for name in reports[0].residuals}
    orders = {name: observed_order(v) for name, v in series.items()}
    # orders are read to two decimals, as in a convergence table
    second_order = all(np.round(orders[n], 2).min() >= 2.0 for n in ("lambda_sq", "area_density"))
    h = series["mean_curvature_sq"]
    h_ok = bool(np.all(np.isfinite(h)) and h[0] > h[1] > h[2])
    detail = ", ".join(f"{n} orders {np.round(o, 3).tolist()}" for n, o in orders.items())
    record(8, "evolution residuals", second_order and h_ok, detail, started)


@pytest.mark.slow
def test_criterion_09_small_shear_convergence(ambient):
    started = time.perf_counter()
    traj = integrate(shear(0.02, 0.02), ambient, "hflow_gradient", IntegratorConfig(cfl_safety=0.2, t_end=1.0),
                     diagnostics_cadence=1, snapshot_cadence=0)
    mu = traj.series("min_mu")
    drop = worst_step(mu, increasing=True)
    a_sq = traj.series("int_a_sq_dmu")
    ratio = a_sq[-1] / a_sq[0]
    h_end = traj.records[-1].max_norm_h
    passed = traj.status == "completed" and drop <= 1e-8 and ratio <= 0.1 and h_end <= 1e-3
    record(9, "small-shear convergence", passed,
           f"{traj.status} after {traj.terminal_step} steps, worst min-mu drop {drop:.1e} (gate 1e-8), "
           f"int |A|^2 ratio {ratio:.1e} (gate 0.1), max |H| at end {h_end:.1e} (gate 1e-3)", started)


def test_criterion_10_type_one_fitter():
    started = time.perf_counter()
    t = np.linspace(0.0, 0.99, 200)
    fit = fit_type_one(t, 1.0 / (1.0 - t))
    record(10, "Type-I fitter oracle", 0.95 <= fit.exponent <= 1.05,
           f"exponent {fit.exponent:.6f} (gate [0.95, 1.05]), T = {fit.blowup_time:.6f}", started)


def test_criterion_11_io_contracts(ambient):
    started = time.perf_counter()
    config = ScenarioConfig(initial_map="shear_graph", epsilon1=0.05, grid_size=(16, 16),
                            integrator=IntegratorConfig(t_end=2e-3))
    state = shear(0.05, n=16)
    runs = [integrate(state, ambient, "hflow_gradient", config.integrator, diagnostics_cadence=3) for _ in range(2)]
    texts = [diagnostics_csv_text(r) for r in runs]
    lines = texts[0].splitlines()
    arity = lines[0] == ",".join(CSV_HEADER) and all(len(line.split(",")) == 14 for line in lines)
    final = runs[0].final_state
    fields = snapshot_fields(final, compute_geometry(final, ambient))
    data = flat_binary_bytes(fields)
    back = parse_flat_binary(data)
    bit_exact = all(back[k].tobytes() == np.ascontiguousarray(v, "<f8").tobytes() for k, v in fields.items())
    text = serialize_scenario(config)
    round_trip = parse_scenario(text) == config and serialize_scenario(parse_scenario(text)) == text
    snapshots = [flat_binary_bytes(snapshot_fields(r.final_state, compute_geometry(r.final_state, ambient)))
                 for r in runs]
    deterministic = texts[0] == texts[1] and snapshots[0] == snapshots[1]
    assert isinstance(runs[0].records[0], DiagnosticsRecord)
    record(11, "IO contracts", arity and bit_exact and round_trip and deterministic,
           f"csv arity {arity}, flat_binary bit-exact {bit_exact}, scenario round trip {round_trip}, "
           f"reruns identical {deterministic}", started)
