from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_state, observed_order, shear, with_rho
from hflow.diagnostics import (DiagnosticsRecord, ResidualReport, beta_mu_diagnostics, compute_record,
                               energy, energy_from_lambda, evolution_residuals, fit_type_one,
                               monotone_verdict, q_field, series_analysis, special_identity_residuals)
from hflow.exceptions import ConfigurationError, NotSpecial
from hflow.flow import cfl_dt, snapshot_window
from hflow.surface import compute_geometry


def test_identity_graph_energy(identity_state, ambient):
    geom = compute_geometry(identity_state, ambient)
    assert energy(identity_state, geom) == pytest.approx(2.0, abs=1e-14)
    assert energy_from_lambda(identity_state, geom) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("initial_map", ["shear_graph", "normal_sinusoid", "fourier_perturbation"])
def test_energy_routes_agree(ambient, initial_map):
    state = make_state(initial_map, n=32, epsilon1=0.05, epsilon2=0.03, seed=2, rho_mode="constant",
                       rho_constant=1.3)
    geom = compute_geometry(state, ambient)
    e1, e2 = energy(state, geom), energy_from_lambda(state, geom)
    assert abs(e1 - e2) <= 1e-10 * e1


def test_q_examples(identity_state, ambient):
    q, max_q = q_field(compute_geometry(identity_state, ambient))
    assert max_q == 0.0
    _, max_q = q_field(compute_geometry(shear(0.05, 0.04), ambient))
    assert max_q <= 1e-12
    q, _ = q_field(compute_geometry(with_rho(identity_state, 1.0), ambient))
    np.testing.assert_allclose(q, 0.25, atol=1e-15)


def test_special_identity_on_identity_and_shear(identity_state, ambient):
    report = special_identity_residuals(identity_state, compute_geometry(identity_state, ambient), ambient)
    assert report.max_residual <= 1e-12
    state = shear(0.05)
    report = special_identity_residuals(state, compute_geometry(state, ambient), ambient)
    assert report.residuals["gradient_identity"] <= 1e-6
    assert report.grid_size == (64, 64) and report.scheme == "spectral"


def test_special_identity_requires_special_state(identity_state, ambient):
    state = with_rho(identity_state, 1.0)
    with pytest.raises(NotSpecial) as info:
        special_identity_residuals(state, compute_geometry(state, ambient), ambient)
    assert info.value.max_q == pytest.approx(0.25)


def test_gradient_identity_fails_off_the_special_class(ambient):
    # the identity only holds on the special class: with the gate opened it is visibly violated
    state = make_state("normal_sinusoid", epsilon1=0.1, rho_mode="constant", rho_constant=1.0)
    report = special_identity_residuals(state, compute_geometry(state, ambient), ambient, gate=np.inf)
    assert report.residuals["gradient_identity"] > 1e-3


def test_beta_examples(identity_state, ambient):
    beta1, beta2, *_ = beta_mu_diagnostics(compute_geometry(identity_state, ambient))
    np.testing.assert_allclose(beta1, 1.0, atol=1e-15)
    np.testing.assert_allclose(beta2, 1.0, atol=1e-15)
    eps = 0.02
    _, _, min_b1, min_b2, min_mu = beta_mu_diagnostics(compute_geometry(shear(eps), ambient))
    assert min_b1 > 1 - eps and min_b2 > 1 - eps
    assert min_mu == pytest.approx(min_b1 + min_b2, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_beta_calibration_bound(ambient, seed):
    state = make_state("fourier_perturbation", n=16, seed=seed, fourier_amplitude=0.05,
                       rho_mode="constant")
    beta1, beta2, *_ = beta_mu_diagnostics(compute_geometry(state, ambient))
    assert (beta1**2).max() <= 1 + 1e-10
    assert (beta2**2).max() <= 1 + 1e-10


def test_record_fields(identity_state, ambient):
    rec = compute_record(identity_state, compute_geometry(identity_state, ambient), 0.5)
    assert isinstance(rec, DiagnosticsRecord)
    assert rec.total_area == pytest.approx(2.0)
    assert rec.min_det_g == pytest.approx(4.0)
    assert rec.dt_used == 0.5
    assert len(rec.as_row()) == 14


def test_residual_report_rejects_negative_values():
    with pytest.raises(ValueError):
        ResidualReport({"x": -1.0}, (8, 8), "spectral")


def test_identity_trajectory_residuals_vanish(identity_state, ambient):
    window = snapshot_window(identity_state, ambient, "hflow_gradient", 1e-5, 2)
    report = evolution_residuals(window, ambient, include_second_fundamental=True)
    assert report.max_residual <= 1e-13
    assert report.refinement == (1 / 64, 2e-5)


def test_evolution_residuals_need_equal_spacing(identity_state, ambient):
    window = snapshot_window(identity_state, ambient, "hflow_gradient", 1e-5, 1)
    window[2] = replace(window[2], time=window[2].time * 1.5)
    with pytest.raises(ConfigurationError, match="equally spaced"):
        evolution_residuals(window, ambient)
    with pytest.raises(ConfigurationError):
        evolution_residuals(window[:2], ambient)
    coarse = snapshot_window(make_state(n=32), ambient, "hflow_gradient", 1e-5, 1)
    with pytest.raises(ConfigurationError, match="N >= 64"):
        evolution_residuals(coarse, ambient, include_second_fundamental=True)


def test_evolution_residuals_converge_at_second_order(ambient):
    state = shear(0.05, 0.05, n=32)
    dt0 = cfl_dt(compute_geometry(state, ambient), (32, 32), 0.1)
    reports = []
    for k in range(3):
        dt = dt0 / 2**k
        window = snapshot_window(state, ambient, "hflow_gradient", dt, 4, offset_steps=4 * 2**k)
        reports.append(evolution_residuals(window, ambient))
    for name in ("lambda_sq", "area_density", "mean_curvature_sq"):
        errs = [r.residuals[name] for r in reports]
        assert observed_order(errs).min() >= 1.9, (name, errs)


def test_monotone_verdicts():
    ok = monotone_verdict("e", [3, 2, 2, 1], increasing=False, tolerance=0.0)
    assert ok.passed and ok.worst_violation == 0.0
    bad = monotone_verdict("e", [3, 2, 2.5, 1], increasing=False, tolerance=0.1)
    assert not bad.passed and bad.worst_violation == pytest.approx(0.5)
    assert monotone_verdict("m", [1, 2, 1.99], increasing=True, tolerance=0.02).passed


def synthetic_records(t, **series):
    base = dict(energy=2.0, min_lambda=1.0, max_lambda=1.0, max_q=0.0, max_norm_sq_a=1.0, max_norm_h=0.0,
                int_a_sq_dmu=1.0, total_area=2.0, min_beta1=1.0, min_beta2=1.0, min_mu=2.0, min_det_g=4.0,
                dt_used=0.0)
    out = []
    for i, ti in enumerate(t):
        values = dict(base, t=float(ti))
        values.update({k: float(v[i]) for k, v in series.items()})
        out.append(DiagnosticsRecord(**values))
    return out


def test_type_one_fit_recovers_unit_rate():
    t = np.linspace(0, 0.99, 200)
    fit = fit_type_one(t, 1 / (1 - t))
    assert 0.95 <= fit.exponent <= 1.05
    assert fit.blowup_time == pytest.approx(1.0, abs=1e-3)


def test_type_one_fit_detects_faster_rate():
    t = np.linspace(0, 0.99, 200)
    assert fit_type_one(t, (1 - t) ** -2).exponent == pytest.approx(2.0, abs=0.05)


def test_series_analysis_on_constant_series():
    report = series_analysis(synthetic_records(np.linspace(0, 1, 12)))
    assert report.passed and report.special
    assert all(v.worst_violation == 0.0 for v in report.verdicts.values())
    assert report.a_sq_ratio == 1.0


def test_series_analysis_flags_energy_increase():
    t = np.linspace(0, 1, 12)
    energy_series = 2 - 0.1 * t
    energy_series[6] += 0.05
    report = series_analysis(synthetic_records(t, energy=energy_series))
    assert not report.verdicts["energy"].passed
    assert not report.passed


def test_series_analysis_needs_ten_records():
    with pytest.raises(ConfigurationError):
        series_analysis(synthetic_records(np.linspace(0, 1, 9)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_series_verdicts_invariant_under_time_reindexing(scale, shift):
    t = np.linspace(0, 0.9, 40)
    rng = np.random.default_rng(4)
    series = dict(energy=2 - t + 1e-3 * rng.standard_normal(t.size), max_lambda=1.1 - 0.1 * t,
                  min_mu=1.9 + 0.1 * t, int_a_sq_dmu=np.exp(-t))
    a = series_analysis(synthetic_records(t, **series))
    b = series_analysis(synthetic_records(scale * t + shift, **series))
    assert a.verdicts == b.verdicts
    assert a.a_sq_ratio == b.a_sq_ratio
    blow = dict(max_norm_sq_a=1 / (1 - t))
    fa = series_analysis(synthetic_records(t, **blow), blowup=True).type_one
    fb = series_analysis(synthetic_records(scale * t + shift, **blow), blowup=True).type_one
    assert fb.exponent == pytest.approx(fa.exponent, abs=1e-4)
