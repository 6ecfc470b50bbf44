"""Hyperkähler mean curvature flow of tori in a flat 4-torus."""

from .ambient import (AmbientSpace, StructureReport, complex_structure_from_form,
                      standard_hyperkahler_torus, verify_structure_relations)
from .diagnostics import (DiagnosticsRecord, ResidualReport, SeriesReport, beta_mu_diagnostics,
                          compute_record, energy, evolution_residuals, fit_type_one, q_field,
                          series_analysis, special_identity_residuals)
from .estimator import HFlow
from .exceptions import BlowupDetected, ConfigurationError, HFlowError, ImmersionDegenerate, NotSpecial
from .flow import (FlowTrajectory, IntegratorConfig, VelocityField, cfl_dt, evaluate_velocity, integrate,
                   run_flow, step, velocity_hflow_gradient, velocity_hflow_hamiltonian, velocity_mcf)
from .io import read_diagnostics_csv, read_flat_binary, write_diagnostics_csv, write_snapshot
from .scenarios import ScenarioConfig, build_initial_surface, parse_scenario, serialize_scenario
from .surface import (GeometryFields, SurfaceState, adapted_frame, compute_geometry, curvature_fields,
                      hamiltonian_fields, induced_geometry, lift_partials, pullback_fields)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
