"""Flow velocities, explicit time stepping and the integration loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import compute_record
from .exceptions import BlowupDetected, ConfigurationError, ImmersionDegenerate
from .surface import DEGENERACY_THRESHOLD, compute_geometry, velocity_summary

logger = logging.getLogger(__name__)

FLOW_KINDS = ("hflow_gradient", "hflow_hamiltonian", "mcf")
METHODS = ("euler", "rk4")


@dataclass(frozen=True)
class VelocityField:
    """Ambient velocity ``df/dt`` at every grid point, shape (4, N1, N2)."""

    values: np.ndarray
    kind: str


def velocity_hflow_gradient(geometry):
    """``lambda grad(lambda) + lambda^2 H``; the tangential part is kept."""
    lam = geometry.lam
    return lam * geometry.tangent(geometry.grad_lambda) + lam * lam * geometry.mean_curvature


def velocity_hflow_hamiltonian(geometry, ambient):
    """``I f_*(xi_1) + J f_*(xi_2) + K f_*(xi_3)`` from the Hamiltonian fields of ``N_a``."""
    if geometry.hamiltonian is None:
        raise ValueError("geometry was computed without Hamiltonian fields")
    v = np.zeros_like(geometry.mean_curvature)
    for structure, xi in zip(ambient.complex_structures, geometry.hamiltonian):
        v += np.einsum("AB,Bxy->Axy", structure, geometry.tangent(xi))
    return v


def velocity_mcf(geometry):
    """Mean curvature flow, ``df/dt = H``."""
    return geometry.mean_curvature.copy()


def evaluate_velocity(state, ambient, kind, geometry=None, threshold=DEGENERACY_THRESHOLD):
    """Velocity of flow ``kind`` at ``state``; reuses ``geometry`` when given.

    Raises
    ------
    ImmersionDegenerate
        Propagated from the geometry pipeline.
    BlowupDetected
        If the velocity is not finite everywhere.
    """
    if kind not in FLOW_KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")
    need_xi = kind == "hflow_hamiltonian"
    if geometry is None or (need_xi and geometry.hamiltonian is None):
        geometry = compute_geometry(state, ambient, hamiltonian=need_xi, threshold=threshold)
    if kind == "hflow_gradient":
        v = velocity_hflow_gradient(geometry)
    elif kind == "hflow_hamiltonian":
        v = velocity_hflow_hamiltonian(geometry, ambient)
    else:
        v = velocity_mcf(geometry)
    if not np.all(np.isfinite(v)):
        raise BlowupDetected(f"non-finite {kind} velocity at t = {state.time:g}")
    return VelocityField(v, kind)


def _cfl(max_lambda, grid_size, safety):
    h = 1.0 / max(grid_size)
    return safety * h * h / (4.0 * max(max_lambda * max_lambda, 1.0))


def cfl_dt(geometry, grid_size, safety):
    """Explicit step bound ``safety * min(h)^2 / (4 max(lambda^2, 1))``."""
    return _cfl(float(np.max(geometry.lam)), grid_size, safety)


@dataclass(frozen=True)
class _Rate:
    # velocity plus the scalars the run loop needs for step control
    values: np.ndarray
    max_norm_sq_a: float
    max_lambda: float


def _rate(state, ambient, kind, threshold, geometry=None):
    if kind == "hflow_hamiltonian" or geometry is not None:
        if geometry is None:
            geometry = compute_geometry(state, ambient, hamiltonian=True, threshold=threshold)
        v = evaluate_velocity(state, ambient, kind, geometry, threshold).values
        return _Rate(v, float(geometry.norm_sq_a.max()), float(geometry.lam.max()))
    if kind not in FLOW_KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")
    v, max_a, max_lam = velocity_summary(state, kind == "hflow_gradient", threshold)
    if not np.all(np.isfinite(v)):
        raise BlowupDetected(f"non-finite {kind} velocity at t = {state.time:g}")
    return _Rate(v, max_a, max_lam)


def _advance(state, ambient, kind, dt, method, k1, threshold):
    p = state.periodic
    if method == "euler":
        return state.advanced(p + dt * k1, dt)
    if method != "rk4":
        raise ConfigurationError(f"unknown integration method {method!r}; expected one of {METHODS}")
    half = 0.5 * dt
    k2 = _rate(state.advanced(p + half * k1, half), ambient, kind, threshold).values
    k3 = _rate(state.advanced(p + half * k2, half), ambient, kind, threshold).values
    k4 = _rate(state.advanced(p + dt * k3, dt), ambient, kind, threshold).values
    return state.advanced(p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), dt)


def step(state, ambient, kind, dt, method="rk4", geometry=None, threshold=DEGENERACY_THRESHOLD):
    """Advance the periodic part by one explicit step of size ``dt``.

    ``euler`` is ``p + dt v``; ``rk4`` is the classical four-stage scheme
    with the geometry re-derived at every stage.  ``geometry`` of ``state``
    may be passed to reuse it for the first stage.  Winding and ``rho`` are
    carried over unchanged.

    Raises
    ------
    ImmersionDegenerate, BlowupDetected
        From any stage evaluation.
    """
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt!r}")
    if method not in METHODS:
        raise ConfigurationError(f"unknown integration method {method!r}; expected one of {METHODS}")
    k1 = _rate(state, ambient, kind, threshold, geometry).values
    return _advance(state, ambient, kind, dt, method, k1, threshold)


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping controls.

    ``dt_mode`` is ``"cfl"`` (step from :func:`cfl_dt` with ``cfl_safety``,
    re-evaluated every step) or ``"fixed"`` (constant ``dt``).
    """

    method: str = "rk4"
    dt_mode: str = "cfl"
    dt: float = None
    cfl_safety: float = 0.2
    t_end: float = 0.1
    max_steps: int = 1_000_000
    stop_on_blowup: float = 1e6
    stop_on_degeneracy: float = DEGENERACY_THRESHOLD

    def validate(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"integrator.method must be one of {METHODS}, got {self.method!r}")
        if self.dt_mode not in ("cfl", "fixed"):
            raise ConfigurationError(f"integrator.dt_mode must be 'cfl' or 'fixed', got {self.dt_mode!r}")
        if self.dt_mode == "fixed" and not (self.dt is not None and self.dt > 0):
            raise ConfigurationError("integrator.dt must be positive in fixed mode")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigurationError(f"integrator.cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.t_end > 0:
            raise ConfigurationError(f"integrator.t_end must be positive, got {self.t_end}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ConfigurationError(f"integrator.max_steps must be a positive integer, got {self.max_steps}")
        if not self.stop_on_blowup > 0:
            raise ConfigurationError("integrator.stop_on_blowup must be positive")
        if not self.stop_on_degeneracy > 0:
            raise ConfigurationError("integrator.stop_on_degeneracy must be positive")
        return self


@dataclass
class FlowTrajectory:
    """Diagnostics series and retained snapshots of one run.

    ``status`` is one of ``completed``, ``blowup``, ``degenerate`` or
    ``step-limit``; ``terminal_step`` is the step index at which the run stopped.
    """

    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    terminal_step: int = 0
    final_state: object = None
    kind: str = "hflow_gradient"

    def series(self, name):
        return np.array([getattr(r, name) for r in self.records])


def integrate(state, ambient, kind, config, diagnostics_cadence=10, snapshot_cadence=100,
              callback=None):
    """Integrate from ``state`` until ``t_end``, ``max_steps``, blow-up or degeneracy.

    A record is taken every ``diagnostics_cadence`` steps and always at the
    final state; snapshots every ``snapshot_cadence`` steps (0 disables
    them) plus the final state.  Errors raised while stepping end the run
    with the matching status instead of propagating.
    """
    config.validate()
    if kind not in FLOW_KINDS:
        raise ConfigurationError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")
    traj = FlowTrajectory(kind=kind)
    threshold = config.stop_on_degeneracy
    n_step = 0
    dt_prev = 0.0
    t_stop = config.t_end * (1.0 - 1e-12)

    def finish(status, message=""):
        traj.status = status
        traj.message = message
        traj.terminal_step = n_step
        traj.final_state = state
        if not traj.snapshots or traj.snapshots[-1] is not state:
            traj.snapshots.append(state)
        if message:
            logger.info("run stopped at step %d (t=%g): %s", n_step, state.time, message)
        return traj

    try:
        rate = _rate(state, ambient, kind, threshold)
        while True:
            done = state.time >= t_stop
            blown = not np.isfinite(rate.max_norm_sq_a) or rate.max_norm_sq_a > config.stop_on_blowup
            if done or blown or n_step % diagnostics_cadence == 0 or n_step >= config.max_steps:
                geom = compute_geometry(state, ambient, threshold=threshold)
                rec = compute_record(state, geom, dt_prev)
                traj.records.append(rec)
                if callback is not None:
                    callback(rec)
            if snapshot_cadence and n_step % snapshot_cadence == 0:
                traj.snapshots.append(state)
            if blown:
                return finish("blowup", f"sup |A|^2 = {rate.max_norm_sq_a:.6g} exceeded "
                                        f"{config.stop_on_blowup:g} at step {n_step}")
            if done:
                return finish("completed")
            if n_step >= config.max_steps:
                return finish("step-limit", f"reached max_steps = {config.max_steps}")

            if config.dt_mode == "fixed":
                dt = config.dt
            else:
                dt = _cfl(rate.max_lambda, state.grid_size, config.cfl_safety)
            dt = min(dt, config.t_end - state.time)
            state = _advance(state, ambient, kind, dt, config.method, rate.values, threshold)
            n_step += 1
            dt_prev = dt
            rate = _rate(state, ambient, kind, threshold)
    except ImmersionDegenerate as exc:
        return finish("degenerate", str(exc))
    except BlowupDetected as exc:
        return finish("blowup", str(exc))

def snapshot_window(state, ambient, kind, dt, spacing_steps, offset_steps=0, method="rk4"):
    """Three states ``spacing_steps`` fixed steps apart, after ``offset_steps`` initial steps.

    Used for time-difference checks of the evolution laws, where equal
    spacing must hold exactly in step counts.
    """
    if spacing_steps < 1 or offset_steps < 0:
        raise ConfigurationError("spacing_steps must be >= 1 and offset_steps >= 0")
    window = []
    for n in range(offset_steps + 2 * spacing_steps + 1):
        if n >= offset_steps and (n - offset_steps) % spacing_steps == 0:
            window.append(state)
        if n < offset_steps + 2 * spacing_steps:
            state = step(state, ambient, kind, dt, method)
    # clocks are reset from step counts so the spacing is exact
    t0 = window[0].time
    return [s.advanced(s.periodic, 0.0) if i == 0 else
            replace(s, time=t0 + i * spacing_steps * dt) for i, s in enumerate(window)]


def run_flow(scenario, ambient=None, callback=None):
    """Build the initial state of ``scenario`` and integrate it.

    Configuration errors are raised before any stepping; everything after
    that is reported through the trajectory status.
    """
    from .ambient import standard_hyperkahler_torus
    from .scenarios import build_initial_surface

    scenario.validate()
    if ambient is None:
        ambient = standard_hyperkahler_torus(scenario.lattice)
    state = build_initial_surface(scenario, ambient)
    return integrate(state, ambient, scenario.flow_kind, scenario.integrator,
                     scenario.diagnostics_cadence, scenario.snapshot_cadence, callback)
