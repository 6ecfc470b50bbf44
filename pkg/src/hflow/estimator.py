"""Estimator-style wrapper around the run loop.

``HFlow`` follows the scikit-learn conventions: constructor arguments are
stored untouched, ``fit`` validates them and integrates the flow from the
given initial state, and fitted results end in an underscore.

>>> from hflow import HFlow, ScenarioConfig, build_initial_surface
>>> state = build_initial_surface(ScenarioConfig(grid_size=(16, 16)))
>>> model = HFlow(t_end=1e-3).fit(state)
>>> model.status_
'completed'
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .ambient import standard_hyperkahler_torus
from .diagnostics import series_analysis
from .flow import FLOW_KINDS, METHODS, IntegratorConfig, integrate
from .surface import DEGENERACY_THRESHOLD
from .validation import check_choice, check_int, check_positive, check_surface_state


class HFlow(TransformerMixin, BaseEstimator):
    """Evolve an immersed torus by the H-flow (or a comparison flow).

    Parameters
    ----------
    flow_kind : {"hflow_gradient", "hflow_hamiltonian", "mcf"}
    method : {"rk4", "euler"}
    cfl_safety : float
        Used when ``dt`` is None.
    dt : float or None
        Fixed step; None selects the CFL step.
    t_end : float
    max_steps : int
    stop_on_blowup : float
        Threshold on sup ``|A|^2``.
    stop_on_degeneracy : float
        Threshold on ``det g``.
    diagnostics_cadence, snapshot_cadence : int
    ambient : AmbientSpace or None
        Standard torus with the identity lattice when None.

    Attributes
    ----------
    initial_state_ : SurfaceState
    trajectory_ : FlowTrajectory
    final_state_ : SurfaceState
    status_ : str
    n_steps_ : int
    """

    def __init__(self, flow_kind="hflow_gradient", method="rk4", cfl_safety=0.2, dt=None, t_end=0.1,
                 max_steps=1_000_000, stop_on_blowup=1e6, stop_on_degeneracy=DEGENERACY_THRESHOLD,
                 diagnostics_cadence=10, snapshot_cadence=100, ambient=None):
        self.flow_kind = flow_kind
        self.method = method
        self.cfl_safety = cfl_safety
        self.dt = dt
        self.t_end = t_end
        self.max_steps = max_steps
        self.stop_on_blowup = stop_on_blowup
        self.stop_on_degeneracy = stop_on_degeneracy
        self.diagnostics_cadence = diagnostics_cadence
        self.snapshot_cadence = snapshot_cadence
        self.ambient = ambient

    def _integrator_config(self):
        check_choice("flow_kind", self.flow_kind, FLOW_KINDS)
        check_choice("method", self.method, METHODS)
        check_int("diagnostics_cadence", self.diagnostics_cadence, 1)
        check_int("snapshot_cadence", self.snapshot_cadence, 0)
        if self.dt is not None:
            check_positive("dt", self.dt)
        return IntegratorConfig(
            method=self.method,
            dt_mode="cfl" if self.dt is None else "fixed",
            dt=self.dt,
            cfl_safety=self.cfl_safety,
            t_end=self.t_end,
            max_steps=self.max_steps,
            stop_on_blowup=self.stop_on_blowup,
            stop_on_degeneracy=self.stop_on_degeneracy,
        ).validate()

    def _run(self, state):
        state = check_surface_state(state)
        ambient = self.ambient if self.ambient is not None else standard_hyperkahler_torus()
        return integrate(state, ambient, self.flow_kind, self._integrator_config(),
                         self.diagnostics_cadence, self.snapshot_cadence)

    def fit(self, X, y=None):
        """Integrate from the initial state ``X``; ``y`` is ignored."""
        traj = self._run(X)
        self.initial_state_ = X
        self.trajectory_ = traj
        self.final_state_ = traj.final_state
        self.status_ = traj.status
        self.n_steps_ = traj.terminal_step
        return self

    def transform(self, X):
        """Evolved state: the fitted result for the fitted ``X``, a fresh run otherwise."""
        self._check_fitted()
        if X is self.initial_state_:
            return self.final_state_
        return self._run(X).final_state

    def fit_transform(self, X, y=None):
        return self.fit(X).final_state_

    def report(self, **kwargs):
        """:func:`~hflow.diagnostics.series_analysis` of the fitted trajectory."""
        self._check_fitted()
        return series_analysis(self.trajectory_.records, blowup=self.status_ == "blowup", **kwargs)

    def _check_fitted(self):
        if not hasattr(self, "trajectory_"):
            raise NotFittedError("this HFlow instance is not fitted yet; call fit first")
