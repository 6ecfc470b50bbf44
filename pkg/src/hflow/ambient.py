"""Constant-coefficient hyperkähler linear algebra on a flat 4-torus.

Two-forms are stored as antisymmetric 4x4 matrices ``W`` with
``omega(X, Y) = X @ W @ Y``; complex structures as 4x4 matrices acting on
column vectors.  The metric is Euclidean, the lattice only fixes the periods.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError


def two_form(*terms):
    """Build the matrix of ``sum(c * dy^i ^ dy^j)`` from ``(c, i, j)`` triples (1-based)."""
    w = np.zeros((4, 4))
    for c, i, j in terms:
        w[i - 1, j - 1] += c
        w[j - 1, i - 1] -= c
    return w


OMEGA_1 = two_form((1, 1, 2), (1, 3, 4))
OMEGA_2 = two_form((1, 1, 4), (1, 2, 3))
OMEGA_3 = two_form((1, 1, 3), (-1, 2, 4))
CALIBRATION = two_form((1, 1, 3), (1, 2, 4))


def complex_structure_from_form(omega, metric=None):
    """Return the endomorphism ``C`` with ``omega(X, Y) = <C X, Y>``.

    Writing the metric as ``G`` the defining relation is ``C.T @ G = omega``,
    so ``C = -G^{-1} @ omega`` for antisymmetric ``omega``.
    """
    omega = np.asarray(omega, dtype=float)
    if metric is None:
        metric = np.eye(4)
    metric = np.asarray(metric, dtype=float)
    try:
        np.linalg.cholesky(metric)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("metric must be symmetric positive definite") from exc
    return np.linalg.solve(metric, omega.T)


def form_from_complex_structure(c, metric=None):
    """Inverse of :func:`complex_structure_from_form`."""
    if metric is None:
        metric = np.eye(4)
    return np.asarray(c, dtype=float).T @ np.asarray(metric, dtype=float)


def wedge_square(omega):
    """Coefficient of ``dy^1^dy^2^dy^3^dy^4`` in ``omega ^ omega``.

    Expanded by brute force over permutations of the four indices, which is
    deliberately independent of any Pfaffian shortcut.
    """
    omega = np.asarray(omega, dtype=float)
    total = 0.0
    for perm in itertools.permutations(range(4)):
        sign = np.linalg.det(np.eye(4)[list(perm)])
        a, b, c, d = perm
        total += sign * omega[a, b] * omega[c, d]
    # omega = 1/2 w_ab dy^a^dy^b, so omega^omega = 1/4 sum sign w_ab w_cd vol
    return float(0.25 * total)


@dataclass(frozen=True)
class AmbientSpace:
    """The flat hyperkähler torus ``R^4 / lattice`` with its parallel forms."""

    lattice: np.ndarray
    metric: np.ndarray
    complex_structures: tuple
    kahler_forms: tuple
    calibration: np.ndarray
    _lattice_inv: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def forms_stack(self):
        """The three Kähler forms as one (3, 4, 4) array."""
        return np.stack(self.kahler_forms)

    @property
    def I(self):  # noqa: E743
        return self.complex_structures[0]

    @property
    def J(self):
        return self.complex_structures[1]

    @property
    def K(self):
        return self.complex_structures[2]

    def reduce(self, points):
        """Reduce ambient points (leading axis of length 4) modulo the lattice."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(4, -1)
        coeffs = self._lattice_inv @ flat
        coeffs -= np.floor(coeffs)
        return (self.lattice @ coeffs).reshape(points.shape)

    def is_lattice_vector(self, v, tol=1e-9):
        """True when ``v`` is an integer combination of the lattice columns."""
        coeffs = self._lattice_inv @ np.asarray(v, dtype=float)
        return bool(np.all(np.abs(coeffs - np.round(coeffs)) <= tol))


def standard_hyperkahler_torus(lattice=None):
    """Flat torus with ``omega_1 = dy1^dy2 + dy3^dy4``, ``omega_2 = dy1^dy4 + dy2^dy3``,
    ``omega_3 = dy1^dy3 - dy2^dy4`` and calibration ``dy1^dy3 + dy2^dy4``.

    Raises
    ------
    ConfigurationError
        If the lattice matrix is not 4x4 or is singular.
    """
    lattice = np.eye(4) if lattice is None else np.array(lattice, dtype=float)
    if lattice.shape != (4, 4) or not np.all(np.isfinite(lattice)):
        raise ConfigurationError(f"lattice must be a finite 4x4 matrix, got shape {lattice.shape}")
    det = np.linalg.det(lattice)
    if abs(det) < 1e-12 * max(1.0, np.abs(lattice).max() ** 4):
        raise ConfigurationError("lattice matrix is singular")
    metric = np.eye(4)
    forms = tuple(w.copy() for w in (OMEGA_1, OMEGA_2, OMEGA_3))
    structures = tuple(complex_structure_from_form(w, metric) for w in forms)
    for arr in (lattice, metric, *forms, *structures):
        arr.setflags(write=False)
    calibration = CALIBRATION.copy()
    calibration.setflags(write=False)
    lattice_inv = np.linalg.inv(lattice)
    lattice_inv.setflags(write=False)
    return AmbientSpace(lattice, metric, structures, forms, calibration, lattice_inv)


def with_kahler_forms(space, forms):
    """Same lattice and calibration, complex structures re-derived from ``forms``."""
    forms = tuple(np.asarray(w, dtype=float) for w in forms)
    structures = tuple(complex_structure_from_form(w, space.metric) for w in forms)
    return AmbientSpace(space.lattice, space.metric, structures, forms,
                        space.calibration, space._lattice_inv)


@dataclass(frozen=True)
class StructureReport:
    """Outcome of :func:`verify_structure_relations`.

    ``residuals`` maps check names to max-abs residuals.  ``product_sign`` is
    ``s`` in ``I J = s K`` (0 if neither sign fits), and ``wedge_squares``
    holds the volume coefficients of ``omega_2^omega_2`` and ``zeta^zeta``.
    """

    residuals: dict
    product_sign: int
    wedge_squares: dict

    @property
    def max_residual(self):
        return max(self.residuals.values())


def verify_structure_relations(space, tol=1e-14):
    """Check the algebraic identities of the ambient structure; failures are reported, never raised.

    ``product`` is the residual of ``I J = -K``, the relation satisfied by the
    standard forms; ``orientation`` is 0 when ``omega_2`` and the calibration
    square to volume forms of opposite sign and 1 otherwise.
    """
    eye = np.eye(4)
    I, J, K = space.complex_structures
    res = {}
    res["squares"] = max(float(np.abs(c @ c + eye).max()) for c in space.complex_structures)
    res["compatibility"] = max(
        float(np.abs(form_from_complex_structure(c, space.metric) - w).max())
        for c, w in zip(space.complex_structures, space.kahler_forms)
    )
    res["orthogonality"] = max(
        float(np.abs(c.T @ space.metric @ c - space.metric).max()) for c in space.complex_structures
    )
    res["antisymmetry"] = max(
        float(np.abs(w + w.T).max()) for w in (*space.kahler_forms, space.calibration)
    )
    res["product"] = float(np.abs(I @ J + K).max())
    s2 = wedge_square(space.kahler_forms[1])
    sz = wedge_square(space.calibration)
    res["orientation"] = 0.0 if s2 * sz < 0 else 1.0

    if np.abs(I @ J + K).max() <= tol:
        sign = -1
    elif np.abs(I @ J - K).max() <= tol:
        sign = 1
    else:
        sign = 0
    return StructureReport(res, sign, {"omega2": s2, "calibration": sz})
