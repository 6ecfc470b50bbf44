"""Immersed tori ``f: T^2 -> T^4`` sampled on a periodic grid, and their induced geometry.

The map is stored through its lift ``f(x) = W^T x + p(x)`` on the unit square:
``W`` (shape 2x4) records the period increments and ``p`` (shape 4xN1xN2) is
periodic.  The background area form is ``rho = rho12 dx^1 ^ dx^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .derivatives import SCHEMES, differentiator
from .exceptions import ConfigurationError, ImmersionDegenerate
from .validation import check_array, check_choice, check_int

DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class SurfaceState:
    """One time slice of the discrete immersion.

    Attributes
    ----------
    periodic : ndarray, shape (4, N1, N2)
        Periodic part ``p`` of the lift.
    winding : ndarray, shape (2, 4)
        Row ``i`` is ``f(x + e_i) - f(x)``.
    rho : ndarray, shape (N1, N2)
        Positive density of the background form against ``dx^1 ^ dx^2``.
    time : float
    scheme : {"spectral", "central4"}
    """

    periodic: np.ndarray
    winding: np.ndarray
    rho: np.ndarray
    time: float = 0.0
    scheme: str = "spectral"
    rho_gradient: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        # successors made by ``advanced`` inherit rho and its gradient, so
        # the checks run once per trajectory rather than once per stage
        if self.rho_gradient is None:
            periodic = check_array("periodic", self.periodic, (4, None, None))
            n1, n2 = periodic.shape[1:]
            check_int("N1", n1, 1)
            check_int("N2", n2, 1)
            rho = check_array("rho", self.rho, (n1, n2))
            if not np.all(rho > 0):
                raise ConfigurationError("rho must be positive at every grid point")
            object.__setattr__(self, "periodic", periodic)
            object.__setattr__(self, "winding", check_array("winding", self.winding, (2, 4)))
            object.__setattr__(self, "rho", rho)
            check_choice("scheme", self.scheme, SCHEMES)
            # removing the offset makes the gradient of a constant density
            # exactly zero, so stationary states stay exactly stationary
            object.__setattr__(self, "rho_gradient", self.differentiator.gradient(rho - rho.flat[0]))

    @property
    def grid_size(self):
        return self.periodic.shape[1:]

    @property
    def spacing(self):
        n1, n2 = self.grid_size
        return 1.0 / n1, 1.0 / n2

    @property
    def differentiator(self):
        return differentiator(self.periodic.shape[1:], self.scheme)

    def coordinates(self):
        """Parameter coordinates ``(x1, x2)`` of the grid, each of shape (N1, N2)."""
        n1, n2 = self.grid_size
        return np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")

    def lift(self):
        """Values of the lift ``W^T x + p`` in R^4, shape (4, N1, N2)."""
        x1, x2 = self.coordinates()
        return (self.periodic + self.winding[0][:, None, None] * x1
                + self.winding[1][:, None, None] * x2)

    def advanced(self, periodic, dt):
        """Successor state with a new periodic part and the clock moved by ``dt``."""
        return replace(self, periodic=periodic, time=self.time + dt)


@dataclass(frozen=True)
class GeometryFields:
    """Per-grid-point geometry of an immersion.

    Index conventions: leading small axes are tensor slots, the trailing two
    axes are the grid.  ``christoffel[k, i, j]`` is ``Gamma^k_ij`` of the
    induced metric, ``second_fundamental[i, j]`` the normal vector ``A_ij``
    in R^4, ``dlambda`` the covector ``d lambda`` and ``grad_lambda`` its raised
    components.  ``form_values[a]`` is ``omega_a(d1 f, d2 f)`` and
    ``calibration_value`` the calibration on the same pair.
    """

    df: np.ndarray
    ddf: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    det_g: np.ndarray
    area_density: np.ndarray
    lam: np.ndarray
    form_values: np.ndarray
    n: np.ndarray
    eta: np.ndarray
    calibration_value: np.ndarray
    christoffel: np.ndarray
    second_fundamental: np.ndarray
    mean_curvature: np.ndarray
    norm_sq_a: np.ndarray
    norm_sq_h: np.ndarray
    dlambda: np.ndarray
    grad_lambda: np.ndarray
    hamiltonian: np.ndarray = None

    def tangent(self, components):
        """Push coordinate vector components ``(2, N1, N2)`` forward to R^4."""
        return np.einsum("ixy,iAxy->Axy", components, self.df)


def lift_partials(state, second=False):
    """``d_i f = W_i + D_i p`` with the state's derivative scheme.

    Returns ``df`` of shape (2, 4, N1, N2), or ``(df, ddf)`` when ``second``
    is true, ``ddf`` of shape (2, 2, 4, N1, N2).  The winding contributes
    nothing to second derivatives.
    """
    d = state.differentiator
    if second:
        grad, hess = d.gradient_and_hessian(state.periodic)
    else:
        grad = d.gradient(state.periodic)
    grad += state.winding[:, :, None, None]
    return (grad, hess) if second else grad


def _check_immersion(det_g, threshold):
    worst = np.unravel_index(np.argmin(det_g), det_g.shape)
    # written so that NaN also fails
    if not det_g[worst] > threshold:
        where = tuple(int(i) for i in worst)
        raise ImmersionDegenerate(
            f"det g = {det_g[worst]:.3e} <= {threshold:g} at grid point {where}",
            index=where, det_g=float(det_g[worst]))


def induced_geometry(state, df, threshold=DEGENERACY_THRESHOLD):
    """Metric ``g_ij``, its inverse, ``det g``, ``sqrt(det g)`` and ``lambda = sqrt(det g)/rho12``.

    Raises
    ------
    ImmersionDegenerate
        If ``det g <= threshold`` anywhere; the worst grid point is reported.
    """
    g = np.einsum("iAxy,jAxy->ijxy", df, df)
    det_g = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    _check_immersion(det_g, threshold)
    inv = np.empty_like(g)
    inv[0, 0] = g[1, 1] / det_g
    inv[1, 1] = g[0, 0] / det_g
    inv[0, 1] = inv[1, 0] = -g[0, 1] / det_g
    area = np.sqrt(det_g)
    return g, inv, det_g, area, area / state.rho


def pullback_fields(state, df, area_density, ambient):
    """``N_a = omega_a(d1 f, d2 f)/rho12`` and ``eta_a = omega_a(d1 f, d2 f)/sqrt(det g)``.

    Returns ``(form_values, N, eta)``, each of shape (3, N1, N2).
    """
    values = np.einsum("aAB,Axy,Bxy->axy", ambient.forms_stack, df[0], df[1])
    return values, values / state.rho, values / area_density


def curvature_fields(df, ddf, metric_inv):
    """Second fundamental form, mean curvature and their squared norms for a flat ambient.

    Returns ``(christoffel, A, H, |A|^2, |H|^2)`` where ``A_ij`` is the normal
    part of ``d_i d_j f``.
    """
    first_kind = np.einsum("ijAxy,kAxy->kijxy", ddf, df)
    christoffel = np.einsum("klxy,lijxy->kijxy", metric_inv, first_kind)
    a = ddf - np.einsum("kijxy,kAxy->ijAxy", christoffel, df)
    h = np.einsum("ijxy,ijAxy->Axy", metric_inv, a)
    inner = np.einsum("ijAxy,klAxy->ijklxy", a, a)
    norm_sq_a = np.einsum("ikxy,jlxy,ijklxy->xy", metric_inv, metric_inv, inner)
    norm_sq_h = np.einsum("Axy,Axy->xy", h, h)
    return christoffel, a, h, norm_sq_a, norm_sq_h


def lambda_differential(state, lam, christoffel):
    """``d lambda`` from the chain rule ``d_k log sqrt(det g) = Gamma^i_ki``."""
    trace = christoffel[0, :, 0] + christoffel[1, :, 1]
    return lam * (trace - state.rho_gradient / state.rho)


def hamiltonian_fields(state, n):
    """Coordinate components of the Hamiltonian fields of ``N_a``, shape (3, 2, N1, N2).

    Solves ``rho(xi_a, .) = dN_a``, i.e. ``rho12 xi^1 = D2 N_a`` and
    ``rho12 xi^2 = -D1 N_a``, with ``D`` the state's derivative scheme.
    """
    dn = state.differentiator.gradient(n)
    return np.stack([dn[1] / state.rho, -dn[0] / state.rho], axis=1)


@numba.njit(cache=True)
def _pointwise_geometry(df, ddf, rho, drho, forms, cal):
    n1, n2 = rho.shape
    metric = np.empty((2, 2, n1, n2))
    ginv = np.empty((2, 2, n1, n2))
    det_g = np.empty((n1, n2))
    area = np.empty((n1, n2))
    lam = np.empty((n1, n2))
    values = np.empty((3, n1, n2))
    n = np.empty((3, n1, n2))
    eta = np.empty((3, n1, n2))
    calv = np.empty((n1, n2))
    chris = np.empty((2, 2, 2, n1, n2))
    a = np.empty((2, 2, 4, n1, n2))
    h = np.empty((4, n1, n2))
    nsa = np.empty((n1, n2))
    nsh = np.empty((n1, n2))
    dlam = np.empty((2, n1, n2))
    glam = np.empty((2, n1, n2))
    u = np.empty(4)
    v = np.empty(4)
    gi = np.empty((2, 2))
    gam = np.empty((2, 2, 2))
    aa = np.empty((2, 2, 4))
    for x in range(n1):
        for y in range(n2):
            for c in range(4):
                u[c] = df[0, c, x, y]
                v[c] = df[1, c, x, y]
            g11 = 0.0
            g12 = 0.0
            g22 = 0.0
            for c in range(4):
                g11 += u[c] * u[c]
                g12 += u[c] * v[c]
                g22 += v[c] * v[c]
            det = g11 * g22 - g12 * g12
            metric[0, 0, x, y] = g11
            metric[0, 1, x, y] = g12
            metric[1, 0, x, y] = g12
            metric[1, 1, x, y] = g22
            gi[0, 0] = g22 / det
            gi[1, 1] = g11 / det
            gi[0, 1] = -g12 / det
            gi[1, 0] = -g12 / det
            for i in range(2):
                for j in range(2):
                    ginv[i, j, x, y] = gi[i, j]
            det_g[x, y] = det
            sq = np.sqrt(det)
            area[x, y] = sq
            lx = sq / rho[x, y]
            lam[x, y] = lx

            for f in range(3):
                w = 0.0
                for p in range(4):
                    for q in range(4):
                        w += forms[f, p, q] * u[p] * v[q]
                values[f, x, y] = w
                n[f, x, y] = w / rho[x, y]
                eta[f, x, y] = w / sq
            w = 0.0
            for p in range(4):
                for q in range(4):
                    w += cal[p, q] * u[p] * v[q]
            calv[x, y] = w / sq

            # Gamma^k_ij = g^kl <d_i d_j f, d_l f>
            for i in range(2):
                for j in range(2):
                    s0 = 0.0
                    s1 = 0.0
                    for c in range(4):
                        s0 += ddf[i, j, c, x, y] * u[c]
                        s1 += ddf[i, j, c, x, y] * v[c]
                    for k in range(2):
                        gam[k, i, j] = gi[k, 0] * s0 + gi[k, 1] * s1
                        chris[k, i, j, x, y] = gam[k, i, j]
            for i in range(2):
                for j in range(2):
                    for c in range(4):
                        val = ddf[i, j, c, x, y] - gam[0, i, j] * u[c] - gam[1, i, j] * v[c]
                        aa[i, j, c] = val
                        a[i, j, c, x, y] = val
            hh = 0.0
            for c in range(4):
                hc = 0.0
                for i in range(2):
                    for j in range(2):
                        hc += gi[i, j] * aa[i, j, c]
                h[c, x, y] = hc
                hh += hc * hc
            nsh[x, y] = hh
            s = 0.0
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        for l in range(2):
                            ip = 0.0
                            for c in range(4):
                                ip += aa[i, j, c] * aa[k, l, c]
                            s += gi[i, k] * gi[j, l] * ip
            nsa[x, y] = s

            for k in range(2):
                tr = gam[0, k, 0] + gam[1, k, 1]
                dlam[k, x, y] = lx * (tr - drho[k, x, y] / rho[x, y])
            for k in range(2):
                glam[k, x, y] = gi[k, 0] * dlam[0, x, y] + gi[k, 1] * dlam[1, x, y]
    return (metric, ginv, det_g, area, lam, values, n, eta, calv, chris, a, h, nsa, nsh,
            dlam, glam)


@numba.njit(cache=True)
def _velocity_kernel(df, ddf, rho, drho, with_lambda):
    """Lean per-point pass for the stepping loop.

    Returns ``(v, min_det_g, argmin, max_norm_sq_a, max_lambda)`` where ``v``
    is ``lambda grad(lambda) + lambda^2 H`` when ``with_lambda`` and ``H``
    otherwise.  Same formulas as :func:`_pointwise_geometry`, without
    storing the intermediate fields.
    """
    n1, n2 = rho.shape
    v = np.empty((4, n1, n2))
    min_det = np.inf
    arg = 0
    max_a = 0.0
    max_lam = 0.0
    u = np.empty(4)
    w = np.empty(4)
    gi = np.empty((2, 2))
    gam = np.empty((2, 2, 2))
    aa = np.empty((2, 2, 4))
    for x in range(n1):
        for y in range(n2):
            g11 = 0.0
            g12 = 0.0
            g22 = 0.0
            for c in range(4):
                u[c] = df[0, c, x, y]
                w[c] = df[1, c, x, y]
                g11 += u[c] * u[c]
                g12 += u[c] * w[c]
                g22 += w[c] * w[c]
            det = g11 * g22 - g12 * g12
            # a NaN determinant sticks as the minimum so it is reported
            if min_det == min_det and (det < min_det or det != det):
                min_det = det
                arg = x * n2 + y
            i00 = g22 / det
            i11 = g11 / det
            i01 = -g12 / det
            for i in range(2):
                for j in range(2):
                    s0 = 0.0
                    s1 = 0.0
                    for c in range(4):
                        s0 += ddf[i, j, c, x, y] * u[c]
                        s1 += ddf[i, j, c, x, y] * w[c]
                    gam[0, i, j] = i00 * s0 + i01 * s1
                    gam[1, i, j] = i01 * s0 + i11 * s1
            for i in range(2):
                for j in range(2):
                    for c in range(4):
                        aa[i, j, c] = ddf[i, j, c, x, y] - gam[0, i, j] * u[c] - gam[1, i, j] * w[c]
            gi[0, 0] = i00
            gi[0, 1] = i01
            gi[1, 0] = i01
            gi[1, 1] = i11
            s = 0.0
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        for l in range(2):
                            ip = 0.0
                            for c in range(4):
                                ip += aa[i, j, c] * aa[k, l, c]
                            s += gi[i, k] * gi[j, l] * ip
            if s > max_a or s != s:
                max_a = s
            lx = np.sqrt(det) / rho[x, y]
            if lx > max_lam:
                max_lam = lx
            if with_lambda:
                d0 = lx * (gam[0, 0, 0] + gam[1, 0, 1] - drho[0, x, y] / rho[x, y])
                d1 = lx * (gam[0, 1, 0] + gam[1, 1, 1] - drho[1, x, y] / rho[x, y])
                up0 = lx * (i00 * d0 + i01 * d1)
                up1 = lx * (i01 * d0 + i11 * d1)
                l2 = lx * lx
                for c in range(4):
                    hc = i00 * aa[0, 0, c] + 2.0 * i01 * aa[0, 1, c] + i11 * aa[1, 1, c]
                    v[c, x, y] = up0 * u[c] + up1 * w[c] + l2 * hc
            else:
                for c in range(4):
                    v[c, x, y] = i00 * aa[0, 0, c] + 2.0 * i01 * aa[0, 1, c] + i11 * aa[1, 1, c]
    return v, min_det, arg, max_a, max_lam


def compute_geometry(state, ambient, hamiltonian=False, threshold=DEGENERACY_THRESHOLD):
    """Run the whole per-point pipeline and bundle the result.

    The per-point algebra is one compiled loop over the grid; it computes the
    same quantities as :func:`induced_geometry`, :func:`pullback_fields`,
    :func:`curvature_fields` and :func:`lambda_differential`.

    Raises
    ------
    ImmersionDegenerate
        If ``det g <= threshold`` anywhere.
    """
    df, ddf = lift_partials(state, second=True)
    out = _pointwise_geometry(df, ddf, state.rho, state.rho_gradient,
                              ambient.forms_stack, ambient.calibration)
    (g, ginv, det_g, area, lam, values, n, eta, cal, christoffel, a, h,
     norm_sq_a, norm_sq_h, dlam, grad_lam) = out
    _check_immersion(det_g, threshold)
    xi = hamiltonian_fields(state, n) if hamiltonian else None
    return GeometryFields(
        df=df, ddf=ddf, metric=g, metric_inv=ginv, det_g=det_g, area_density=area, lam=lam,
        form_values=values, n=n, eta=eta, calibration_value=cal,
        christoffel=christoffel, second_fundamental=a, mean_curvature=h,
        norm_sq_a=norm_sq_a, norm_sq_h=norm_sq_h, dlambda=dlam, grad_lambda=grad_lam,
        hamiltonian=xi,
    )


def orthonormal_coefficients(metric):
    """Gram-Schmidt coefficients ``E`` with ``e_a = E[a, i] d_i f``; ``e_1`` is along ``d_1 f``.

    Shape (2, 2, N1, N2) for grid input or (2, 2) for a single point.
    """
    g11, g12, g22 = metric[0, 0], metric[0, 1], metric[1, 1]
    det_g = g11 * g22 - g12 * g12
    s1 = np.sqrt(g11)
    s2 = np.sqrt(det_g / g11)
    zero = np.zeros_like(g11)
    return np.array([[1.0 / s1, zero], [-g12 / (g11 * s2), 1.0 / s2]])


@dataclass(frozen=True)
class AdaptedFrame:
    """Orthonormal frame ``(e1, e2, nu1 = K e1, nu2 = K e2)`` at one grid point.

    ``matrices[c]`` is ``omega_c(f_a, f_b)`` in this frame for c = I, J, K, and
    ``expected`` the closed forms in terms of ``eta1`` they are compared with.
    """

    point: tuple
    e: np.ndarray
    nu: np.ndarray
    eta1: float
    matrices: dict
    expected: dict
    residuals: dict


def frame_closed_forms(eta1):
    """Structure matrices ``omega(f_a, f_b)`` in the adapted frame of a Lagrangian point.

    Read as component matrices of the forms (not of the operators) these
    satisfy ``I = J K``, which is the operator relation ``I J = -K`` transposed.
    """
    c = np.sqrt(max(0.0, 1.0 - eta1 * eta1))
    i_mat = np.array([[0, eta1, 0, c], [-eta1, 0, -c, 0], [0, c, 0, -eta1], [-c, 0, eta1, 0]])
    j_mat = np.array([[0, c, 0, -eta1], [-c, 0, eta1, 0], [0, -eta1, 0, -c], [eta1, 0, c, 0]])
    k_mat = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    return {"I": i_mat, "J": j_mat, "K": k_mat}


def adapted_frame(state, point, geometry, ambient):
    """Adapted frame at grid index ``point`` and its residuals against :func:`frame_closed_forms`."""
    i1, i2 = point
    df = geometry.df[:, :, i1, i2]
    coeff = orthonormal_coefficients(geometry.metric[:, :, i1, i2])
    e = coeff @ df
    nu = e @ ambient.K.T
    basis = np.vstack([e, nu])
    eta1 = float(geometry.eta[0, i1, i2])
    matrices = {name: basis @ w @ basis.T for name, w in zip("IJK", ambient.kahler_forms)}
    expected = frame_closed_forms(eta1)
    residuals = {name: float(np.abs(matrices[name] - expected[name]).max()) for name in "IJK"}
    residuals["orthonormality"] = float(np.abs(basis @ basis.T - np.eye(4)).max())
    return AdaptedFrame((i1, i2), e, nu, eta1, matrices, expected, residuals)


def velocity_summary(state, with_lambda=True, threshold=DEGENERACY_THRESHOLD):
    """Velocity of the gradient H-flow (or of mean curvature flow) with the step-control scalars.

    Returns ``(v, max_norm_sq_a, max_lambda)``; ``v`` has shape (4, N1, N2).

    Raises
    ------
    ImmersionDegenerate
        If ``det g <= threshold`` anywhere.
    """
    df, ddf = lift_partials(state, second=True)
    v, min_det, arg, max_a, max_lam = _velocity_kernel(df, ddf, state.rho, state.rho_gradient,
                                                       with_lambda)
    if not min_det > threshold:
        where = tuple(int(i) for i in np.unravel_index(arg, state.grid_size))
        raise ImmersionDegenerate(
            f"det g = {min_det:.3e} <= {threshold:g} at grid point {where}",
            index=where, det_g=float(min_det))
    return v, max_a, max_lam
