"""Scalar diagnostics, pointwise identities and trajectory-level verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy import optimize

from .exceptions import ConfigurationError, NotSpecial
from .surface import compute_geometry, orthonormal_coefficients

SPECIAL_GATE = 1e-6
MONOTONE_RTOL = 1e-10


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time sample of the scalar diagnostics."""

    t: float
    energy: float
    min_lambda: float
    max_lambda: float
    max_q: float
    max_norm_sq_a: float
    max_norm_h: float
    int_a_sq_dmu: float
    total_area: float
    min_beta1: float
    min_beta2: float
    min_mu: float
    min_det_g: float
    dt_used: float

    def as_row(self):
        return tuple(getattr(self, f.name) for f in fields(self))


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))


def _cell(state):
    h1, h2 = state.spacing
    return h1 * h2


def energy(state, geometry):
    """``E = sum_a int N_a^2 rho`` by the rectangle rule on the unit square."""
    return float(np.sum(geometry.n**2 * state.rho) * _cell(state))


def energy_from_lambda(state, geometry):
    """The same energy computed as ``int lambda^2 rho``."""
    return float(np.sum(geometry.lam**2 * state.rho) * _cell(state))


def q_field(geometry):
    """Pointwise ``Q = (eta_2 - 1/lambda)^2 + eta_3^2`` and its maximum.

    ``Q`` vanishes exactly on maps with ``f*(omega_2 + i omega_3) = rho``.
    """
    q = (geometry.eta[1] - 1.0 / geometry.lam) ** 2 + geometry.eta[2] ** 2
    return q, float(q.max())


def beta_mu_diagnostics(geometry):
    """``beta_1 = eta_2``, ``beta_2 = zeta(d1 f, d2 f)/sqrt(det g)`` and ``mu = beta_1 + beta_2``.

    Returns ``(beta1, beta2, min_beta1, min_beta2, min_mu)``.
    """
    beta1 = geometry.eta[1]
    beta2 = geometry.calibration_value
    return beta1, beta2, float(beta1.min()), float(beta2.min()), float((beta1 + beta2).min())


def compute_record(state, geometry, dt_used=0.0):
    """Collect the scalar diagnostics of one state."""
    cell = _cell(state)
    _, max_q = q_field(geometry)
    _, _, min_b1, min_b2, min_mu = beta_mu_diagnostics(geometry)
    return DiagnosticsRecord(
        t=float(state.time),
        energy=energy(state, geometry),
        min_lambda=float(geometry.lam.min()),
        max_lambda=float(geometry.lam.max()),
        max_q=max_q,
        max_norm_sq_a=float(geometry.norm_sq_a.max()),
        max_norm_h=float(np.sqrt(geometry.norm_sq_h.max())),
        int_a_sq_dmu=float(np.sum(geometry.norm_sq_a * geometry.area_density) * cell),
        total_area=float(np.sum(geometry.area_density) * cell),
        min_beta1=min_b1,
        min_beta2=min_b2,
        min_mu=min_mu,
        min_det_g=float(geometry.det_g.min()),
        dt_used=float(dt_used),
    )


@dataclass(frozen=True)
class ResidualReport:
    """Named sup-norm residuals of one check.

    ``refinement`` holds the ``(h, dt)`` pair (or spacing) the residuals were
    evaluated at, so several reports can be combined into an order estimate.
    """

    residuals: dict
    grid_size: tuple
    scheme: str
    refinement: tuple = ()

    def __post_init__(self):
        for name, value in self.residuals.items():
            if not value >= 0:
                raise ValueError(f"residual {name!r} must be nonnegative, got {value!r}")

    @property
    def max_residual(self):
        return max(self.residuals.values())


def special_identity_residuals(state, geometry, ambient, gate=SPECIAL_GATE):
    """Residuals of ``d lambda(e_k) = lambda^2 eta_1 <K e_k, H>`` and ``sum N_a^2 = lambda^2``.

    ``(e_1, e_2)`` is the Gram-Schmidt frame of ``(d1 f, d2 f)`` at every point.

    Raises
    ------
    NotSpecial
        If ``max Q`` exceeds ``gate``; the frame identity only holds on the
        special class.
    """
    _, max_q = q_field(geometry)
    if max_q > gate:
        raise NotSpecial(f"max Q = {max_q:.3e} exceeds the special-class gate {gate:g}", max_q=max_q)
    coeff = orthonormal_coefficients(geometry.metric)
    e = np.einsum("aixy,iAxy->aAxy", coeff, geometry.df)
    nu = np.einsum("AB,aBxy->aAxy", ambient.K, e)
    dlam_e = np.einsum("aixy,ixy->axy", coeff, geometry.dlambda)
    h_nu = np.einsum("aAxy,Axy->axy", nu, geometry.mean_curvature)
    lam = geometry.lam
    gradient_identity = dlam_e - lam * lam * geometry.eta[0] * h_nu
    pythagoras = np.sum(geometry.n**2, axis=0) - lam * lam
    return ResidualReport(
        {"gradient_identity": float(np.abs(gradient_identity).max()),
         "pythagorean": float(np.abs(pythagoras).max())},
        tuple(state.grid_size), state.scheme, (max(state.spacing),))


def laplace_beltrami(u, geometry, diff):
    """``(1/sqrt g) d_i (sqrt g g^ij d_j u)`` with the grid derivative operator ``diff``."""
    # the offset is removed so that constants map to exactly zero
    du = diff.gradient(u - u.flat[0])
    flux = geometry.area_density * np.einsum("ijxy,jxy->ixy", geometry.metric_inv, du)
    return (diff.d1(flux[0]) + diff.d2(flux[1])) / geometry.area_density


def _covariant_one_form(alpha, geometry, diff):
    # nabla_k alpha_l = d_k alpha_l - Gamma^m_kl alpha_m, returned as [k, l]
    d_alpha = np.stack([diff.gradient(alpha[0]), diff.gradient(alpha[1])], axis=1)
    return d_alpha - np.einsum("mklxy,mxy->klxy", geometry.christoffel, alpha)


def _mean_curvature_rhs(geometry, ambient, diff):
    """Flat-ambient right side of the ``|H|^2`` evolution on the special class.

    Normal components are taken in the frame ``nu_i = K e_i``.  Because ``K``
    is parallel and swaps tangent and normal bundles there, ``H_i`` is the
    1-form ``alpha(e_i)`` with ``alpha_k = <H, K d_k f>``, the normal
    connection becomes the Levi-Civita connection on ``alpha``, and
    ``h_ilm = c(e_i, e_l, e_m)`` with ``c_ijk = <K d_i f, d_j d_k f>``.
    """
    lam = geometry.lam
    eta1 = geometry.eta[0]
    ginv = geometry.metric_inv
    k_df = np.einsum("AB,iBxy->iAxy", ambient.K, geometry.df)
    alpha = np.einsum("Axy,kAxy->kxy", geometry.mean_curvature, k_df)
    c = np.einsum("iAxy,jkAxy->ijkxy", k_df, geometry.ddf)
    nabla_alpha = _covariant_one_form(alpha, geometry, diff)
    alpha_up = np.einsum("ijxy,jxy->ixy", ginv, alpha)

    norm_h_sq = geometry.norm_sq_h
    grad_h_sq = np.einsum("ikxy,jlxy,ijxy,klxy->xy", ginv, ginv, nabla_alpha, nabla_alpha)
    h_h_dh = np.einsum("ixy,jxy,ijxy->xy", alpha_up, alpha_up, nabla_alpha)
    div_h = np.einsum("ijxy,ijxy->xy", ginv, nabla_alpha)
    # h_ilm h_jlm H_i H_j = |c(H^#, ., .)|^2
    c_h = np.einsum("ixy,ilmxy->lmxy", alpha_up, c)
    hh = np.einsum("lpxy,mqxy,lmxy,pqxy->xy", ginv, ginv, c_h, c_h)
    return lam * lam * (
        laplace_beltrami(norm_h_sq, geometry, diff)
        - 2.0 * grad_h_sq
        + 4.0 * (3.0 * lam * lam - 2.0) * norm_h_sq**2
        + 10.0 * lam * eta1 * h_h_dh
        + 4.0 * lam * eta1 * norm_h_sq * div_h
        + 2.0 * hh
    )


def _frame_tensors(geometry, ambient, diff):
    """``H_i``, ``H_i,j``, ``h_ijk`` and ``h_ijk,l`` in the frame ``e_a``, ``nu_a = K e_a``.

    Index layout: ``dh[j, i]`` is ``H_i,j`` and ``dc[l, i, j, k]`` is ``h_ijk,l``.
    """
    coeff = orthonormal_coefficients(geometry.metric)
    k_df = np.einsum("AB,iBxy->iAxy", ambient.K, geometry.df)
    alpha = np.einsum("Axy,kAxy->kxy", geometry.mean_curvature, k_df)
    c = np.einsum("iAxy,jkAxy->ijkxy", k_df, geometry.ddf)
    gam = geometry.christoffel
    nabla_alpha = _covariant_one_form(alpha, geometry, diff)
    d_c = np.stack([diff.d1(c), diff.d2(c)])
    nabla_c = (d_c
               - np.einsum("mlixy,mjkxy->lijkxy", gam, c)
               - np.einsum("mljxy,imkxy->lijkxy", gam, c)
               - np.einsum("mlkxy,ijmxy->lijkxy", gam, c))
    h = np.einsum("aixy,ixy->axy", coeff, alpha)
    dh = np.einsum("aixy,bjxy,ijxy->abxy", coeff, coeff, nabla_alpha)
    ce = np.einsum("aixy,bjxy,ckxy,ijkxy->abcxy", coeff, coeff, coeff, c)
    dce = np.einsum("dlxy,aixy,bjxy,ckxy,lijkxy->dabcxy", coeff, coeff, coeff, coeff, nabla_c)
    return h, dh, ce, dce


def _norm_sq_a_rhs(geometry, ambient, diff):
    """Flat-ambient right side of the ``|A|^2`` evolution on the special class."""
    lam = geometry.lam
    eta1 = geometry.eta[0]
    h, dh, c, dc = _frame_tensors(geometry, ambient, diff)
    norm_a_sq = geometry.norm_sq_a
    grad_a_sq = np.einsum("lijkxy,lijkxy->xy", dc, dc)
    hhh_c = np.einsum("ixy,jxy,kxy,ijkxy->xy", h, h, h, c)
    h_dh_c = np.einsum("ixy,kjxy,ijkxy->xy", h, dh, c)
    h_dc_c = np.einsum("lxy,lijkxy,ijkxy->xy", h, dc, c)
    quartic_a = np.einsum("lmrxy,ijlxy,kmrxy,ijkxy->xy", c, c, c, c)
    quartic_b = np.einsum("ilmxy,jmrxy,krlxy,ijkxy->xy", c, c, c, c)
    return lam * lam * (
        laplace_beltrami(norm_a_sq, geometry, diff)
        - 2.0 * grad_a_sq
        + 4.0 * (3.0 * lam * lam - 2.0) * hhh_c
        + 12.0 * lam * eta1 * h_dh_c
        + 2.0 * lam * eta1 * h_dc_c
        + 6.0 * quartic_a
        - 4.0 * quartic_b
    )


def _check_spacing(times):
    t0, t1, t2 = times
    tau = t1 - t0
    if not tau > 0 or abs((t2 - t1) - tau) > 1e-9 * max(abs(tau), 1e-300) + 1e-14:
        raise ConfigurationError(
            f"snapshots must be equally spaced and increasing in time, got t = {t0!r}, {t1!r}, {t2!r}")
    return tau


def evolution_residuals(snapshots, ambient, include_mean_curvature=True,
                        include_second_fundamental=False):
    """Compare central time differences over three snapshots with the evolution laws.

    Checks, at the middle snapshot,

    * ``d/dt lambda^2 = lambda^2 Delta lambda^2 - 2 lambda^4 |H|^2``,
    * ``d/dt sqrt(det g) = sqrt(det g) (Delta(lambda^2/2) - lambda^2 |H|^2)``,
    * the flat-ambient ``|H|^2`` law on the special class (when
      ``include_mean_curvature``), see :func:`_mean_curvature_rhs`,
    * the flat-ambient ``|A|^2`` law on the special class (when
      ``include_second_fundamental``; spectral scheme and ``N >= 64`` only,
      as it needs third derivatives of ``f``).

    ``Delta`` is the Laplace-Beltrami operator of the induced metric.
    Residuals are sup norms over the grid; ``refinement`` is ``(h, tau)``
    with ``tau`` the snapshot spacing.

    Raises
    ------
    ConfigurationError
        If there are not exactly three equally spaced snapshots, or the
        ``|A|^2`` check is requested on an unsupported discretization.
    """
    if len(snapshots) != 3:
        raise ConfigurationError(f"need exactly three snapshots, got {len(snapshots)}")
    if include_second_fundamental and (snapshots[0].scheme != "spectral"
                                       or min(snapshots[0].grid_size) < 64):
        raise ConfigurationError("the |A|^2 evolution check needs the spectral scheme and N >= 64")
    tau = _check_spacing([s.time for s in snapshots])
    geoms = [compute_geometry(s, ambient) for s in snapshots]
    mid_state, mid = snapshots[1], geoms[1]
    diff = mid_state.differentiator

    lam_sq = [g.lam**2 for g in geoms]
    lam2 = lam_sq[1]
    dt_lam_sq = (lam_sq[2] - lam_sq[0]) / (2.0 * tau)
    rhs_lam_sq = lam2 * laplace_beltrami(lam2, mid, diff) - 2.0 * lam2 * lam2 * mid.norm_sq_h

    dt_area = (geoms[2].area_density - geoms[0].area_density) / (2.0 * tau)
    rhs_area = mid.area_density * (laplace_beltrami(0.5 * lam2, mid, diff) - lam2 * mid.norm_sq_h)

    res = {"lambda_sq": float(np.abs(dt_lam_sq - rhs_lam_sq).max()),
           "area_density": float(np.abs(dt_area - rhs_area).max())}
    if include_mean_curvature:
        dt_h = (geoms[2].norm_sq_h - geoms[0].norm_sq_h) / (2.0 * tau)
        res["mean_curvature_sq"] = float(np.abs(dt_h - _mean_curvature_rhs(mid, ambient, diff)).max())
    if include_second_fundamental:
        dt_a = (geoms[2].norm_sq_a - geoms[0].norm_sq_a) / (2.0 * tau)
        res["second_fundamental_sq"] = float(np.abs(dt_a - _norm_sq_a_rhs(mid, ambient, diff)).max())
    return ResidualReport(res, tuple(mid_state.grid_size), mid_state.scheme,
                          (max(mid_state.spacing), tau))


@dataclass(frozen=True)
class MonotoneVerdict:
    """Outcome of one monotonicity or bound check over a series.

    ``worst_violation`` is the largest step in the wrong direction (or the
    largest excursion outside the bound), 0 when there is none.
    """

    name: str
    passed: bool
    worst_violation: float
    tolerance: float


@dataclass(frozen=True)
class TypeOneFit:
    """Least-squares fit ``log sup|A|^2 = c + p * (-log(T - t))``."""

    exponent: float
    blowup_time: float
    intercept: float
    residual: float


@dataclass(frozen=True)
class SeriesReport:
    verdicts: dict
    a_sq_ratio: float
    special: bool
    type_one: TypeOneFit = None

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts.values())


def monotone_verdict(name, values, increasing, tolerance):
    """Check a series for monotonicity, ignoring per-step violations up to ``tolerance``."""
    steps = np.diff(np.asarray(values, dtype=float))
    wrong = -steps if increasing else steps
    worst = float(max(wrong.max(initial=0.0), 0.0))
    return MonotoneVerdict(name, bool(worst <= tolerance), worst, tolerance)


def fit_type_one(t, values, search_fraction=0.2):
    """Fit the blow-up rate of ``values`` (e.g. ``sup|A|^2``) near the end of ``t``.

    For a trial singular time ``T`` the model ``log values = c + p log(1/(T - t))``
    is fitted by least squares; ``T`` is chosen in
    ``(t_end, t_end + search_fraction * (t_end - t_0)]`` to minimize the fit
    residual, by bounded scalar minimization.  ``p`` near 1 indicates Type-I
    growth.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    t, y = t[keep], np.log(y[keep])
    if t.size < 3:
        raise ConfigurationError("the rate fit needs at least three positive samples")
    span = t[-1] - t[0]
    if not span > 0:
        raise ConfigurationError("the rate fit needs increasing sample times")

    def solve(big_t):
        x = -np.log(big_t - t)
        design = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return coef, float(np.sum((design @ coef - y) ** 2))

    lo = t[-1] + 1e-9 * span
    hi = t[-1] + search_fraction * span
    best = optimize.minimize_scalar(lambda b: solve(b)[1], bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-12 * span})
    coef, resid = solve(best.x)
    return TypeOneFit(float(coef[1]), float(best.x), float(coef[0]), resid)


DEFAULT_TOLERANCES = {
    "energy": 1e-10,
    "max_lambda": 1e-8,
    "min_mu": 1e-8,
    "lambda_bounds": 1e-6,
}


def series_analysis(records, special=None, blowup=False, tolerances=None):
    """Trajectory-level verdicts on a list of :class:`DiagnosticsRecord`.

    Checks that ``E`` is nonincreasing, ``max lambda`` nonincreasing and, for
    special runs, ``min mu`` nondecreasing and ``lambda`` staying inside
    ``[min lambda(0), max lambda(0)]``.  Energy tolerance is relative to
    ``E(0)``; the others are absolute.  ``special`` defaults to whether the
    first record has ``max Q <= SPECIAL_GATE``.  With ``blowup`` the Type-I
    rate of ``sup|A|^2`` is fitted as well.

    Raises
    ------
    ConfigurationError
        If fewer than 10 records are given.
    """
    if len(records) < 10:
        raise ConfigurationError(f"series analysis needs at least 10 records, got {len(records)}")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    if special is None:
        special = records[0].max_q <= SPECIAL_GATE
    col = {name: np.array([getattr(r, name) for r in records]) for name in RECORD_FIELDS}

    verdicts = {}
    e0 = abs(col["energy"][0])
    verdicts["energy"] = monotone_verdict("energy", col["energy"], False, tol["energy"] * max(e0, 1e-300))
    verdicts["max_lambda"] = monotone_verdict("max_lambda", col["max_lambda"], False, tol["max_lambda"])
    if special:
        verdicts["min_mu"] = monotone_verdict("min_mu", col["min_mu"], True, tol["min_mu"])
        below = col["min_lambda"][0] - col["min_lambda"]
        above = col["max_lambda"] - col["max_lambda"][0]
        worst = float(max(below.max(), above.max(), 0.0))
        verdicts["lambda_bounds"] = MonotoneVerdict("lambda_bounds", worst <= tol["lambda_bounds"],
                                                    worst, tol["lambda_bounds"])

    a0, a1 = col["int_a_sq_dmu"][0], col["int_a_sq_dmu"][-1]
    ratio = a1 / a0 if a0 > 0 else (0.0 if a1 == 0 else np.inf)
    fit = fit_type_one(col["t"], col["max_norm_sq_a"]) if blowup else None
    return SeriesReport(verdicts, float(ratio), bool(special), fit)
