"""Scenario files and construction of the initial immersion.

A scenario is a line-oriented ``key = value`` text file; ``#`` starts a
comment.  Values are JSON literals (numbers, quoted strings, lists) or bare
words, which are read as strings.  Integrator keys are flattened with an
``integrator.`` prefix.  Every key is optional except that unknown keys are
rejected:

=========================  ==========================  =====================================
key                        default                     meaning
=========================  ==========================  =====================================
name                       ``scenario``                stem for output files
lattice                    identity                    4x4 list, columns are periods
initialMap                 ``identity_graph``          ``identity_graph``, ``shear_graph``,
                                                       ``normal_sinusoid``,
                                                       ``fourier_perturbation``
epsilon1, epsilon2         ``0.0``                     shear amplitudes; ``epsilon1`` is
                                                       also the normal-sinusoid amplitude
wavenumber                 ``1``                       ``k`` in the shears / sinusoid
fourierAmplitude           ``0.01``                    scale of random Fourier coefficients
fourierMaxMode             ``2``                       largest ``|k1|, |k2|`` drawn
fourierCoefficients        ``[]``                      explicit rows
                                                       ``[component, k1, k2, cos, sin]``
rhoMode                    ``pullback_omega2``         or ``constant``
rhoConstant                ``1.0``                     value for ``constant``
flowKind                   ``hflow_gradient``          or ``hflow_hamiltonian``, ``mcf``
scheme                     ``spectral``                or ``central4``
gridSize                   ``[64, 64]``                even, each >= 8; one integer = square
integrator.method          ``rk4``                     or ``euler``
integrator.dt_mode         ``cfl``                     or ``fixed``
integrator.dt              ``null``                    step for ``fixed``
integrator.cfl_safety      ``0.2``
integrator.t_end           ``0.1``
integrator.max_steps       ``1000000``
integrator.stop_on_blowup  ``1e6``                     sup ``|A|^2`` threshold
integrator.stop_on_degeneracy ``1e-8``                 ``det g`` threshold
diagnosticsCadence         ``10``
snapshotCadence            ``100``                     0 keeps only the final state
snapshotFormat             ``flat_binary``             or ``vtk_legacy``
outputDir                  ``null``
seed                       ``0``                       for random Fourier coefficients
=========================  ==========================  =====================================
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .ambient import standard_hyperkahler_torus
from .derivatives import SCHEMES
from .exceptions import ConfigurationError
from .flow import FLOW_KINDS, IntegratorConfig
from .surface import SurfaceState, lift_partials
from .validation import check_choice, check_grid_size, check_int, check_positive

INITIAL_MAPS = ("identity_graph", "shear_graph", "normal_sinusoid", "fourier_perturbation")
GRAPH_MAPS = ("identity_graph", "shear_graph")
RHO_MODES = ("pullback_omega2", "constant")
SNAPSHOT_FORMATS = ("flat_binary", "vtk_legacy")
GRAPH_WINDING = ((1.0, 1.0, 0.0, 0.0), (0.0, 0.0, 1.0, 1.0))
PLANE_WINDING = ((1.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0))
OMEGA3_TOLERANCE = 1e-12
IDENTITY_LATTICE = tuple(tuple(float(i == j) for j in range(4)) for i in range(4))


@dataclass(frozen=True)
class ScenarioConfig:
    """A complete, reproducible experiment description; see the module docstring for keys."""

    name: str = "scenario"
    lattice: tuple = IDENTITY_LATTICE
    initial_map: str = "identity_graph"
    epsilon1: float = 0.0
    epsilon2: float = 0.0
    wavenumber: int = 1
    fourier_amplitude: float = 0.01
    fourier_max_mode: int = 2
    fourier_coefficients: tuple = ()
    rho_mode: str = "pullback_omega2"
    rho_constant: float = 1.0
    flow_kind: str = "hflow_gradient"
    scheme: str = "spectral"
    grid_size: tuple = (64, 64)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    diagnostics_cadence: int = 10
    snapshot_cadence: int = 100
    snapshot_format: str = "flat_binary"
    output_dir: str = None
    seed: int = 0

    def validate(self):
        """Check every field; raises :class:`ConfigurationError` naming the key."""
        if not isinstance(self.name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", self.name):
            raise ConfigurationError(f"name must be a nonempty file-name-safe string, got {self.name!r}")
        lattice = np.asarray(self.lattice, dtype=float)
        if lattice.shape != (4, 4) or not np.all(np.isfinite(lattice)):
            raise ConfigurationError("lattice must be a finite 4x4 matrix")
        check_choice("initialMap", self.initial_map, INITIAL_MAPS)
        check_positive("epsilon1", self.epsilon1, allow_zero=True)
        check_positive("epsilon2", self.epsilon2, allow_zero=True)
        check_int("wavenumber", self.wavenumber, 1)
        check_positive("fourierAmplitude", self.fourier_amplitude, allow_zero=True)
        check_int("fourierMaxMode", self.fourier_max_mode, 0)
        for row in self.fourier_coefficients:
            if len(row) != 5 or int(row[0]) not in (1, 2, 3, 4) or row[0] != int(row[0]):
                raise ConfigurationError(
                    f"fourierCoefficients rows must be [component 1-4, k1, k2, cos, sin], got {list(row)}")
            if row[1] != int(row[1]) or row[2] != int(row[2]):
                raise ConfigurationError(f"fourierCoefficients wavenumbers must be integers, got {list(row)}")
        check_choice("rhoMode", self.rho_mode, RHO_MODES)
        check_positive("rhoConstant", self.rho_constant)
        check_choice("flowKind", self.flow_kind, FLOW_KINDS)
        check_choice("scheme", self.scheme, SCHEMES)
        check_grid_size(self.grid_size)
        self.integrator.validate()
        check_int("diagnosticsCadence", self.diagnostics_cadence, 1)
        check_int("snapshotCadence", self.snapshot_cadence, 0)
        check_choice("snapshotFormat", self.snapshot_format, SNAPSHOT_FORMATS)
        if self.output_dir is not None and not isinstance(self.output_dir, str):
            raise ConfigurationError(f"outputDir must be a string, got {self.output_dir!r}")
        check_int("seed", self.seed, 0)
        return self


# file key -> (attribute, kind)
_TOP_KEYS = {
    "name": ("name", "str"),
    "lattice": ("lattice", "matrix"),
    "initialMap": ("initial_map", "str"),
    "epsilon1": ("epsilon1", "float"),
    "epsilon2": ("epsilon2", "float"),
    "wavenumber": ("wavenumber", "int"),
    "fourierAmplitude": ("fourier_amplitude", "float"),
    "fourierMaxMode": ("fourier_max_mode", "int"),
    "fourierCoefficients": ("fourier_coefficients", "table"),
    "rhoMode": ("rho_mode", "str"),
    "rhoConstant": ("rho_constant", "float"),
    "flowKind": ("flow_kind", "str"),
    "scheme": ("scheme", "str"),
    "gridSize": ("grid_size", "grid"),
    "diagnosticsCadence": ("diagnostics_cadence", "int"),
    "snapshotCadence": ("snapshot_cadence", "int"),
    "snapshotFormat": ("snapshot_format", "str"),
    "outputDir": ("output_dir", "optstr"),
    "seed": ("seed", "int"),
}
_INTEGRATOR_KEYS = {
    "integrator.method": ("method", "str"),
    "integrator.dt_mode": ("dt_mode", "str"),
    "integrator.dt": ("dt", "optfloat"),
    "integrator.cfl_safety": ("cfl_safety", "float"),
    "integrator.t_end": ("t_end", "float"),
    "integrator.max_steps": ("max_steps", "int"),
    "integrator.stop_on_blowup": ("stop_on_blowup", "float"),
    "integrator.stop_on_degeneracy": ("stop_on_degeneracy", "float"),
}

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*?)\s*$")


def _strip_comment(line):
    # '#' inside a quoted string is kept
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def _coerce(key, kind, raw):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    bad = ConfigurationError(f"{key}: cannot read {raw!r} as {kind}")
    if kind == "str":
        if not isinstance(value, str):
            raise bad
        return value
    if kind == "optstr":
        if value is None or isinstance(value, str):
            return value
        raise bad
    if kind in ("float", "optfloat"):
        if value is None and kind == "optfloat":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise bad
        return int(value)
    if kind == "grid":
        if isinstance(value, int) and not isinstance(value, bool):
            return (value, value)
        if isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            return tuple(value)
        raise bad
    if kind == "matrix":
        if (isinstance(value, list) and all(isinstance(r, list) for r in value)
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for r in value for v in r)):
            return tuple(tuple(float(v) for v in r) for r in value)
        raise bad
    if kind == "table":
        if isinstance(value, list) and all(isinstance(r, list) for r in value) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for r in value for v in r):
            return tuple(tuple(float(v) for v in r) for r in value)
        raise bad
    raise AssertionError(kind)


def parse_scenario(text):
    """Parse a scenario document into a validated :class:`ScenarioConfig`.

    Raises
    ------
    ConfigurationError
        ``line N: ...`` for syntax errors, unknown or repeated keys and
        unreadable values; the key name for semantic violations.
    """
    top, integ, seen = {}, {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = m.group(1), m.group(2)
        if raw == "":
            raise ConfigurationError(f"line {lineno}: missing value for {key}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: {key} already set on line {seen[key]}")
        seen[key] = lineno
        if key in _TOP_KEYS:
            attr, kind = _TOP_KEYS[key]
            target = top
        elif key in _INTEGRATOR_KEYS:
            attr, kind = _INTEGRATOR_KEYS[key]
            target = integ
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        try:
            target[attr] = _coerce(key, kind, raw)
        except ConfigurationError as exc:
            raise ConfigurationError(f"line {lineno}: {exc}") from None
    config = ScenarioConfig(**top, integrator=IntegratorConfig(**integ))
    return config.validate()


def _render(value):
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigurationError(f"cannot serialize non-finite value {value!r}")
        return repr(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(_render(v) for v in value) + "]"
    return json.dumps(value)


def serialize_scenario(config):
    """Canonical text form: every key, in a fixed order, one per line."""
    lines = []
    for key, (attr, _) in _TOP_KEYS.items():
        lines.append(f"{key} = {_render(getattr(config, attr))}")
    for key, (attr, _) in _INTEGRATOR_KEYS.items():
        lines.append(f"{key} = {_render(getattr(config.integrator, attr))}")
    return "\n".join(lines) + "\n"


def load_scenario(path):
    """Read and parse a scenario file; I/O errors become :class:`ConfigurationError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    return parse_scenario(text)


def with_grid(config, n):
    """Same scenario on an ``n x n`` grid."""
    return replace(config, grid_size=check_grid_size(n, "--grid")).validate()


def _fourier_table(config):
    if config.fourier_coefficients:
        return [tuple(r) for r in config.fourier_coefficients]
    rng = np.random.default_rng(config.seed)
    m = config.fourier_max_mode
    rows = []
    for comp in range(1, 5):
        for k1 in range(-m, m + 1):
            for k2 in range(-m, m + 1):
                if k1 == 0 and k2 == 0:
                    continue
                scale = config.fourier_amplitude / (1.0 + k1 * k1 + k2 * k2)
                a, b = rng.standard_normal(2) * scale
                rows.append((comp, k1, k2, a, b))
    return rows


def initial_periodic_part(config):
    """``(periodic, winding)`` of the initial map on the configured grid."""
    n1, n2 = check_grid_size(config.grid_size)
    x1, x2 = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
    p = np.zeros((4, n1, n2))
    k = config.wavenumber
    two_pi = 2.0 * np.pi
    winding = np.array(GRAPH_WINDING)
    if config.initial_map == "shear_graph":
        # graph of phi = sigma2 o sigma1, coordinates ordered (x1, phi1, x2, phi2)
        e1, e2 = config.epsilon1, config.epsilon2
        p[1] = e1 * np.sin(two_pi * k * x2)
        p[3] = e2 * np.sin(two_pi * k * (x1 + e1 * np.sin(two_pi * k * x2)))
    elif config.initial_map == "normal_sinusoid":
        winding = np.array(PLANE_WINDING)
        p[2] = config.epsilon1 * np.sin(two_pi * k * x1)
    elif config.initial_map == "fourier_perturbation":
        for comp, k1, k2, a, b in _fourier_table(config):
            phase = two_pi * (k1 * x1 + k2 * x2)
            p[int(comp) - 1] += a * np.cos(phase) + b * np.sin(phase)
    return p, winding


def build_initial_surface(config, ambient=None):
    """The t = 0 state of a scenario.

    Graph modes are ``f(x) = (x1, phi1(x), x2, phi2(x))`` with winding
    ``[[1,1,0,0],[0,0,1,1]]``, ``phi`` the identity or the composed shear.
    With ``rhoMode = pullback_omega2`` the background form is
    ``f*omega_2`` sampled with the configured derivative scheme.

    Raises
    ------
    ConfigurationError
        If the winding is not a lattice vector, ``f*omega_2`` is not
        positive everywhere (pullback mode), or, for graph modes in pullback
        mode, ``f*omega_3`` is not zero within 1e-12.
    """
    config.validate()
    if ambient is None:
        ambient = standard_hyperkahler_torus(config.lattice)
    p, winding = initial_periodic_part(config)
    for i, row in enumerate(winding):
        if not ambient.is_lattice_vector(row):
            raise ConfigurationError(f"winding row {i + 1} {row.tolist()} is not a lattice vector")
    probe = SurfaceState(p, winding, np.ones(p.shape[1:]), scheme=config.scheme)
    if config.rho_mode == "constant":
        return replace(probe, rho=np.full(p.shape[1:], config.rho_constant), rho_gradient=None)
    df = lift_partials(probe)
    omega2 = np.einsum("AB,Axy,Bxy->xy", ambient.kahler_forms[1], df[0], df[1])
    if not np.all(omega2 > 0):
        raise ConfigurationError(
            f"rhoMode = pullback_omega2 needs f*omega_2 > 0, but its minimum is {omega2.min():.6g}")
    if config.initial_map in GRAPH_MAPS:
        omega3 = np.einsum("AB,Axy,Bxy->xy", ambient.kahler_forms[2], df[0], df[1])
        if np.abs(omega3).max() > OMEGA3_TOLERANCE:
            raise ConfigurationError(
                f"graph initial map has max |f*omega_3| = {np.abs(omega3).max():.3e} > {OMEGA3_TOLERANCE:g}; "
                "refine gridSize or reduce the amplitudes")
    return replace(probe, rho=omega2, rho_gradient=None)


def scenario_keys():
    """All scenario keys in file order."""
    return tuple(_TOP_KEYS) + tuple(_INTEGRATOR_KEYS)


