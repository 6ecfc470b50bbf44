"""Diagnostics CSV and field snapshots.

``flat_binary`` layout: a 64-byte ASCII header ``HFLOW1 N1 N2 fieldcount``
padded with spaces and closed by ``\\n`` at byte 63, then ``fieldcount``
names of 32 bytes each (ASCII, NUL padded), then the fields one after the
other, each ``N1 x N2`` little-endian float64 in row-major order.
"""

from __future__ import annotations

import csv
import io as _io
import math

import numpy as np

from .diagnostics import DiagnosticsRecord, q_field
from .exceptions import ConfigurationError, HFlowError

CSV_HEADER = ("t", "E", "min_lambda", "max_lambda", "max_Q", "max_A2", "max_H", "int_A2_dmu",
              "area", "min_beta1", "min_beta2", "min_mu", "min_detg", "dt")
SNAPSHOT_FIELDS = ("p1", "p2", "p3", "p4", "rho", "lambda", "Q", "A2", "H")
HEADER_BYTES = 64
NAME_BYTES = 32
MAGIC = "HFLOW1"


class OutputError(HFlowError, OSError):
    """Writing or reading an artifact failed; the message names the path."""


def format_float(x):
    """17 significant digits, enough to round-trip any float64."""
    return "%.17g" % x


def _records(trajectory):
    return trajectory.records if hasattr(trajectory, "records") else list(trajectory)


def diagnostics_csv_text(trajectory):
    """CSV text of a trajectory (or a list of records), LF line endings."""
    records = _records(trajectory)
    if not records:
        raise ConfigurationError("cannot write diagnostics of an empty trajectory")
    lines = [",".join(CSV_HEADER)]
    for rec in records:
        lines.append(",".join(format_float(v) for v in rec.as_row()))
    return "\n".join(lines) + "\n"


def _write_bytes(path, data):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror}") from exc


def write_diagnostics_csv(trajectory, path):
    """Write one row per record under the fixed 14-column header.

    Raises
    ------
    ConfigurationError
        For an empty trajectory.
    OutputError
        If the file cannot be written.
    """
    _write_bytes(path, diagnostics_csv_text(trajectory).encode("ascii"))


def read_diagnostics_csv(path):
    """Inverse of :func:`write_diagnostics_csv`; returns a list of records."""
    text = _read_bytes(path).decode("ascii")
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ConfigurationError(f"{path}: unexpected diagnostics header")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise ConfigurationError(f"{path}: line {lineno} has {len(row)} columns, expected 14")
        out.append(DiagnosticsRecord(*(float(v) for v in row)))
    return out


def joined_csv_text(trajectories, suffixes):
    """Join several runs on ``t``: one ``t`` column, then each run's columns with its suffix.

    Rows are the union of sample times; a run without a sample at some ``t``
    contributes ``nan`` there.
    """
    cols = CSV_HEADER[1:]
    header = ["t"] + [f"{c}{sfx}" for sfx in suffixes for c in cols]
    tables = []
    for traj in trajectories:
        tables.append({rec.t: rec.as_row()[1:] for rec in _records(traj)})
    times = sorted(set().union(*tables))
    nan_row = (math.nan,) * len(cols)
    lines = [",".join(header)]
    for t in times:
        values = [t]
        for table in tables:
            values.extend(table.get(t, nan_row))
        lines.append(",".join(format_float(v) for v in values))
    return "\n".join(lines) + "\n"


def snapshot_fields(state, geometry):
    """The named per-point arrays stored in a snapshot, in file order."""
    q, _ = q_field(geometry)
    arrays = [state.periodic[0], state.periodic[1], state.periodic[2], state.periodic[3], state.rho,
              geometry.lam, q, geometry.norm_sq_a, np.sqrt(geometry.norm_sq_h)]
    return dict(zip(SNAPSHOT_FIELDS, arrays))


def flat_binary_bytes(fields):
    """Encode a mapping of equally shaped 2-D arrays in the ``flat_binary`` layout."""
    names = list(fields)
    shape = np.shape(fields[names[0]])
    if len(shape) != 2 or any(np.shape(fields[n]) != shape for n in names):
        raise ConfigurationError("flat_binary fields must be 2-D arrays of one shape")
    head = f"{MAGIC} {shape[0]} {shape[1]} {len(names)}"
    if len(head) > HEADER_BYTES - 1:
        raise ConfigurationError("flat_binary header does not fit in 64 bytes")
    parts = [(head.ljust(HEADER_BYTES - 1) + "\n").encode("ascii")]
    for name in names:
        raw = name.encode("ascii")
        if len(raw) >= NAME_BYTES:
            raise ConfigurationError(f"field name {name!r} longer than {NAME_BYTES - 1} bytes")
        parts.append(raw.ljust(NAME_BYTES, b"\0"))
    for name in names:
        parts.append(np.ascontiguousarray(fields[name], dtype="<f8").tobytes(order="C"))
    return b"".join(parts)


def parse_flat_binary(data, source="<bytes>"):
    """Decode ``flat_binary`` bytes into ``{name: array}``."""
    if len(data) < HEADER_BYTES or data[HEADER_BYTES - 1:HEADER_BYTES] != b"\n":
        raise ConfigurationError(f"{source}: missing flat_binary header")
    tokens = data[:HEADER_BYTES].decode("ascii").split()
    if len(tokens) != 4 or tokens[0] != MAGIC:
        raise ConfigurationError(f"{source}: bad flat_binary header {tokens!r}")
    n1, n2, count = (int(v) for v in tokens[1:])
    expected = HEADER_BYTES + count * NAME_BYTES + count * n1 * n2 * 8
    if len(data) != expected:
        raise ConfigurationError(f"{source}: size {len(data)} does not match header (expected {expected})")
    names = []
    offset = HEADER_BYTES
    for _ in range(count):
        names.append(data[offset:offset + NAME_BYTES].rstrip(b"\0").decode("ascii"))
        offset += NAME_BYTES
    out = {}
    block = n1 * n2 * 8
    for name in names:
        out[name] = np.frombuffer(data, dtype="<f8", count=n1 * n2, offset=offset).reshape(n1, n2).copy()
        offset += block
    return out


def read_flat_binary(path):
    return parse_flat_binary(_read_bytes(path), str(path))


def vtk_legacy_text(state, geometry, ambient, title="hflow snapshot"):
    """ASCII legacy VTK structured grid of ``f`` reduced modulo the lattice.

    Points carry the first three ambient coordinates; the fourth goes to the
    ``y4`` point-data array.  The first grid index varies fastest.
    """
    n1, n2 = state.grid_size
    pts = ambient.reduce(state.lift())
    # VTK wants x fastest: flatten in (i2, i1) order
    flat = pts.transpose(0, 2, 1).reshape(4, -1)
    q, _ = q_field(geometry)
    data = {"y4": flat[3],
            "lambda": geometry.lam.T.ravel(),
            "Q": q.T.ravel(),
            "A2": geometry.norm_sq_a.T.ravel(),
            "H": np.sqrt(geometry.norm_sq_h).T.ravel()}
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET STRUCTURED_GRID",
           f"DIMENSIONS {n1} {n2} 1", f"POINTS {n1 * n2} double"]
    out.extend(" ".join(format_float(v) for v in flat[:3, i]) for i in range(n1 * n2))
    out.append(f"POINT_DATA {n1 * n2}")
    for name, arr in data.items():
        out.append(f"SCALARS {name} double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(format_float(v) for v in arr)
    return "\n".join(out) + "\n"


def write_snapshot(state, geometry, path, fmt="flat_binary", ambient=None):
    """Write one state in ``flat_binary`` or ``vtk_legacy`` format.

    ``ambient`` is needed for ``vtk_legacy`` (points are reduced modulo its
    lattice).
    """
    if fmt == "flat_binary":
        data = flat_binary_bytes(snapshot_fields(state, geometry))
    elif fmt == "vtk_legacy":
        if ambient is None:
            raise ConfigurationError("vtk_legacy snapshots need the ambient space")
        data = vtk_legacy_text(state, geometry, ambient).encode("ascii")
    else:
        raise ConfigurationError(f"unknown snapshot format {fmt!r}")
    _write_bytes(path, data)

