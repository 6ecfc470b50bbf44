import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_state, shear
from hflow.exceptions import ConfigurationError
from hflow.flow import IntegratorConfig, integrate
from hflow.io import (CSV_HEADER, SNAPSHOT_FIELDS, OutputError, diagnostics_csv_text, flat_binary_bytes,
                      joined_csv_text, parse_flat_binary, read_diagnostics_csv, read_flat_binary,
                      vtk_legacy_text, write_diagnostics_csv, write_snapshot)
from hflow.surface import compute_geometry


@pytest.fixture(scope="module")
def identity_run(ambient):
    return integrate(make_state(n=16), ambient, "hflow_gradient", IntegratorConfig(t_end=1.0, max_steps=2),
                     diagnostics_cadence=1)


def test_header_is_fixed():
    assert ",".join(CSV_HEADER) == \
        "t,E,min_lambda,max_lambda,max_Q,max_A2,max_H,int_A2_dmu,area,min_beta1,min_beta2,min_mu,min_detg,dt"


def test_identity_run_csv(identity_run, tmp_path):
    path = tmp_path / "d.csv"
    write_diagnostics_csv(identity_run, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("ascii").splitlines()
    assert len(lines) == 4
    rows = [line.split(",") for line in lines[1:]]
    assert all(len(r) == 14 for r in rows)
    assert len({r[1] for r in rows}) == 1
    assert read_diagnostics_csv(path) == identity_run.records


def test_empty_trajectory_is_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        diagnostics_csv_text([])


def test_unwritable_path_names_the_path(identity_run, tmp_path):
    target = tmp_path / "missing" / "d.csv"
    with pytest.raises(OutputError, match="missing"):
        write_diagnostics_csv(identity_run, target)


def test_csv_round_trips_floats(ambient, tmp_path):
    traj = integrate(shear(0.05, n=16), ambient, "hflow_gradient", IntegratorConfig(t_end=3e-4),
                     diagnostics_cadence=1)
    path = tmp_path / "s.csv"
    write_diagnostics_csv(traj, path)
    assert read_diagnostics_csv(path) == traj.records


def test_joined_csv_columns(identity_run):
    text = joined_csv_text([identity_run, identity_run.records[:2]], ["_hflow", "_mcf"])
    lines = text.splitlines()
    header = lines[0].split(",")
    assert header.count("t") == 1
    assert header[1:14] == [c + "_hflow" for c in CSV_HEADER[1:]]
    assert header[14:] == [c + "_mcf" for c in CSV_HEADER[1:]]
    assert len(lines) == 4
    assert lines[-1].split(",")[14] == "nan"


def test_flat_binary_size_and_round_trip(identity_state, ambient, tmp_path):
    state = make_state(n=8)
    geom = compute_geometry(state, ambient)
    path = tmp_path / "s.bin"
    write_snapshot(state, geom, path)
    data = path.read_bytes()
    count = len(SNAPSHOT_FIELDS)
    assert len(data) == 64 + 32 * count + 64 * count * 8
    assert data[:64].split() == [b"HFLOW1", b"8", b"8", str(count).encode()]
    assert data[63:64] == b"\n"
    fields = read_flat_binary(path)
    assert list(fields) == list(SNAPSHOT_FIELDS)
    np.testing.assert_array_equal(fields["rho"], state.rho)
    np.testing.assert_array_equal(fields["lambda"], geom.lam)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, width=64)))
def test_flat_binary_is_bit_exact(a):
    fields = {"a": a, "b": -a, "neg_zero": np.full(a.shape, -0.0)}
    data = flat_binary_bytes(fields)
    back = parse_flat_binary(data)
    for name, value in fields.items():
        assert back[name].tobytes() == np.ascontiguousarray(value, dtype="<f8").tobytes()
    assert flat_binary_bytes(back) == data


def test_flat_binary_rejects_corruption():
    data = flat_binary_bytes({"a": np.zeros((2, 2))})
    with pytest.raises(ConfigurationError, match="size"):
        parse_flat_binary(data[:-1])
    with pytest.raises(ConfigurationError, match="header"):
        parse_flat_binary(b"XX" + data[2:])
    with pytest.raises(ConfigurationError):
        flat_binary_bytes({"a": np.zeros((2, 2)), "b": np.zeros((3, 2))})


def test_vtk_snapshot(ambient, tmp_path):
    state = shear(0.05, n=8)
    geom = compute_geometry(state, ambient)
    path = tmp_path / "s.vtk"
    write_snapshot(state, geom, path, "vtk_legacy", ambient)
    lines = path.read_text(encoding="ascii").splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert "DATASET STRUCTURED_GRID" in lines
    assert "DIMENSIONS 8 8 1" in lines
    assert "POINTS 64 double" in lines
    for name in ("y4", "lambda", "Q", "A2", "H"):
        assert f"SCALARS {name} double 1" in lines
    # second point is i1 = 1, i2 = 0: x runs fastest
    first = lines.index("POINTS 64 double") + 1
    expected = ambient.reduce(state.lift())[:3, 1, 0]
    np.testing.assert_allclose([float(v) for v in lines[first + 1].split()], expected, atol=1e-15)


def test_vtk_needs_ambient_and_known_format(ambient, tmp_path):
    state = make_state(n=8)
    geom = compute_geometry(state, ambient)
    with pytest.raises(ConfigurationError):
        write_snapshot(state, geom, tmp_path / "x.vtk", "vtk_legacy")
    with pytest.raises(ConfigurationError):
        write_snapshot(state, geom, tmp_path / "x.h5", "hdf5")
    assert vtk_legacy_text(state, geom, ambient).endswith("\n")
