import numpy as np
import scipy.io

from normmc.io import (
    read_dense_csv,
    read_dense_mm,
    read_observations_mm,
    write_dense_csv,
    write_dense_mm,
    write_observations_mm,
)
from normmc.model import ObservationSet, sample_omega


def test_observation_roundtrip_preserves_duplicates_and_order(tmp_path):
    om = ObservationSet(3, 3, rows=[0, 2, 0, 0], cols=[1, 2, 1, 0])
    vals = np.array([1.5, -2.0, 3.25, 0.0])
    path = tmp_path / "obs.mtx"
    write_observations_mm(path, om, vals)
    om2, vals2 = read_observations_mm(path)
    assert om2.shape == om.shape
    assert np.array_equal(om2.rows, om.rows)
    assert np.array_equal(om2.cols, om.cols)
    assert np.array_equal(vals2, vals)


def test_observation_file_is_one_based_with_duplicate_lines(tmp_path):
    om = ObservationSet(2, 2, rows=[0, 0], cols=[0, 0])
    path = tmp_path / "dup.mtx"
    write_observations_mm(path, om)
    lines = path.read_text().splitlines()
    assert lines[0] == "%%MatrixMarket matrix coordinate real general"
    assert lines[1].split() == ["2", "2", "2"]
    assert lines[2].split()[:2] == ["1", "1"]
    assert lines[3].split()[:2] == ["1", "1"]


def test_observation_file_readable_by_scipy(tmp_path, rng):
    om = sample_omega(4, 6, 10, seed=12)
    vals = rng.standard_normal(10)
    path = tmp_path / "obs.mtx"
    write_observations_mm(path, om, vals)
    M = scipy.io.mmread(path)  # scipy sums duplicates on densify
    dense = np.zeros((4, 6))
    np.add.at(dense, (om.rows, om.cols), vals)
    assert np.allclose(np.asarray(M.todense()), dense)


def test_dense_mm_roundtrip_and_scipy_interop(tmp_path, rng):
    X = rng.standard_normal((3, 5))
    path = tmp_path / "dense.mtx"
    write_dense_mm(path, X)
    assert np.array_equal(read_dense_mm(path), X)
    assert np.allclose(scipy.io.mmread(path), X)
    # and the reverse direction: read a scipy-written array file
    path2 = tmp_path / "scipy.mtx"
    scipy.io.mmwrite(path2, X)
    assert np.allclose(read_dense_mm(path2), X)


def test_dense_csv_roundtrip_row_major(tmp_path):
    X = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    path = tmp_path / "m.csv"
    write_dense_csv(path, X)
    first_line = path.read_text().splitlines()[0]
    assert [float(tok) for tok in first_line.split(",")] == [1.0, 2.0, 3.0]
    assert np.array_equal(read_dense_csv(path), X)
