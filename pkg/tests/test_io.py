import numpy as np
import pytest

from boxfmm import io
from boxfmm.errors import FileFormatError


@pytest.fixture
def sample():
    gen = np.random.default_rng(77)
    return gen.standard_normal((40, 5))


def test_csv_round_trip_is_bitwise(tmp_path, sample):
    path = tmp_path / "m.csv"
    names = [f"c{i}" for i in range(5)]
    io.write_matrix_csv(path, names, sample)
    header, back = io.read_matrix_csv(path)
    assert header == names
    assert np.array_equal(back, sample)


def test_binary_round_trip_is_bitwise(tmp_path, sample):
    path = tmp_path / "m.bin"
    io.write_matrix_binary(path, sample)
    back = io.read_matrix_binary(path)
    assert np.array_equal(back, sample)


def test_vector_becomes_column(tmp_path):
    v = np.array([1.0, 2.5, -3.0])
    io.write_matrix_binary(tmp_path / "v.bin", v)
    assert io.read_matrix_binary(tmp_path / "v.bin").shape == (3, 1)
    io.write_matrix_csv(tmp_path / "v.csv", ["a"], v)
    _, back = io.read_matrix_csv(tmp_path / "v.csv")
    assert back.shape == (3, 1)


def test_points_file_round_trip_with_weights(tmp_path):
    gen = np.random.default_rng(5)
    pts = gen.random((25, 3))
    w = gen.standard_normal((25, 2))
    for name in ("p.csv", "p.bin"):
        path = tmp_path / name
        io.write_points_file(path, pts, w)
        rp, rw = io.read_points_file(path)
        assert np.array_equal(rp, pts)
        assert np.array_equal(rw, w)


def test_points_file_without_weights(tmp_path):
    pts = np.random.default_rng(6).random((10, 3))
    path = tmp_path / "p.csv"
    io.write_points_file(path, pts)
    rp, rw = io.read_points_file(path)
    assert np.array_equal(rp, pts)
    assert rw is None
    assert path.read_text().splitlines()[0] == "x,y,z"


def test_csv_reports_offending_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,z\n0.1,0.2,0.3\noops,0.5,0.6\n")
    with pytest.raises(FileFormatError) as err:
        io.read_matrix_csv(path)
    assert err.value.line == 3
    assert "oops" in str(err.value)


def test_csv_reports_column_count_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y,z\n0.1,0.2\n")
    with pytest.raises(FileFormatError) as err:
        io.read_matrix_csv(path)
    assert err.value.line == 2
    assert "columns" in str(err.value)


def test_csv_empty_file_and_blank_lines(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(FileFormatError):
        io.read_matrix_csv(empty)

    gappy = tmp_path / "g.csv"
    gappy.write_text("a,b\n1,2\n\n3,4\n")
    _, data = io.read_matrix_csv(gappy)
    assert data.shape == (2, 2)


def test_points_header_must_be_xyz(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("a,b,c\n0.1,0.2,0.3\n")
    with pytest.raises(FileFormatError) as err:
        io.read_points_file(path)
    assert "x,y,z" in str(err.value)


def test_binary_rejects_bad_magic(tmp_path):
    path = tmp_path / "m.bin"
    io.write_matrix_binary(path, np.ones((2, 2)))
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTMINE!"
    path.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError) as err:
        io.read_matrix_binary(path)
    assert "magic" in str(err.value)


def test_binary_rejects_truncation(tmp_path):
    path = tmp_path / "m.bin"
    io.write_matrix_binary(path, np.ones((4, 3)))
    raw = path.read_bytes()
    path.write_bytes(raw[:10])
    with pytest.raises(FileFormatError):
        io.read_matrix_binary(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(FileFormatError) as err:
        io.read_matrix_binary(path)
    assert "4x3" in str(err.value)


def test_binary_points_need_three_columns(tmp_path):
    path = tmp_path / "p.bin"
    io.write_matrix_binary(path, np.ones((5, 2)))
    with pytest.raises(FileFormatError):
        io.read_points_file(path)


def test_dispatch_by_suffix(tmp_path, sample):
    io.write_matrix(tmp_path / "a.csv", sample)
    io.write_matrix(tmp_path / "a.bin", sample)
    assert np.array_equal(io.read_matrix(tmp_path / "a.csv"), sample)
    assert np.array_equal(io.read_matrix(tmp_path / "a.bin"), sample)
    first = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert first == ",".join(f"phi{i + 1}" for i in range(5))


def test_header_width_must_match(tmp_path):
    with pytest.raises(ValueError):
        io.write_matrix_csv(tmp_path / "x.csv", ["only"], np.ones((2, 3)))
