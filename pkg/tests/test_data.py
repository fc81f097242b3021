import numpy as np
import pytest

from addgp.data import DataFormatError, Dataset, read_dataset_csv, read_points_csv, write_dataset_csv


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    d = Dataset(rng.random((7, 3)), rng.standard_normal(7))
    write_dataset_csv(d, tmp_path / "d.csv")
    back = read_dataset_csv(tmp_path / "d.csv")
    assert back.X.tobytes() == d.X.tobytes() and back.y.tobytes() == d.y.tobytes()
    raw = (tmp_path / "d.csv").read_bytes()
    assert raw.startswith(b"x1,x2,x3,y\r\n") and raw.count(b"\r\n") == 8


def test_column_order_free(tmp_path):
    (tmp_path / "d.csv").write_text("y,x2,x1\n1.0,0.2,0.1\n")
    d = read_dataset_csv(tmp_path / "d.csv")
    assert d.X.tolist() == [[0.1, 0.2]] and d.y.tolist() == [1.0]


@pytest.mark.parametrize("text,match", [
    ("x1,x2\n0.1,0.2\n", "missing column y"),
    ("x1,y\n0.1\n", "line 2"),
    ("x1,y\n0.1,1\n0.2,abc\n", "line 3"),
    ("x1,y\n0.1,nan\n", "non-finite"),
    ("x1,y\n1.5,0\n", r"\[0, 1\]"),
    ("", "empty"),
])
def test_format_errors(tmp_path, text, match):
    (tmp_path / "d.csv").write_text(text)
    with pytest.raises(DataFormatError, match=match):
        read_dataset_csv(tmp_path / "d.csv")


def test_points_without_y(tmp_path):
    (tmp_path / "p.csv").write_text("x1,x2,x3\n0.1,0.2,0.3\n")
    X, y = read_points_csv(tmp_path / "p.csv", p=3, require_y=False)
    assert y is None and X.shape == (1, 3)
    with pytest.raises(DataFormatError, match="x4"):
        read_points_csv(tmp_path / "p.csv", p=4, require_y=False)


def test_dataset_shape_checks():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    assert Dataset.empty(5).n == 0 and Dataset.empty(5).p == 5
