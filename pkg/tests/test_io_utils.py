"""CSV formatting and atomic-write helpers."""
import numpy as np

from bohmsim.io_utils import atomic_write_text, format_float, write_csv


def test_format_float_significant_digits():
    assert format_float(1.0) == "1"
    assert format_float(1 / 3) == "0.33333333333333331"
    assert format_float(np.float64(2.5e-17)) == "2.4999999999999999e-17"


def test_masked_and_none_become_empty():
    assert format_float(np.ma.masked) == ""
    assert format_float(None) == ""


def test_write_csv_round_trips_masked_cells(tmp_path):
    path = tmp_path / "t.csv"
    masked = np.ma.masked_array([1.5, 2.5], mask=[False, True])
    write_csv(path, ["a", "b", "c"], [(0, masked[0], masked[1])])
    text = path.read_text()
    assert text == "a,b,c\n0,1.5,\n"


def test_atomic_write_replaces(tmp_path):
    path = tmp_path / "f.txt"
    atomic_write_text(path, "one")
    atomic_write_text(path, "two")
    assert path.read_text() == "two"
    assert list(tmp_path.iterdir()) == [path]
