import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tumorsim.diagnostics import DiagnosticsRecord
from tumorsim.errors import OutputError
from tumorsim.grid import make_grid
from tumorsim.snapshot import DiagnosticsWriter, format_snapshot, read_diagnostics, read_snapshot, write_snapshot


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(allow_nan=False, allow_infinity=False)),
       st.floats(0, 10), st.integers(0, 10**6))
def test_snapshot_round_trip_bit_exact(tmp_path_factory, vals, t, step):
    g = make_grid(2, (3, 4), 0.1 + 1e-17, (-0.3, 1 / 3), ("periodic", "neumann"))
    f = g.from_interior(vals, "c")
    path = tmp_path_factory.mktemp("snap") / "c.txt"
    write_snapshot(path, f, t, step)
    back, t2, step2 = read_snapshot(path)
    assert back.grid == g and back.name == "c"
    assert (t2, step2) == (t, step)
    assert back.interior.tobytes() == f.interior.tobytes()


def test_axis_one_varies_fastest():
    g = make_grid(2, (2, 3), 1.0)
    f = g.from_interior(np.arange(6.0).reshape(2, 3), "n")
    body = format_snapshot(f, 0.0, 0).split("---\n")[1].split()
    assert body == ["0.0", "3.0", "1.0", "4.0", "2.0", "5.0"]


def test_snapshot_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("hello\n")
    with pytest.raises(OutputError):
        read_snapshot(bad)
    with pytest.raises(OutputError):
        read_snapshot(tmp_path / "missing.txt")
    g = make_grid(1, 2, 1.0)
    with pytest.raises(OutputError):
        write_snapshot(tmp_path / "no" / "dir.txt", g.zeros("n"), 0.0, 0)


def test_diagnostics_csv_round_trip(tmp_path):
    rec = DiagnosticsRecord(*([0.1 + 1e-17 * i for i in range(17)]))
    rec.step = 7
    with DiagnosticsWriter(tmp_path / "d.csv") as w:
        w.write(rec)
    (row,) = read_diagnostics(tmp_path / "d.csv")
    assert row == dict(zip(row, rec.row()))
    assert (tmp_path / "d.csv").read_text().splitlines()[0].startswith("t,step,n_min")
