"""Plain-text field snapshots and the diagnostics CSV.

A snapshot is a ``key = value`` header terminated by ``---`` followed by the
interior values, one per line, axis 1 varying fastest. Values are written
with ``repr`` so reading them back is bit-exact.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, DiagnosticsRecord
from .errors import OutputError
from .grid import Field, Grid, make_grid

MAGIC = "tumorsim-snapshot"
SNAPSHOT_VERSION = 1


def format_snapshot(f: Field, t: float, step: int) -> str:
    g = f.grid
    header = [
        f"{MAGIC} {SNAPSHOT_VERSION}",
        f"field = {f.name}",
        f"time = {t!r}",
        f"step = {step}",
        f"dim = {g.dim}",
        f"n_cells = {' '.join(str(n) for n in g.n_cells)}",
        f"h = {g.h!r}",
        f"origin = {' '.join(repr(o) for o in g.origin)}",
        f"bc = {g.bc_n} {g.bc_scalar}",
        "order = axis1-fastest",
        "---",
    ]
    body = "\n".join(repr(float(v)) for v in f.interior.ravel(order="F"))
    return "\n".join(header) + "\n" + body + "\n"


def write_snapshot(path: str | Path, f: Field, t: float, step: int) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(format_snapshot(f, t, step))
            fh.flush()
    except OSError as exc:
        raise OutputError(f"cannot write snapshot {path}: {exc}") from exc


def read_snapshot(path: str | Path) -> tuple[Field, float, int]:
    """Returns ``(field, time, step)``; ghosts of the field are zero and unfilled."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise OutputError(f"cannot read snapshot {path}: {exc}") from exc
    if not lines or not lines[0].startswith(MAGIC):
        raise OutputError(f"{path} is not a snapshot file")
    end = lines.index("---")
    meta = dict(line.split(" = ", 1) for line in lines[1:end])
    bc_n, bc_scalar = meta["bc"].split()
    grid: Grid = make_grid(
        int(meta["dim"]),
        tuple(int(x) for x in meta["n_cells"].split()),
        float(meta["h"]),
        tuple(float(x) for x in meta["origin"].split()),
        (bc_n, bc_scalar),
    )
    vals = np.array([float(x) for x in lines[end + 1:]], dtype=np.float64)
    if vals.size != grid.size:
        raise OutputError(f"{path}: expected {grid.size} values, found {vals.size}")
    field = grid.from_interior(vals.reshape(grid.shape, order="F"), meta["field"])
    return field, float(meta["time"]), int(meta["step"])


class DiagnosticsWriter:
    """Appends one CSV row per record and flushes after each."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        try:
            self._fh = open(self.path, "w", newline="")
        except OSError as exc:
            raise OutputError(f"cannot open {path}: {exc}") from exc
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_COLUMNS)

    def write(self, rec: DiagnosticsRecord) -> None:
        self._writer.writerow([repr(v) if isinstance(v, float) else v for v in rec.row()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in rows]
