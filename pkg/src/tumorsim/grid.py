"""Uniform cell-centered grids, ghost-padded fields and difference operators.

Cell ``i = (i_1, ..., i_d)`` with ``1 <= i_j <= N_j`` has its center at
``origin + (i - 1/2) h``. Field arrays carry one ghost layer per face, so the
array index along each axis runs ``0 .. N_j + 1`` and the interior is
``1 .. N_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

FIELD_NAMES = ("n", "W", "p", "c", "q")
TRANSPORT_BCS = ("neumann", "periodic")
SCALAR_BCS = ("dirichlet", "neumann", "periodic")


@dataclass(frozen=True)
class Grid:
    dim: int
    n_cells: tuple[int, ...]
    h: float
    origin: tuple[float, ...]
    bc_n: str = "neumann"
    bc_scalar: str = "dirichlet"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_cells

    @property
    def padded_shape(self) -> tuple[int, ...]:
        return tuple(n + 2 for n in self.n_cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def extent(self) -> tuple[tuple[float, float], ...]:
        return tuple((o, o + n * self.h) for o, n in zip(self.origin, self.n_cells))

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    def axis_centers(self, axis: int, ghosts: bool = False) -> np.ndarray:
        """Cell-center coordinates along one axis (optionally with the ghost cells)."""
        n = self.n_cells[axis]
        idx = np.arange(0, n + 2) if ghosts else np.arange(1, n + 1)
        return self.origin[axis] + (idx - 0.5) * self.h

    def centers(self, ghosts: bool = False) -> tuple[np.ndarray, ...]:
        axes = [self.axis_centers(j, ghosts) for j in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def ghost_mask(self) -> np.ndarray:
        mask = np.ones(self.padded_shape, dtype=bool)
        mask[self.interior] = False
        return mask

    @cached_property
    def ghost_centers(self) -> tuple[np.ndarray, ...]:
        """Coordinates of every ghost cell, in ``ghost_mask`` order."""
        return tuple(x[self.ghost_mask] for x in self.centers(ghosts=True))

    def zeros(self, name: str) -> "Field":
        return Field(self, np.zeros(self.padded_shape), name)

    def from_interior(self, values: np.ndarray, name: str) -> "Field":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.shape:
            raise ValueError(f"interior shape {values.shape} != grid shape {self.shape}")
        padded = np.zeros(self.padded_shape)
        padded[self.interior] = values
        return Field(self, padded, name)


def make_grid(
    dim: int,
    n_cells: int | Sequence[int],
    h: float,
    origin: float | Sequence[float] = 0.0,
    bc_kinds: tuple[str, str] = ("neumann", "dirichlet"),
) -> Grid:
    """Build a uniform grid; ``bc_kinds`` is ``(bc for n and W, bc for c and q)``."""
    if dim not in (1, 2, 3):
        raise ConfigError(f"grid dimension must be 1, 2 or 3, got {dim}")
    if np.isscalar(n_cells):
        n_cells = (int(n_cells),) * dim
    if np.isscalar(origin):
        origin = (float(origin),) * dim
    n_cells = tuple(int(n) for n in n_cells)
    origin = tuple(float(o) for o in origin)
    if len(n_cells) != dim or len(origin) != dim:
        raise ConfigError("n_cells and origin must have one entry per axis")
    if not h > 0 or not np.isfinite(h):
        raise ConfigError(f"mesh width must be positive, got {h}")
    if min(n_cells) < 2:
        raise ConfigError(f"need at least 2 cells per axis, got {n_cells}")
    bc_n, bc_scalar = bc_kinds
    if bc_n not in TRANSPORT_BCS:
        raise ConfigError(f"bc for n/W must be one of {TRANSPORT_BCS}, got {bc_n!r}")
    if bc_scalar not in SCALAR_BCS:
        raise ConfigError(f"bc for c/q must be one of {SCALAR_BCS}, got {bc_scalar!r}")
    return Grid(dim, n_cells, float(h), origin, bc_n, bc_scalar)


@dataclass(eq=False)
class Field:
    """Cell-centered scalar with a one-cell ghost layer."""

    grid: Grid
    values: np.ndarray
    name: str
    filled: bool = False

    def __post_init__(self):
        if self.name not in FIELD_NAMES:
            raise ValueError(f"unknown field name {self.name!r}")
        if self.values.shape != self.grid.padded_shape:
            raise ValueError(f"values shape {self.values.shape} != {self.grid.padded_shape}")

    @property
    def interior(self) -> np.ndarray:
        return self.values[self.grid.interior]

    def copy(self, name: str | None = None) -> "Field":
        return Field(self.grid, self.values.copy(), name or self.name, self.filled)

    def bc_kind(self) -> str:
        return self.grid.bc_n if self.name in ("n", "W", "p") else self.grid.bc_scalar


BoundaryFunction = Callable[[float, tuple[np.ndarray, ...]], "np.ndarray | float"]


@dataclass
class BoundaryData:
    """Dirichlet data for the nutrient and the drug as functions of ``(t, coords)``."""

    c_b: BoundaryFunction | None = None
    q_b: BoundaryFunction | None = None
    c_inf: float = np.inf
    q_inf: float = np.inf
    static: bool = False  # both functions independent of t: samples are cached
    _cache: dict = field(default_factory=dict, repr=False)

    def sample(self, name: str, t: float, coords: tuple[np.ndarray, ...]) -> np.ndarray:
        key = (name, id(coords[0]), coords[0].shape)
        if self.static and key in self._cache:
            return self._cache[key]
        fn, bound = (self.c_b, self.c_inf) if name == "c" else (self.q_b, self.q_inf)
        if fn is None:
            raise ConfigError(f"no Dirichlet boundary function for field {name!r}")
        vals = np.broadcast_to(np.asarray(fn(t, coords), dtype=np.float64), coords[0].shape)
        if vals.size and (vals.min() < 0 or vals.max() > bound):
            raise ConfigError(
                f"boundary data for {name} leaves [0, {bound}] at t={t}: "
                f"range [{vals.min()}, {vals.max()}]"
            )
        if self.static:
            self._cache[key] = vals
        return vals


def _axis_slice(dim: int, axis: int, index) -> tuple:
    sl = [slice(None)] * dim
    sl[axis] = index
    return tuple(sl)


def fill_ghosts_inplace(values: np.ndarray, kind: str) -> None:
    """Neumann (copy adjacent interior) or periodic (wrap) ghost fill, in place.

    Axes are processed in order over the full padded extent, so corner ghosts
    end up consistent as well.
    """
    dim = values.ndim
    for axis in range(dim):
        lo, hi = _axis_slice(dim, axis, 0), _axis_slice(dim, axis, -1)
        if kind == "neumann":
            values[lo] = values[_axis_slice(dim, axis, 1)]
            values[hi] = values[_axis_slice(dim, axis, -2)]
        elif kind == "periodic":
            values[lo] = values[_axis_slice(dim, axis, -2)]
            values[hi] = values[_axis_slice(dim, axis, 1)]
        else:
            raise ValueError(f"unsupported in-place ghost kind {kind!r}")


def fill_ghosts(
    f: Field,
    kind: str | None = None,
    boundary_data: BoundaryData | None = None,
    time: float | None = None,
) -> Field:
    """Return a copy of ``f`` with ghosts filled for boundary ``kind``.

    ``dirichlet`` sets each ghost to the boundary function sampled at the
    ghost-cell center at ``time``.
    """
    kind = kind or f.bc_kind()
    out = f.copy()
    if kind in ("neumann", "periodic"):
        fill_ghosts_inplace(out.values, kind)
    elif kind == "dirichlet":
        if boundary_data is None:
            raise ConfigError(f"Dirichlet ghost fill for {f.name!r} requires boundary data")
        if f.name not in ("c", "q"):
            raise ConfigError(f"Dirichlet boundary is only defined for c and q, not {f.name!r}")
        grid = f.grid
        out.values[grid.ghost_mask] = boundary_data.sample(
            f.name, 0.0 if time is None else time, grid.ghost_centers
        )
    else:
        raise ConfigError(f"unknown boundary kind {kind!r}")
    out.filled = True
    return out


# Raw-array stencils on padded arrays; results are interior-shaped.


def shifted(values: np.ndarray, axis: int, k: int) -> np.ndarray:
    """Interior-shaped view of ``values`` displaced by ``k`` cells along ``axis``."""
    sl = [slice(1, -1)] * values.ndim
    end = values.shape[axis] - 1 + k
    sl[axis] = slice(1 + k, end if end != 0 else None)
    return values[tuple(sl)]


def forward_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (shifted(values, axis, 1) - shifted(values, axis, 0)) / h


def backward_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (shifted(values, axis, 0) - shifted(values, axis, -1)) / h


def face_diff(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """``D_j^+`` on every face normal to ``axis``, boundary faces included.

    Shape has ``N_j + 1`` entries along ``axis``; entry ``k`` is the face
    between cells ``k`` and ``k + 1`` (cell 0 being the ghost).
    """
    sl_lo = [slice(1, -1)] * values.ndim
    sl_hi = [slice(1, -1)] * values.ndim
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    return (values[tuple(sl_hi)] - values[tuple(sl_lo)]) / h


def laplacian(values: np.ndarray, h: float) -> np.ndarray:
    center = shifted(values, 0, 0)
    acc = np.zeros(center.shape)
    for axis in range(values.ndim):
        acc += shifted(values, axis, 1) - 2.0 * center + shifted(values, axis, -1)
    return acc / (h * h)


def _require_filled(f: Field) -> None:
    assert f.filled, f"ghost layer of field {f.name!r} is not filled"


def _wrap(grid: Grid, interior: np.ndarray, name: str) -> Field:
    out = grid.zeros(name)
    out.values[grid.interior] = interior
    return out


def diff_forward(f: Field, axis: int) -> Field:
    """``D_j^+ f`` on interior cells (ghosts of the result are left at zero)."""
    _require_filled(f)
    return _wrap(f.grid, forward_diff(f.values, axis, f.grid.h), f.name)


def diff_backward(f: Field, axis: int) -> Field:
    _require_filled(f)
    return _wrap(f.grid, backward_diff(f.values, axis, f.grid.h), f.name)


def laplace_h(f: Field) -> Field:
    """Standard ``(2d+1)``-point discrete Laplacian on interior cells."""
    _require_filled(f)
    return _wrap(f.grid, laplacian(f.values, f.grid.h), f.name)
