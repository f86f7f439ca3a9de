"""Optional compiled inner loop for 2-D nutrient/drug substeps.

Mirrors the numpy expression order exactly so both paths give identical
bits; callers fall back to numpy when numba is missing.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

NEUMANN, PERIODIC, DIRICHLET = 0, 1, 2


def _substeps_2d(buf, decay, nu, r, supp, dt_k, h, count, mode, ghost_idx, ghost_vals, mins, maxs):
    nx = buf.shape[0] - 2
    ny = buf.shape[1] - 2
    hh = h * h
    new = np.empty((nx, ny))
    flat = buf.reshape(-1)
    for s in range(count):
        if mode == DIRICHLET:
            for g in range(ghost_idx.shape[0]):
                flat[ghost_idx[g]] = ghost_vals[g]
        else:
            for j in range(ny + 2):
                if mode == NEUMANN:
                    buf[0, j] = buf[1, j]
                    buf[nx + 1, j] = buf[nx, j]
                else:
                    buf[0, j] = buf[nx, j]
                    buf[nx + 1, j] = buf[1, j]
            for i in range(nx + 2):
                if mode == NEUMANN:
                    buf[i, 0] = buf[i, 1]
                    buf[i, ny + 1] = buf[i, ny]
                else:
                    buf[i, 0] = buf[i, ny]
                    buf[i, ny + 1] = buf[i, 1]
        lo = np.inf
        hi = -np.inf
        bad = False
        for i in range(nx):
            for j in range(ny):
                c = buf[i + 1, j + 1]
                acc = 0.0
                acc += buf[i + 2, j + 1] - 2.0 * c + buf[i, j + 1]
                acc += buf[i + 1, j + 2] - 2.0 * c + buf[i + 1, j]
                rhs = nu * (acc / hh) + c * (decay[i, j] * c) + r * (supp - c)
                v = c + dt_k * rhs
                new[i, j] = v
                if v != v:
                    bad = True
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
        for i in range(nx):
            for j in range(ny):
                buf[i + 1, j + 1] = new[i, j]
        mins[s] = np.nan if bad else lo
        maxs[s] = np.nan if bad else hi


substeps_2d = njit(cache=True)(_substeps_2d) if njit is not None else None
