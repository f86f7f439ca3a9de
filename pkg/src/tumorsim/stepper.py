"""Explicit macro step: step-size selection, transport of n, split nutrient/drug substeps.

One macro step from ``(n^m, W^m, c^m, q^m)``:

1. ``W^m`` (already solved for ``p^m = |n^m|^gamma``) gives the transport CFL;
2. ``n^{m+1} = n^m - dt div_h^- F + dt n^m Phi(p^m, c^m, q^m)``;
3. ``N_c`` explicit nutrient substeps with ``n^m`` frozen, then ``N_q`` drug substeps;
4. ``W^{m+1}`` is solved for ``n^{m+1}`` so the returned state is consistent.

Nothing is ever clipped: any breach of the discrete maximum principles is
reported (and raised in strict mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from . import constitutive as cst
from .constitutive import ModelParams
from .elliptic import HelmholtzProblem, SolveInfo, solve, w_bounds_check
from .errors import InvariantViolation, NumericalError
from .grid import BoundaryData, Field, Grid, face_diff, fill_ghosts, fill_ghosts_inplace, laplacian, shifted

INVARIANT_TOL = 1e-12


@dataclass
class Scheme:
    """Everything a macro step needs besides the state itself."""

    grid: Grid
    params: ModelParams
    boundary: BoundaryData | None = None
    kappa: float = 0.9
    tol: float = 1e-10
    max_iter: int | None = None
    strict: bool = True
    preconditioner: str = "spectral"
    compiled: bool = True  # use the numba substep kernel when available


@dataclass
class SimState:
    n: Field
    W: Field
    c: Field
    q: Field
    t: float = 0.0
    step: int = 0


@dataclass
class MacroCFL:
    dt: float
    n_bar: float
    transport_bound: float
    pressure_bound: float
    positivity_bound: float
    cap: float
    max_grad_w: float


@dataclass
class StepSizes:
    dt: float
    dt_c: float
    dt_q: float
    n_sub_c: int
    n_sub_q: int
    kappa: float


@dataclass
class Violation:
    check: str
    step: int
    value: float
    bound: float
    index: tuple | None = None

    def __str__(self):
        where = f" at cell {self.index}" if self.index is not None else ""
        return f"step {self.step}: {self.check} value {self.value!r} vs bound {self.bound!r}{where}"


@dataclass
class StepReport:
    sizes: StepSizes
    cfl: MacroCFL
    solve: SolveInfo
    phi: np.ndarray
    violations: list[Violation] = field(default_factory=list)
    w_min: float = 0.0
    w_max: float = 0.0


# ---------------------------------------------------------------- step sizes


@lru_cache(maxsize=256)
def step_cap(params: ModelParams, h: float, kappa: float) -> tuple[float, float]:
    """``(dt_cap, n_bar)`` for the pressure part of the transport CFL.

    ``n_bar = n_inf + 4 dt S`` grows with ``dt`` while the admissible step
    ``mu / (4 gamma n_bar^gamma)`` shrinks, so the largest self-consistent step
    is the crossing of the two. ``n_bar`` is then evaluated at the actual cap
    ``kappa * min(h, crossing)``; any step not exceeding the cap keeps the
    upper density bound valid.
    """
    S = cst.density_growth_sup(params)
    n_inf, mu, gamma = params.n_inf, params.mu, params.gamma
    upper = mu / (4.0 * gamma * n_inf**gamma)

    def gap(dt):
        return dt - mu / (4.0 * gamma * (n_inf + 4.0 * dt * S) ** gamma)

    if S == 0.0 or gap(upper) <= 0.0:
        crossing = upper
    else:
        crossing = brentq(gap, 0.0, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        crossing *= 1.0 - 1e-12
    cap = kappa * min(h, crossing)
    return cap, cst.n_bar_inf(params, cap)


def max_face_gradient(W: Field) -> float:
    return max(float(np.abs(face_diff(W.values, j, W.grid.h)).max()) for j in range(W.grid.dim))


def cfl_macro(W: Field, params: ModelParams, kappa: float = 0.9) -> MacroCFL:
    """Transport step: ``kappa * min(transport, pressure, positivity)``, never above the cap.

    transport = h / (4 d max|D^+W| + h Phi_sup), pressure = mu / (4 gamma n_bar^gamma),
    positivity = 1 / (2 |inf Phi|) keeps the diagonal weight of the convex
    update nonnegative when the death rate is large.
    """
    if not np.all(np.isfinite(W.interior)):
        raise NumericalError("non-finite velocity potential entering the CFL computation")
    grid = W.grid
    h, d = grid.h, grid.dim
    cap, n_bar = step_cap(params, h, kappa)
    M = max_face_gradient(W)
    denom = 4 * d * M + h * max(cst.phi_sup(params), 0.0)
    transport = h / denom if denom > 0 else math.inf
    pressure = params.mu / (4.0 * params.gamma * n_bar**params.gamma)
    phi_neg = max(0.0, -cst.phi_inf(params, n_bar**params.gamma))
    positivity = 1.0 / (2.0 * phi_neg) if phi_neg > 0 else math.inf
    dt = min(kappa * transport, kappa * pressure, kappa * positivity, cap)
    return MacroCFL(dt, n_bar, transport, pressure, positivity, cap, M)


def sub_bounds(params: ModelParams, dt: float, h: float, dim: int, n_bar: float, which: str):
    """The two substep bounds ``(h dt / nu, h^2 / (2^d nu + h^2 r + h^2 Psi_sup))``."""
    if which == "c":
        nu, r, psi = params.nu_c, params.r_c, cst.psi_c_sup(params, n_bar)
    else:
        nu, r, psi = params.nu_q, params.r_q, cst.psi_q_sup(params, n_bar)
    b1 = h * dt / nu if nu > 0 else math.inf
    denom = 2**dim * nu + h * h * r + h * h * psi
    b2 = h * h / denom if denom > 0 else math.inf
    return b1, b2


def cfl_sub(params: ModelParams, dt: float, h: float, dim: int, n_bar: float,
            which: str, kappa: float = 0.9) -> tuple[float, int]:
    """Substep size and count; ``N = ceil(dt / dt*)`` and ``dt_k = dt / N`` tile the macro step."""
    b1, b2 = sub_bounds(params, dt, h, dim, n_bar, which)
    bound = kappa * min(b1, b2)
    if not math.isfinite(bound) or bound >= dt:
        return dt, 1
    count = max(1, math.ceil(dt / bound))
    while dt / count > bound:  # guard against rounding in the ceiling
        count += 1
    return dt / count, count


# ---------------------------------------------------------------- transport


def numerical_flux(W: Field, n: Field, axis: int) -> np.ndarray:
    """Face flux ``-D^+W (n_i + n_{i+e})/2 - (h/2)|D^+W| D^+n`` on all faces normal to ``axis``.

    Returned array has ``N_axis + 1`` entries along ``axis``; entry ``k`` is the
    face between cells ``k`` and ``k + 1`` (0 and ``N + 1`` being ghosts).
    """
    h = W.grid.h
    dW = face_diff(W.values, axis, h)
    dn = face_diff(n.values, axis, h)
    sl_lo = [slice(1, -1)] * n.values.ndim
    sl_hi = list(sl_lo)
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    avg = 0.5 * (n.values[tuple(sl_lo)] + n.values[tuple(sl_hi)])
    return -dW * avg - 0.5 * h * np.abs(dW) * dn


def flux_divergence(W: Field, n: Field) -> np.ndarray:
    """``div_h^- F`` on interior cells."""
    h = W.grid.h
    div = np.zeros(W.grid.shape)
    for axis in range(W.grid.dim):
        F = numerical_flux(W, n, axis)
        sl_hi = [slice(None)] * F.ndim
        sl_lo = [slice(None)] * F.ndim
        sl_hi[axis] = slice(1, None)
        sl_lo[axis] = slice(0, -1)
        div += (F[tuple(sl_hi)] - F[tuple(sl_lo)]) / h
    return div


def growth_rate(state: SimState, params: ModelParams) -> np.ndarray:
    p = cst.pressure(state.n.interior, params)
    return cst.Phi(p, state.c.interior, state.q.interior, params)


def transport_step(state: SimState, dt: float, params: ModelParams,
                   phi: np.ndarray | None = None) -> Field:
    """``n^{m+1}`` from the flux form of the density update."""
    n = state.n
    if not n.filled:
        n = fill_ghosts(n)
    if phi is None:
        phi = growth_rate(state, params)
    new = n.interior - dt * flux_divergence(state.W, n) + dt * n.interior * phi
    out = n.grid.from_interior(new, "n")
    fill_ghosts_inplace(out.values, n.grid.bc_n)
    out.filled = True
    return out


@dataclass
class ConvexWeights:
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta_plus: list[np.ndarray]
    beta_minus: list[np.ndarray]

    def total(self) -> np.ndarray:
        return self.alpha1 + sum(self.beta_plus) + sum(self.beta_minus)


def convex_weights(W: Field, phi: np.ndarray, dt: float) -> ConvexWeights:
    """Weights of the density update written as a combination of ``n_i`` and its neighbours."""
    grid = W.grid
    h = grid.h
    lap = laplacian(W.values, h)
    alpha1 = 1.0 - 0.5 * dt * lap
    bp, bm = [], []
    for axis in range(grid.dim):
        fwd = (shifted(W.values, axis, 1) - shifted(W.values, axis, 0)) / h
        bwd = (shifted(W.values, axis, 0) - shifted(W.values, axis, -1)) / h
        alpha1 = alpha1 - dt / (2 * h) * (np.abs(fwd) + np.abs(bwd))
        bp.append(dt / (2 * h) * (np.abs(fwd) + fwd))
        bm.append(dt / (2 * h) * (np.abs(bwd) - bwd))
    alpha2 = dt * phi + dt * lap
    return ConvexWeights(alpha1, alpha2, bp, bm)


def convex_update(n: Field, w: ConvexWeights) -> np.ndarray:
    """Density update evaluated through the convex-combination weights."""
    out = (w.alpha1 + w.alpha2) * n.interior
    for axis in range(n.grid.dim):
        out = out + w.beta_plus[axis] * shifted(n.values, axis, 1)
        out = out + w.beta_minus[axis] * shifted(n.values, axis, -1)
    return out


# ---------------------------------------------------------------- nutrient / drug


def _fill_scalar(k: Field, scheme: Scheme, t: float) -> Field:
    kind = scheme.grid.bc_scalar
    if kind == "dirichlet":
        return fill_ghosts(k, "dirichlet", scheme.boundary, t)
    return fill_ghosts(k, kind)


def reaction_diffusion_substep(k: Field, n: Field, dt_k: float, t_sub: float,
                               scheme: Scheme) -> Field:
    """One explicit step of ``k_t - nu Lap k = k Psi(n, k) + r (k_supp - k)`` with ``n`` frozen."""
    params = scheme.params
    if k.name == "c":
        nu, r, supp, psi = params.nu_c, params.r_c, params.c_supp, cst.Psi_c
    elif k.name == "q":
        nu, r, supp, psi = params.nu_q, params.r_q, params.q_supp, cst.Psi_q
    else:
        raise ValueError(f"substep only defined for c and q, got {k.name!r}")
    k = _fill_scalar(k, scheme, t_sub)
    kin = k.interior
    rhs = nu * laplacian(k.values, scheme.grid.h) + kin * psi(n.interior, kin, params) + r * (supp - kin)
    return scheme.grid.from_interior(kin + dt_k * rhs, k.name)


def _scalar_coeffs(params: ModelParams, which: str):
    if which == "c":
        return params.nu_c, params.r_c, params.c_supp, params.lambda_c, params.c_inf
    return params.nu_q, params.r_q, params.q_supp, params.lambda_q, params.q_inf


def advance_scalar(k: Field, n: Field, dt_k: float, count: int, t0: float,
                   scheme: Scheme, step: int) -> tuple[Field, list[Violation]]:
    """``count`` substeps of :func:`reaction_diffusion_substep` in one padded buffer.

    Produces the same values as the single-step function, with the range
    check applied after every substep. In 2-D with numba available the loop
    runs compiled; any range violation reruns it in numpy for the report.
    """
    grid = scheme.grid
    if scheme.compiled and grid.dim == 2 and _kernels.substeps_2d is not None and count > 0:
        out = _advance_compiled(k, n, dt_k, count, t0, scheme)
        if out is not None:
            return out, []
    return _advance_numpy(k, n, dt_k, count, t0, scheme, step)


def _advance_compiled(k: Field, n: Field, dt_k: float, count: int, t0: float,
                      scheme: Scheme) -> Field | None:
    grid = scheme.grid
    nu, r, supp, lam, bound = _scalar_coeffs(scheme.params, k.name)
    kind = grid.bc_scalar
    if kind == "dirichlet":
        if not scheme.boundary.static:
            return None
        mode = _kernels.DIRICHLET
        ghost_idx = np.flatnonzero(grid.ghost_mask)
        ghost_vals = np.ascontiguousarray(scheme.boundary.sample(k.name, t0, grid.ghost_centers))
    else:
        mode = _kernels.NEUMANN if kind == "neumann" else _kernels.PERIODIC
        ghost_idx, ghost_vals = np.zeros(0, dtype=np.int64), np.zeros(0)
    buf = np.ascontiguousarray(k.values, dtype=np.float64).copy()
    decay = np.ascontiguousarray(-lam * n.interior)
    mins, maxs = np.empty(count), np.empty(count)
    _kernels.substeps_2d(buf, decay, float(nu), float(r), float(supp), float(dt_k), float(grid.h),
                         count, mode, ghost_idx, ghost_vals, mins, maxs)
    if not (mins.min() >= -INVARIANT_TOL and maxs.max() <= bound + INVARIANT_TOL):
        return None
    return grid.from_interior(buf[grid.interior], k.name)


def _advance_numpy(k: Field, n: Field, dt_k: float, count: int, t0: float,
                   scheme: Scheme, step: int) -> tuple[Field, list[Violation]]:
    grid = scheme.grid
    nu, r, supp, lam, bound = _scalar_coeffs(scheme.params, k.name)
    kind, h, inner = grid.bc_scalar, grid.h, grid.interior
    decay = -lam * n.interior  # times k gives Psi(n, k)
    buf = k.values.copy()
    ghosts = np.flatnonzero(grid.ghost_mask) if kind == "dirichlet" else None
    found: list[Violation] = []
    for s in range(count):
        if ghosts is None:
            fill_ghosts_inplace(buf, kind)
        else:
            np.put(buf, ghosts, scheme.boundary.sample(k.name, t0 + s * dt_k, grid.ghost_centers))
        kin = buf[inner]
        rhs = nu * laplacian(buf, h) + kin * (decay * kin) + r * (supp - kin)
        buf[inner] = kin + dt_k * rhs
        out = buf[inner]
        lo, hi = out.min(), out.max()
        if not (lo >= -INVARIANT_TOL and hi <= bound + INVARIANT_TOL):
            found += _range_violations(k.name, out, 0.0, bound, step)
    return grid.from_interior(buf[inner], k.name), found


# ---------------------------------------------------------------- checks


def _range_violations(name: str, arr: np.ndarray, lo: float, hi: float, step: int) -> list[Violation]:
    out = []
    kmin, kmax = int(np.argmin(arr)), int(np.argmax(arr))
    vmin, vmax = float(arr.flat[kmin]), float(arr.flat[kmax])
    if not (math.isfinite(vmin) and math.isfinite(vmax)):
        bad = np.unravel_index(int(np.argmax(~np.isfinite(arr))), arr.shape)
        raise NumericalError(f"non-finite {name} at step {step}, cell {tuple(int(i) + 1 for i in bad)}")
    if vmin < lo - INVARIANT_TOL:
        out.append(Violation(f"{name}_min", step, vmin, lo,
                             tuple(int(i) + 1 for i in np.unravel_index(kmin, arr.shape))))
    if vmax > hi + INVARIANT_TOL:
        out.append(Violation(f"{name}_max", step, vmax, hi,
                             tuple(int(i) + 1 for i in np.unravel_index(kmax, arr.shape))))
    return out


def weight_violations(w: ConvexWeights, dim: int, step: int) -> list[Violation]:
    """Conditions the maximum-principle argument draws from the transport CFL."""
    out = []
    a1_min = float(w.alpha1.min())
    if a1_min < 0.5 - INVARIANT_TOL:
        out.append(Violation("alpha1_min", step, a1_min, 0.5))
    diag = float((w.alpha1 + w.alpha2).min())
    if diag < -INVARIANT_TOL:
        out.append(Violation("diagonal_weight_min", step, diag, 0.0))
    b_max = max(float(b.max()) for b in w.beta_plus + w.beta_minus)
    if b_max > 1.0 / (4 * dim) + INVARIANT_TOL:
        out.append(Violation("beta_max", step, b_max, 1.0 / (4 * dim)))
    b_min = min(float(b.min()) for b in w.beta_plus + w.beta_minus)
    if b_min < 0.0:
        out.append(Violation("beta_min", step, b_min, 0.0))
    sum_err = float(np.abs(w.total() - 1.0).max())
    if sum_err > INVARIANT_TOL:
        out.append(Violation("weight_sum", step, sum_err, 0.0))
    return out


# ---------------------------------------------------------------- macro step


def solve_potential(n: Field, scheme: Scheme, guess: Field | None = None,
                    p: Field | None = None) -> tuple[Field, SolveInfo]:
    """Brinkman potential of ``n``; pass ``p`` when the pressure is already at hand."""
    if p is None:
        p = n.grid.from_interior(cst.pressure(n.interior, scheme.params), "p")
    problem = HelmholtzProblem(n.grid, scheme.params.mu, p, scheme.tol, scheme.max_iter,
                               scheme.preconditioner)
    return solve(problem, guess)


def initial_state(scheme: Scheme, n: np.ndarray, c: np.ndarray, q: np.ndarray,
                  t: float = 0.0, step: int = 0) -> SimState:
    """State from interior arrays, with ``W`` solved for the pressure of ``n``."""
    grid = scheme.grid
    nf = grid.from_interior(n, "n")
    fill_ghosts_inplace(nf.values, grid.bc_n)
    nf.filled = True
    W, _ = solve_potential(nf, scheme)
    return SimState(nf, W, grid.from_interior(c, "c"), grid.from_interior(q, "q"), t, step)


def macro_step(state: SimState, scheme: Scheme, dt_max: float | None = None) -> tuple[SimState, StepReport]:
    """Advance one macro step; ``dt_max`` lets the caller land on output times."""
    grid, params, kappa = scheme.grid, scheme.params, scheme.kappa
    step = state.step
    cfl = cfl_macro(state.W, params, kappa)
    dt = cfl.dt if dt_max is None else min(cfl.dt, dt_max)
    if not dt > 0:
        raise NumericalError(f"degenerate time step {dt} at step {step}")

    violations: list[Violation] = []
    # preconditions the density bounds rely on
    if dt > cfl.transport_bound * (1 + 1e-12):
        violations.append(Violation("cfl_transport", step, dt, cfl.transport_bound))
    if dt > cfl.pressure_bound * (1 + 1e-12):
        violations.append(Violation("cfl_pressure", step, dt, cfl.pressure_bound))

    phi = growth_rate(state, params)
    weights = convex_weights(state.W, phi, dt)
    violations += weight_violations(weights, grid.dim, step)
    n_new = transport_step(state, dt, params, phi)
    violations += _range_violations("n", n_new.interior, 0.0, cfl.n_bar, step)

    dt_c, n_c = cfl_sub(params, dt, grid.h, grid.dim, cfl.n_bar, "c", kappa)
    c = state.c
    b1, b2 = sub_bounds(params, dt, grid.h, grid.dim, cfl.n_bar, "c")
    if dt_c > min(b1, b2) * (1 + 1e-12):
        violations.append(Violation("cfl_nutrient", step, dt_c, min(b1, b2)))
    c, found = advance_scalar(c, state.n, dt_c, n_c, state.t, scheme, step)
    violations += found

    q = state.q
    dt_q, n_q = dt, 0
    if params.drug_enabled:
        dt_q, n_q = cfl_sub(params, dt, grid.h, grid.dim, cfl.n_bar, "q", kappa)
        b1, b2 = sub_bounds(params, dt, grid.h, grid.dim, cfl.n_bar, "q")
        if dt_q > min(b1, b2) * (1 + 1e-12):
            violations.append(Violation("cfl_drug", step, dt_q, min(b1, b2)))
        q, found = advance_scalar(q, state.n, dt_q, n_q, state.t, scheme, step)
        violations += found

    p_new = grid.from_interior(cst.pressure(n_new.interior, params), "p")
    W_new, info = solve_potential(n_new, scheme, guess=state.W, p=p_new)
    wb = w_bounds_check(W_new, p_new)
    if not wb.ok:
        violations.append(Violation("w_bounds", step + 1, wb.w_min if wb.w_min < 0 else wb.w_max, wb.p_max))

    if violations and scheme.strict:
        raise InvariantViolation(
            f"{len(violations)} invariant violation(s); first: {violations[0]}", violations
        )
    new_state = SimState(n_new, W_new, c, q, state.t + dt, step + 1)
    sizes = StepSizes(dt, dt_c, dt_q, n_c, n_q, kappa)
    return new_state, StepReport(sizes, cfl, info, phi, violations, wb.w_min, wb.w_max)


def with_params(scheme: Scheme, **changes) -> Scheme:
    return replace(scheme, params=replace(scheme.params, **changes))
