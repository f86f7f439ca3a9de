import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorsim import constitutive as cst
from tumorsim.config import init_fields, preset
from tumorsim.constitutive import ModelParams
from tumorsim.errors import InvariantViolation
from tumorsim.grid import BoundaryData, fill_ghosts, make_grid
from tumorsim.stepper import (
    Scheme,
    advance_scalar,
    cfl_macro,
    cfl_sub,
    convex_update,
    convex_weights,
    flux_divergence,
    growth_rate,
    initial_state,
    macro_step,
    numerical_flux,
    reaction_diffusion_substep,
    step_cap,
    sub_bounds,
    transport_step,
)

NECROTIC = preset("necrotic_core").model


def neumann_scheme(dim=2, n=6, h=0.25, params=NECROTIC, kind="neumann", **kw):
    grid = make_grid(dim, (n,) * dim, h, 0.0, (kind, kind))
    return Scheme(grid, params, BoundaryData(), **kw)


def uniform_state(scheme, n, c, q):
    shape = scheme.grid.shape
    return initial_state(scheme, np.full(shape, n), np.full(shape, c), np.full(shape, q))


def field(grid, vals, name):
    return fill_ghosts(grid.from_interior(np.asarray(vals, dtype=float), name))


# ---------------------------------------------------------------- flux


def test_flux_of_constant_potential_vanishes(rng):
    g = make_grid(2, (5, 5), 0.2)
    W = field(g, np.full(g.shape, 0.4), "W")
    n = field(g, rng.uniform(size=g.shape), "n")
    for axis in range(2):
        assert not numerical_flux(W, n, axis).any()


def test_flux_hand_values():
    g = make_grid(1, 2, 1.0)
    W = field(g, [0.0, 1.0], "W")
    F = numerical_flux(W, field(g, [1.0, 0.0], "n"), 0)
    assert F[1] == 0.0  # upwind term cancels the downwind pull
    F = numerical_flux(W, field(g, [1.0, 1.0], "n"), 0)
    assert F[1] == -1.0
    assert F[0] == F[2] == 0.0  # mirrored ghosts: no flux through the wall


@pytest.mark.parametrize("kind", ["neumann", "periodic"])
def test_flux_divergence_telescopes(rng, kind):
    g = make_grid(2, (9, 7), 0.1, bc_kinds=(kind, kind))
    W = field(g, rng.normal(size=g.shape), "W")
    n = field(g, rng.uniform(size=g.shape), "n")
    assert abs(flux_divergence(W, n).sum()) <= 1e-10


def test_flux_consistency_order():
    def err(N):
        g = make_grid(1, N, 1.0 / N, 0.0, ("periodic", "periodic"))
        x = g.centers()[0]
        W = field(g, np.sin(2 * np.pi * x), "W")
        n = field(g, 1.5 + np.cos(2 * np.pi * x), "n")
        F = numerical_flux(W, n, 0)[1:]  # faces x_{i+1/2}
        xf = x + 0.5 / N
        exact = -(1.5 + np.cos(2 * np.pi * xf)) * 2 * np.pi * np.cos(2 * np.pi * xf)
        return np.abs(F - exact).max()

    errs = [err(N) for N in (32, 64, 128)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 0.95


# ---------------------------------------------------------------- transport


def test_uniform_state_is_explicit_euler():
    sch = neumann_scheme()
    state = uniform_state(sch, 0.6, 0.8, 0.0)
    phi = cst.Phi(cst.pressure(0.6, NECROTIC), 0.8, 0.0, NECROTIC)
    new = transport_step(state, 0.01, NECROTIC)
    np.testing.assert_allclose(new.interior, 0.6 * (1 + 0.01 * phi), rtol=1e-15)


def test_homeostatic_density_is_fixed():
    sch = neumann_scheme()
    state = uniform_state(sch, 1.0, 1.0, 0.0)
    assert growth_rate(state, NECROTIC).max() == 0.0
    new, _ = macro_step(state, sch)
    assert np.all(new.n.interior == 1.0)


def test_three_cell_brute_force_oracle():
    g = make_grid(1, 3, 0.5)
    W = field(g, [0.1, 0.5, 0.7], "W")
    n = field(g, [0.2, 0.9, 0.4], "n")
    phi = np.array([0.3, -0.2, 0.1])
    dt = 0.05
    w, nv, h = W.values, n.values, 0.5
    expected = []
    for i in range(1, 4):
        fp = (w[i + 1] - w[i]) / h
        fm = (w[i] - w[i - 1]) / h
        lap = (w[i + 1] - 2 * w[i] + w[i - 1]) / h**2
        a1 = 1 - dt / 2 * lap - dt / (2 * h) * (abs(fp) + abs(fm))
        a2 = dt * phi[i - 1] + dt * lap
        bp = dt / (2 * h) * (abs(fp) + fp)
        bm = dt / (2 * h) * (abs(fm) - fm)
        expected.append((a1 + a2) * nv[i] + bp * nv[i + 1] + bm * nv[i - 1])
    sch = Scheme(g, NECROTIC, BoundaryData())
    state = initial_state(sch, n.interior, np.ones(3), np.zeros(3))
    state.W = W
    flux_form = transport_step(state, dt, NECROTIC, phi).interior
    convex = convex_update(n, convex_weights(W, phi, dt))
    np.testing.assert_allclose(flux_form, expected, rtol=1e-14)
    np.testing.assert_allclose(convex, expected, rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.05))
def test_weight_identity(seed, dt):
    rng = np.random.default_rng(seed)
    g = make_grid(2, (6, 5), 0.2)
    W = field(g, rng.uniform(0, 1, g.shape) * 0.1, "W")
    phi = rng.uniform(-1, 1, g.shape)
    w = convex_weights(W, phi, dt)
    np.testing.assert_allclose(w.total(), 1.0, rtol=0, atol=1e-14)
    assert min(b.min() for b in w.beta_plus + w.beta_minus) >= 0
    macro = cfl_macro(W, NECROTIC, 0.9)
    if dt <= macro.dt:
        assert (w.alpha1 + w.alpha2).min() >= -1e-14


def test_mass_conserved_without_growth(rng):
    params = replace(NECROTIC, k1=0.0, k2=0.0)
    sch = neumann_scheme(n=12, h=0.25, params=params)
    g = sch.grid
    state = initial_state(sch, rng.uniform(0, 0.9, g.shape), np.ones(g.shape), np.zeros(g.shape))
    mass0 = state.n.interior.sum()
    for _ in range(20):
        state, _ = macro_step(state, sch)
    assert abs(state.n.interior.sum() - mass0) <= 1e-12 * mass0


def test_zero_density_stays_zero():
    sch = neumann_scheme(kind="neumann")
    sch = replace(sch, grid=make_grid(2, (6, 6), 0.25, 0.0, ("neumann", "dirichlet")),
                  boundary=BoundaryData(c_b=lambda t, x: 1.0, c_inf=1.0, q_b=lambda t, x: 0.0, q_inf=1.0))
    state = uniform_state(sch, 0.0, 0.5, 0.0)
    for _ in range(3):
        state, _ = macro_step(state, sch)
    assert not state.n.interior.any()
    assert state.c.interior.min() > 0.5  # relaxes toward the supply level


def test_splitting_leaves_inert_nutrient_untouched(rng):
    params = replace(NECROTIC, nu_c=0.0, r_c=0.0, lambda_c=0.0)
    sch = neumann_scheme(n=8, params=params)
    g = sch.grid
    c0 = rng.uniform(0, 1, g.shape)
    state = initial_state(sch, rng.uniform(0, 0.9, g.shape), c0, np.zeros(g.shape))
    new, _ = macro_step(state, sch)
    np.testing.assert_array_equal(new.c.interior, c0)


# ---------------------------------------------------------------- step sizes


def test_cfl_flat_potential():
    g = make_grid(2, (4, 4), 0.1)
    W = field(g, np.zeros(g.shape), "W")
    m = cfl_macro(W, NECROTIC, 1.0)
    assert m.transport_bound == pytest.approx(1 / 6, rel=1e-15)
    assert m.pressure_bound == 1.0 / (40.0 * m.n_bar**10)
    assert m.dt <= m.cap <= 1.0 * g.h


def test_cfl_without_growth_is_pressure_limited():
    params = ModelParams(gamma=10, mu=1.0)
    g = make_grid(2, (4, 4), 1.0)
    m = cfl_macro(field(g, np.zeros(g.shape), "W"), params, 0.5)
    assert m.transport_bound == math.inf
    assert m.dt == pytest.approx(min(0.5 * m.pressure_bound, m.cap))


def test_step_cap_self_consistent():
    cap, n_bar = step_cap(NECROTIC, 1.0, 1.0)
    assert n_bar == cst.n_bar_inf(NECROTIC, cap)
    assert cap <= NECROTIC.mu / (4 * NECROTIC.gamma * n_bar**NECROTIC.gamma)


def test_substep_no_diffusion_example():
    params = ModelParams(nu_c=0.0, r_c=1.0, lambda_c=0.0)
    assert sub_bounds(params, 0.1, 0.1, 2, 1.0, "c") == (math.inf, pytest.approx(1.0))
    assert cfl_sub(params, 0.1, 0.1, 2, 1.0, "c", 1.0) == (0.1, 1)


def test_substeps_tile_macro_step():
    params = preset("shape_irregular").model
    dt, h = 1e-3, 1 / 64
    b1, b2 = sub_bounds(params, dt, h, 2, 1.0, "c")
    assert b2 == pytest.approx(h * h / (20 + h * h * (1e-4 + 20)))
    dt_c, N = cfl_sub(params, dt, h, 2, 1.0, "c", 0.9)
    assert N == math.ceil(dt / (0.9 * min(b1, b2)))
    assert dt_c * N == pytest.approx(dt, rel=1e-15)
    assert dt_c <= 0.9 * min(b1, b2)


# ---------------------------------------------------------------- nutrient


def nutrient_scheme(params=NECROTIC):
    g = make_grid(2, (5, 5), 0.2)
    return Scheme(g, params, BoundaryData(c_b=lambda t, x: 1.0, q_b=lambda t, x: 1.0, c_inf=1.0, q_inf=1.0))


def test_substep_fixed_point():
    sch = nutrient_scheme()
    g = sch.grid
    c = reaction_diffusion_substep(g.from_interior(np.ones(g.shape), "c"),
                                   field(g, np.zeros(g.shape), "n"), 0.01, 0.0, sch)
    assert np.all(c.interior == 1.0)


def test_substep_from_empty_nutrient():
    params = replace(NECROTIC, nu_c=0.0, r_c=0.5)
    sch = nutrient_scheme(params)
    g = sch.grid
    c = reaction_diffusion_substep(g.from_interior(np.zeros(g.shape), "c"),
                                   field(g, np.full(g.shape, 0.7), "n"), 0.01, 0.0, sch)
    np.testing.assert_array_equal(c.interior, 0.01 * 0.5 * 1.0)


def test_substep_consumption_example():
    sch = nutrient_scheme()
    g = sch.grid
    dt_c = 1e-3
    c = reaction_diffusion_substep(g.from_interior(np.ones(g.shape), "c"),
                                   field(g, np.ones(g.shape), "n"), dt_c, 0.0, sch)
    np.testing.assert_allclose(c.interior, 1 - 20 * dt_c, rtol=1e-15)


@pytest.mark.parametrize("name", ["necrotic_core", "inhom_boundary", "drug"])
@pytest.mark.parametrize("compiled", [True, False])
def test_fused_substeps_match_single_steps(name, compiled):
    cfg = preset(name)
    cfg.grid = replace(cfg.grid, n_cells=(24, 24), h=0.25, origin=(-3.0, -3.0))
    state, sch = init_fields(cfg)
    sch = replace(sch, compiled=compiled)
    rng = np.random.default_rng(3)
    g = sch.grid
    for which in ("c", "q"):
        k0 = g.from_interior(getattr(state, which).interior * rng.uniform(0.5, 1, g.shape), which)
        ref = k0
        for s in range(15):
            ref = reaction_diffusion_substep(ref, state.n, 2e-3, 0.1 + s * 2e-3, sch)
        got, found = advance_scalar(k0, state.n, 2e-3, 15, 0.1, sch, 0)
        assert not found
        np.testing.assert_array_equal(got.interior, ref.interior)


# ---------------------------------------------------------------- checker


def test_strict_mode_raises_on_oversized_step():
    cfg = preset("necrotic_core")
    cfg.grid = replace(cfg.grid, n_cells=(24, 24), h=0.25)
    cfg.kappa = 1.5
    state, sch = init_fields(cfg)
    with pytest.raises(InvariantViolation) as exc:
        for _ in range(50):
            state, _ = macro_step(state, sch)
    assert exc.value.violations
    assert exc.value.exit_code == 2


def test_lax_mode_records_violations():
    cfg = preset("necrotic_core")
    cfg.grid = replace(cfg.grid, n_cells=(24, 24), h=0.25)
    cfg.kappa, cfg.strict = 1.5, False
    state, sch = init_fields(cfg)
    state, rep = macro_step(state, sch)
    assert {v.check for v in rep.violations} >= {"cfl_pressure"}
