import math
from dataclasses import asdict

import numpy as np
import pytest

from tumorsim.config import (
    PRESETS,
    Profile,
    build_grid,
    cell_average,
    init_fields,
    parse_config,
    preset,
    rescale,
    serialize_config,
)
from tumorsim.errors import ConfigError

# Literal experiment parameters; every entry must match the preset exactly.
PRESET_TABLE = {
    "necrotic_core": dict(
        origin=(-3.0, -3.0), n_cells=(384, 384), h=1 / 64,
        model=dict(gamma=10.0, mu=1.0, alpha=1.0, beta=1.0, theta=1.0, k1=8.0, k2=8.0, k3=0.0,
                   c_crit=0.25, lambda_c=20.0, c_supp=1.0, drug_enabled=False),
        n=dict(amplitudes=(0.5, 0.5), centers=((0.7, 0.0), (-0.6, 0.2)), rates=(10.0, 20.0)),
        c0=1.0, c_b=1.0,
    ),
    "drug": dict(
        origin=(-3.0, -3.0), n_cells=(384, 384), h=1 / 64,
        model=dict(gamma=10.0, mu=1.0, k1=8.0, k2=8.0, k3=4.0, c_crit=0.25, q_crit=0.0,
                   lambda_c=20.0, lambda_q=15.0, q_supp=1.0, drug_enabled=True),
        n=dict(amplitudes=(0.5, 0.5), centers=((0.7, 0.0), (-0.6, 0.2)), rates=(10.0, 20.0)),
        c0=1.0, c_b=1.0, q0=1.0, q_b=1.0,
    ),
    "shape_irregular": dict(
        origin=(-5.0, -5.0), n_cells=(640, 640), h=1 / 64,
        model=dict(gamma=30.0, mu=0.1, k1=200.0, k2=200.0, c_crit=0.5, lambda_c=20.0,
                   r_c=0.0001, nu_c=5.0, drug_enabled=False),
        c0=1.0, c_b=1.0,
    ),
    "inhom_boundary": dict(
        origin=(-5.0, -5.0), n_cells=(640, 640), h=1 / 64,
        model=dict(gamma=30.0, mu=0.1, k1=200.0, k2=200.0, c_crit=0.5, lambda_c=20.0,
                   r_c=0.0001, nu_c=5.0, drug_enabled=False),
    ),
}


@pytest.mark.parametrize("name", PRESETS)
def test_preset_literal_table(name):
    cfg, want = preset(name), PRESET_TABLE[name]
    assert cfg.grid.origin == want["origin"]
    assert cfg.grid.n_cells == want["n_cells"]
    assert cfg.grid.h == want["h"]
    model = asdict(cfg.model)
    for key, value in want["model"].items():
        assert model[key] == value, key
    for key, value in want.get("n", {}).items():
        assert getattr(cfg.initial_n, key) == value
    if "c0" in want:
        assert cfg.initial_c == Profile("constant", want["c0"])
        assert (cfg.boundary_c.kind, cfg.boundary_c.value) == ("constant", want["c_b"])
    if "q0" in want:
        assert cfg.initial_q == Profile("constant", want["q0"])
        assert (cfg.boundary_q.kind, cfg.boundary_q.value) == ("constant", want["q_b"])


def test_preset_spot_values():
    assert preset("necrotic_core").model.c_crit == 0.25
    m = preset("shape_irregular").model
    assert (m.nu_c, m.r_c) == (5.0, 0.0001)
    assert preset("drug").model.lambda_q == 15.0


def test_inhomogeneous_nutrient_profile():
    cfg = preset("inhom_boundary")
    y = np.linspace(-5, 5, 11)
    vals = cfg.initial_c((np.zeros_like(y), y))
    np.testing.assert_allclose(vals, 0.8 + 0.5 * np.sin(0.2 * np.pi * y), rtol=1e-15)
    assert cfg.boundary_c.kind == "initial_trace"


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("nope")


@pytest.mark.parametrize("name", PRESETS)
def test_round_trip(name):
    cfg = rescale(preset(name), 1 / 8)
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_fractions_and_comments():
    text = serialize_config(preset("necrotic_core")).replace("grid.h = 0.015625", "grid.h = 1/64  # mesh")
    assert parse_config("# header\n\n" + text).grid.h == 1 / 64


def _error(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    return str(exc.value)


BASE = serialize_config(preset("necrotic_core"))


def test_negative_gamma_rejected_with_line():
    msg = _error(BASE.replace("model.gamma = 10.0", "model.gamma = -1"))
    assert "gamma" in msg and "line 8" in msg


def test_duplicate_key_names_both_lines():
    lines = BASE.splitlines()
    msg = _error("\n".join(lines + ["model.mu = 2"]))
    first = next(i for i, line in enumerate(lines, 1) if line.startswith("model.mu"))
    assert f"line {len(lines) + 1}" in msg and f"line {first}" in msg


def test_unknown_key():
    assert "model.foo" in _error(BASE + "model.foo = 1\n")


def test_missing_required_key():
    assert "grid.h" in _error(BASE.replace("grid.h = 0.015625\n", ""))


def test_type_mismatch():
    assert "line 9" in _error(BASE.replace("model.mu = 1.0", "model.mu = abc"))


def test_malformed_line():
    assert "line 1" in _error("this is not a pair\n" + BASE)


def test_rescale_keeps_domain():
    cfg = rescale(preset("shape_irregular"), 1 / 16)
    assert cfg.grid.n_cells == (160, 160)
    with pytest.raises(ConfigError):
        rescale(preset("necrotic_core"), 0.7)


def test_constant_average_exact(necrotic16):
    grid = build_grid(necrotic16)
    np.testing.assert_array_equal(cell_average(Profile("constant", 0.3), grid), 0.3)


def test_quadrature_symmetry():
    cfg = rescale(preset("shape_irregular"), 1 / 8)
    n0 = cell_average(cfg.initial_n, build_grid(cfg))
    np.testing.assert_allclose(n0, n0[::-1, :], rtol=0, atol=1e-14)
    np.testing.assert_allclose(n0, n0.T, rtol=0, atol=1e-14)


def test_quadrature_mass_converges_second_order():
    prof = preset("necrotic_core").initial_n
    exact = sum(a * math.pi / r for a, r in zip(prof.amplitudes, prof.rates))  # tails beyond the box are < 1e-30
    errs = {}
    for h in (1 / 8, 1 / 16):
        grid = build_grid(rescale(preset("necrotic_core"), h))
        errs[h] = abs(cell_average(prof, grid).sum() * grid.cell_volume - exact)
        assert errs[h] <= h * h
    # the Gauss rule is far better than second order here, so only rounding is left at 1/16
    assert errs[1 / 16] <= errs[1 / 8] / 4 + 1e-15


def test_initial_density_above_homeostatic_rejected(necrotic16):
    necrotic16.initial_n = Profile("constant", 1.2)
    with pytest.raises(ConfigError):
        init_fields(necrotic16)


def test_initial_nutrient_out_of_range(necrotic16):
    necrotic16.initial_c = Profile("constant", 1.5)
    with pytest.raises(ConfigError):
        init_fields(necrotic16)
