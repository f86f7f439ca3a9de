"""Model parameters and the pointwise constitutive laws.

The growth and consumption terms are the threshold-linear / bilinear family
used in the experiments::

    p          = |n|^gamma
    G(p)       = alpha - beta * p^theta
    g1(c, q)   = k1 (c - c_crit)_+
    g2(c, q)   = k2 (c_crit - c)_+ + k3 (q - q_crit)_+
    Phi        = g1 G(p) - g2
    Psi_c      = -lambda_c n c,   Psi_q = -lambda_q n q

Keeping the family fixed makes every supremum needed by the step-size
bounds computable in closed form (or by a 1-D scan).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError


@dataclass(frozen=True)
class ModelParams:
    gamma: float = 10.0
    mu: float = 1.0
    nu_c: float = 1.0
    nu_q: float = 1.0
    r_c: float = 0.0
    r_q: float = 0.0
    c_supp: float = 1.0
    q_supp: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    theta: float = 1.0
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    c_crit: float = 0.0
    q_crit: float = 0.0
    lambda_c: float = 0.0
    lambda_q: float = 0.0
    c_inf: float = 1.0
    q_inf: float = 1.0
    drug_enabled: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "drug_enabled" and not np.isfinite(v):
                raise ConfigError(f"model.{f.name} must be finite, got {v}")
        if self.gamma < 2:
            raise ConfigError(f"model.gamma must be >= 2, got {self.gamma}")
        if self.mu <= 0:
            raise ConfigError(f"model.mu must be > 0, got {self.mu}")
        for name in ("alpha", "beta", "theta"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"model.{name} must be > 0, got {getattr(self, name)}")
        for name in (
            "nu_c", "nu_q", "r_c", "r_q", "c_supp", "q_supp", "k1", "k2", "k3",
            "c_crit", "q_crit", "lambda_c", "lambda_q", "c_inf", "q_inf",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"model.{name} must be >= 0, got {getattr(self, name)}")
        if self.c_supp > self.c_inf:
            raise ConfigError(f"model.c_supp={self.c_supp} exceeds model.c_inf={self.c_inf}")
        if self.q_supp > self.q_inf:
            raise ConfigError(f"model.q_supp={self.q_supp} exceeds model.q_inf={self.q_inf}")

    @property
    def p_max(self) -> float:
        """Homeostatic pressure P_M, the root of G."""
        return (self.alpha / self.beta) ** (1.0 / self.theta)

    @property
    def n_inf(self) -> float:
        return self.p_max ** (1.0 / self.gamma)

    def as_dict(self) -> dict:
        return asdict(self)


def pressure(n, params: ModelParams):
    return np.abs(n) ** params.gamma


def growth_G(p, params: ModelParams):
    return params.alpha - params.beta * np.power(p, params.theta)


def g1(c, q, params: ModelParams):
    return params.k1 * np.maximum(c - params.c_crit, 0.0)


def g2(c, q, params: ModelParams):
    return params.k2 * np.maximum(params.c_crit - c, 0.0) + params.k3 * np.maximum(
        q - params.q_crit, 0.0
    )


def Phi(p, c, q, params: ModelParams):
    """Net growth rate ``g1(c, q) G(p) - g2(c, q)``."""
    return g1(c, q, params) * growth_G(p, params) - g2(c, q, params)


def Psi_c(n, c, params: ModelParams):
    return -params.lambda_c * n * c


def Psi_q(n, q, params: ModelParams):
    return -params.lambda_q * n * q


def phi_sup(params: ModelParams) -> float:
    """sup of Phi over p >= 0, 0 <= c <= c_inf, 0 <= q <= q_inf.

    G is maximal at p = 0, g1 at c = c_inf, and g2 vanishes at q = 0 with
    c = c_inf >= c_crit (or is smallest there otherwise).
    """
    if params.c_inf >= params.c_crit:
        return params.k1 * (params.c_inf - params.c_crit) * params.alpha
    # c_inf below threshold: g1 == 0 and g2 is smallest at c = c_inf, q = 0
    return -params.k2 * (params.c_crit - params.c_inf)


def phi_inf(params: ModelParams, p_max: float) -> float:
    """inf of Phi over 0 <= p <= p_max and the admissible (c, q) box.

    g1 G(p) is bilinear-monotone, so the extreme sits on a corner: either
    g1 at its largest with G(p_max) (if negative) or g1 = 0; g2 is largest at
    c = 0, q = q_inf.
    """
    g1_max = params.k1 * max(params.c_inf - params.c_crit, 0.0)
    G_min = float(growth_G(p_max, params))
    g2_max = params.k2 * params.c_crit + params.k3 * max(params.q_inf - params.q_crit, 0.0)
    # c below c_crit makes g1 zero and g2 positive, c above makes g2's nutrient part zero
    candidates = [
        -g2_max,
        g1_max * min(G_min, 0.0) - params.k3 * max(params.q_inf - params.q_crit, 0.0),
    ]
    return min(candidates)


def psi_c_sup(params: ModelParams, n_bar: float) -> float:
    return params.lambda_c * n_bar * params.c_inf


def psi_q_sup(params: ModelParams, n_bar: float) -> float:
    return params.lambda_q * n_bar * params.q_inf


@lru_cache(maxsize=64)
def density_growth_sup(params: ModelParams, resolution: int = 1_000_001) -> float:
    """sup of ``p^(1/gamma) Phi(p, c, q)`` over the admissible set.

    Phi <= 0 for p >= P_M, so a dense scan on [0, P_M] at c = c_inf (and q
    making g2 vanish) suffices; the scan maximum is then polished with a
    bounded scalar search around the best sample.
    """
    c, q = params.c_inf, 0.0
    pm = params.p_max

    def f(p):
        return np.power(p, 1.0 / params.gamma) * Phi(p, c, q, params)

    ps = np.linspace(0.0, pm, resolution)
    vals = f(ps)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo, hi = ps[max(k - 1, 0)], ps[min(k + 1, resolution - 1)]
    if hi > lo:
        res = minimize_scalar(lambda p: -f(p), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        best = max(best, float(-res.fun))
    return max(best, 0.0)


def n_bar_inf(params: ModelParams, dt: float) -> float:
    """Upper density bound ``n_inf + 4 dt sup(p^(1/gamma) Phi)`` for step ``dt``."""
    return params.n_inf + 4.0 * dt * density_growth_sup(params)
