"""Finite-difference simulator for a nutrient/drug coupled tumor-growth model."""

from .config import RunConfig, init_fields, parse_config, preset, rescale, serialize_config
from .constitutive import ModelParams
from .grid import BoundaryData, Field, Grid, make_grid
from .stepper import Scheme, SimState, macro_step

__version__ = "0.1.0"

__all__ = [
    "BoundaryData", "Field", "Grid", "ModelParams", "RunConfig", "Scheme", "SimState",
    "init_fields", "macro_step", "make_grid", "parse_config", "preset", "rescale",
    "serialize_config",
]
