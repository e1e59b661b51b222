"""Field builders shared by the test modules."""

import math

import numpy as np

from vns.cli_io import parse_config, parse_config_text
from vns.spectral_core import Grid, ScalarField, VectorField, biot_savart, random_field


def smooth_mu(grid: Grid, lo: float = 0.5, hi: float = 2.0) -> ScalarField:
    """mid + half-range sin x1 sin x2 (in 2 pi units), spanning [lo, hi]."""
    x1, x2 = grid.mesh
    s = 2.0 * math.pi / grid.l
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return ScalarField(grid, mid + half * np.sin(s * x1) * np.sin(s * x2))


def smooth_unit_tau(grid: Grid) -> VectorField:
    """Unit field at a smooth angle phi = 0.4 + 0.7 sin x1 + 0.5 cos(x1 + x2)."""
    x1, x2 = grid.mesh
    s = 2.0 * math.pi / grid.l
    phi = 0.4 + 0.7 * np.sin(s * x1) + 0.5 * np.cos(s * (x1 + x2))
    return VectorField.from_arrays(grid, np.cos(phi), np.sin(phi))


def e1(grid: Grid) -> VectorField:
    return VectorField.from_arrays(grid, np.ones((grid.n, grid.n)), grid.zeros())


def random_omega(grid: Grid, seed: int, slope: float = 2.0) -> ScalarField:
    return ScalarField(grid, random_field(grid, np.random.default_rng(seed), slope))


def random_velocity(grid: Grid, seed: int, slope: float = 2.0) -> VectorField:
    return biot_savart(random_omega(grid, seed, slope))


def config(text: str):
    return parse_config_text(text)


def shipped(path):
    return parse_config(path)


def smooth_omega(grid: Grid, seed: int, kmax: int = 4) -> ScalarField:
    """Random vorticity on integer modes |k| <= kmax, max |omega| = 1."""
    from vns.experiments import band_limit, random_vorticity

    return ScalarField(grid, band_limit(random_vorticity(grid, seed, kmax, 1.0), grid))
