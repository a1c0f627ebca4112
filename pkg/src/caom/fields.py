"""Synthetic smooth states for initial conditions and property tests."""

from __future__ import annotations

import numpy as np

from .grid import Field1D, Field2D, Grid2D
from .model import TransformedState, state_norms

__all__ = ["random_profile", "random_field2d", "random_state", "state_diff_h_sq"]


def random_profile(rng: np.random.Generator, n: int, n_modes: int = 12,
                   decay: float = 2.0) -> np.ndarray:
    """Random truncated cosine series on the n+1 nodes of [0, 1]."""
    k = np.arange(min(n_modes, n) + 1)
    coeff = rng.standard_normal(k.size) * (1.0 + k) ** (-decay)
    y = np.linspace(0.0, 1.0, n + 1)
    return coeff @ np.cos(np.outer(k, np.pi * y))


def random_field2d(rng: np.random.Generator, grid: Grid2D, basis: str = "cos",
                   n_modes: int = 8, decay: float = 2.0) -> np.ndarray:
    """Random truncated cosine (no-flux) or sine (wall-pinned) series."""
    ny, nz = grid.ny, grid.nz
    y, z = grid.y, grid.z
    if basis == "cos":
        ks = np.arange(min(n_modes, ny) + 1)
        ls = np.arange(min(n_modes, nz) + 1)
        by = np.cos(np.outer(y, np.pi * ks))
        bz = np.cos(np.outer(z, np.pi * ls))
    elif basis == "sin":
        ks = np.arange(1, min(n_modes, ny - 1) + 1)
        ls = np.arange(1, min(n_modes, nz - 1) + 1)
        by = np.sin(np.outer(y, np.pi * ks))
        bz = np.sin(np.outer(z, np.pi * ls))
    else:
        raise ValueError(f"unknown basis {basis!r}")
    weight = (1.0 + ks[:, None] ** 2 + ls[None, :] ** 2) ** (-decay / 2.0)
    coeff = rng.standard_normal((ks.size, ls.size)) * weight
    return by @ coeff @ bz.T


def random_state(grid: Grid2D, rng: np.random.Generator, h_sq_target: float,
                 time: float = 0.0, n_modes: int = 8,
                 decay: float = 2.0) -> TransformedState:
    """Random smooth state scaled to a prescribed composite H norm squared."""
    theta = random_profile(rng, grid.ny, n_modes, decay)
    q = random_field2d(rng, grid, "sin", n_modes, decay)
    t = random_field2d(rng, grid, "cos", n_modes, decay)
    s = random_field2d(rng, grid, "cos", n_modes, decay)
    v = TransformedState.make(Field1D(theta), Field2D(grid, q), Field2D(grid, t),
                              Field2D(grid, s), time=time)
    h_sq = state_norms(v).h_sq
    if h_sq_target == 0.0 or h_sq == 0.0:
        scale = 0.0
    else:
        scale = np.sqrt(h_sq_target / h_sq)
    v.theta.values *= scale
    v.q.values *= scale
    v.t_ocean.values *= scale
    v.s_ocean.values *= scale
    v.psi.values *= scale
    return v


def state_diff_h_sq(a: TransformedState, b: TransformedState) -> float:
    from .grid import norm_sq_1d, norm_sq_2d

    g = a.grid
    return (norm_sq_1d(a.theta.values - b.theta.values)
            + norm_sq_2d(a.q.values - b.q.values, g)
            + norm_sq_2d(a.t_ocean.values - b.t_ocean.values, g)
            + norm_sq_2d(a.s_ocean.values - b.s_ocean.values, g))
