"""Structured-grid discretization of the unit square and the unit interval.

Node-centered second-order finite differences. Boundary conditions enter
through ghost nodes synthesized by reflection (even for no-flux fields,
odd for fields vanishing on the wall) or by folding an inhomogeneous flux
into the boundary row. Quadrature is the trapezoidal rule throughout,
which is exact for the salinity-mass invariant and makes the advection
scheme's conservation identities hold to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft as sfft

__all__ = [
    "Grid2D",
    "Field1D",
    "Field2D",
    "BoundarySpec",
    "GridMismatchError",
    "SolverError",
    "NormPair",
    "poisson_solve_dirichlet",
    "arakawa_jacobian",
    "diffusion_apply",
    "trace_top",
    "norms",
    "inner_1d",
    "inner_2d",
    "norm_sq_1d",
    "norm_sq_2d",
    "grad_sq_1d",
    "grad_sq_2d",
    "trap_weights",
    "dirichlet_lambda1",
    "cos_modes_1d",
    "cos_modes_2d",
    "sin_modes_2d",
    "from_cos_modes_1d",
    "from_cos_modes_2d",
    "from_sin_modes_2d",
]

_DENSE_SOLVE_LIMIT = 128 * 128  # direct factorization up to this many cells


class GridMismatchError(ValueError):
    """Fields passed to an operator do not live on the same grid."""


class SolverError(RuntimeError):
    """A linear solve failed to reach its tolerance.

    Attributes:
        residual: max-norm residual achieved before giving up.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Grid2D:
    """Uniform node-centered grid on the unit square, (ny+1) x (nz+1) nodes."""

    ny: int
    nz: int

    def __post_init__(self):
        if self.ny < 4 or self.nz < 4:
            raise ValueError(f"grid must be at least 4x4 cells, got {self.ny}x{self.nz}")

    @property
    def dy(self) -> float:
        return 1.0 / self.ny

    @property
    def dz(self) -> float:
        return 1.0 / self.nz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny + 1, self.nz + 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.ny + 1)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nz + 1)


@dataclass
class Field2D:
    """Scalar field sampled at the nodes of a Grid2D, values[i, j] = f(y_i, z_j)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field2D":
        return Field2D(self.grid, self.values.copy())


@dataclass
class Field1D:
    """Scalar profile on the n+1 nodes of [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("1-D field needs at least two nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def n(self) -> int:
        return self.values.size - 1

    @property
    def dy(self) -> float:
        return 1.0 / self.n

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.values.size)

    def copy(self) -> "Field1D":
        return Field1D(self.values.copy())


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary treatment for ``diffusion_apply``.

    kind: one of "neumann-zero-all", "robin-top", "flux-top", "neumann-1d",
          "dirichlet-zero-all".
    theta, s_o: top Robin data (atmospheric temperature trace and solar
          profile), required for "robin-top"; the top flux is
          s_o + theta - f(., z=1).
    flux: prescribed top flux profile, required for "flux-top".
    """

    kind: str
    theta: np.ndarray | None = None
    s_o: np.ndarray | None = None
    flux: np.ndarray | None = None


class NormPair(NamedTuple):
    l2_sq: float
    grad_sq: float


# ---------------------------------------------------------------------------
# quadrature and inner products


def trap_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def inner_1d(a: np.ndarray, b: np.ndarray) -> float:
    n = a.size - 1
    w = trap_weights(n)
    return float(np.dot(w * a, b)) / n


def inner_2d(a: np.ndarray, b: np.ndarray, grid: Grid2D) -> float:
    wy = trap_weights(grid.ny)
    wz = trap_weights(grid.nz)
    return float(np.einsum("i,j,ij,ij->", wy, wz, a, b)) * grid.dy * grid.dz


def norm_sq_1d(a: np.ndarray) -> float:
    return inner_1d(a, a)


def norm_sq_2d(a: np.ndarray, grid: Grid2D) -> float:
    return inner_2d(a, a, grid)


def grad_sq_1d(a: np.ndarray) -> float:
    da = np.gradient(a, 1.0 / (a.size - 1))
    return inner_1d(da, da)


def grad_sq_2d(a: np.ndarray, grid: Grid2D) -> float:
    dy = np.gradient(a, grid.dy, axis=0)
    dz = np.gradient(a, grid.dz, axis=1)
    return inner_2d(dy, dy, grid) + inner_2d(dz, dz, grid)


def norms(f: "Field1D | Field2D") -> NormPair:
    """Trapezoidal L2 norm squared and gradient seminorm squared."""
    if isinstance(f, Field1D):
        return NormPair(norm_sq_1d(f.values), grad_sq_1d(f.values))
    if isinstance(f, Field2D):
        return NormPair(norm_sq_2d(f.values, f.grid), grad_sq_2d(f.values, f.grid))
    raise TypeError(f"norms() expects a field, got {type(f).__name__}")


# ---------------------------------------------------------------------------
# Poisson solve q = -laplace(psi), psi = 0 on the boundary

_POISSON_CACHE: dict[tuple[int, int], object] = {}


def _poisson_matrix(grid: Grid2D) -> sp.csc_matrix:
    """Matrix of -laplace on interior nodes, Dirichlet walls eliminated."""
    ny, nz = grid.ny, grid.nz
    iy = sp.identity(ny - 1, format="csr")
    iz = sp.identity(nz - 1, format="csr")
    ddy = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(ny - 1, ny - 1)) / grid.dy**2
    ddz = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(nz - 1, nz - 1)) / grid.dz**2
    return (-(sp.kron(ddy, iz) + sp.kron(iy, ddz))).tocsc()


def poisson_solve_dirichlet(q: Field2D) -> Field2D:
    """Solve -laplace(psi) = q with psi = 0 on all four edges.

    Direct sparse factorization (cached per grid) up to 128x128 cells,
    conjugate gradients above. Interior residual is held below 1e-10 in
    max norm either way.
    """
    grid = q.grid
    rhs = q.values[1:-1, 1:-1].reshape(-1)
    psi = np.zeros(grid.shape)
    if rhs.size == 0 or not np.any(rhs):
        return Field2D(grid, psi)
    if grid.ny * grid.nz <= _DENSE_SOLVE_LIMIT:
        key = (grid.ny, grid.nz)
        lu = _POISSON_CACHE.get(key)
        if lu is None:
            lu = spla.splu(_poisson_matrix(grid))
            _POISSON_CACHE[key] = lu
        sol = lu.solve(rhs)
    else:
        mat = _poisson_matrix(grid)
        scale = float(np.max(np.abs(rhs)))
        sol, info = spla.cg(mat, rhs, rtol=1e-12, atol=1e-11 * scale,
                            maxiter=20 * rhs.size)
        if info != 0:
            residual = float(np.max(np.abs(mat @ sol - rhs)))
            raise SolverError("poisson conjugate-gradient solve did not converge", residual)
        residual = float(np.max(np.abs(mat @ sol - rhs)))
        if residual > 1e-10 * max(scale, 1.0):
            raise SolverError("poisson solve residual above tolerance", residual)
    psi[1:-1, 1:-1] = sol.reshape(grid.ny - 1, grid.nz - 1)
    return Field2D(grid, psi)


def dirichlet_lambda1(grid: Grid2D) -> float:
    """Smallest eigenvalue of the discrete Dirichlet -laplace (closed form)."""
    sy = np.sin(np.pi * grid.dy / 2.0)
    sz = np.sin(np.pi * grid.dz / 2.0)
    return 4.0 * sy**2 / grid.dy**2 + 4.0 * sz**2 / grid.dz**2


def _dirichlet_eigs(n: int, h: float) -> np.ndarray:
    k = np.arange(1, n)
    return 4.0 * np.sin(np.pi * k / (2 * n)) ** 2 / h**2


def _neumann_eigs(n: int, h: float) -> np.ndarray:
    k = np.arange(n + 1)
    return -4.0 * np.sin(np.pi * k / (2 * n)) ** 2 / h**2


class PoissonDST:
    """Fast direct Poisson solve via sine transforms (hot-loop variant).

    Same discrete system as ``poisson_solve_dirichlet`` (cross-checked in
    tests); preferred inside time steppers where the solve happens every
    step.
    """

    def __init__(self, grid: Grid2D):
        self.grid = grid
        lam_y = _dirichlet_eigs(grid.ny, grid.dy)
        lam_z = _dirichlet_eigs(grid.nz, grid.dz)
        self._denom = lam_y[:, None] + lam_z[None, :]
        self._norm = 1.0  # scipy idstn inverts dstn exactly

    def solve(self, q: np.ndarray) -> np.ndarray:
        psi = np.zeros_like(q)
        coeff = sfft.dstn(q[1:-1, 1:-1], type=1)
        psi[1:-1, 1:-1] = sfft.idstn(coeff / self._denom, type=1)
        return psi


class HelmholtzDST:
    """Solve (I + c * (-laplace)) x = b with Dirichlet walls, via DST."""

    def __init__(self, grid: Grid2D, c: float):
        lam_y = _dirichlet_eigs(grid.ny, grid.dy)
        lam_z = _dirichlet_eigs(grid.nz, grid.dz)
        self._denom = 1.0 + c * (lam_y[:, None] + lam_z[None, :])

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.zeros_like(b)
        coeff = sfft.dstn(b[1:-1, 1:-1], type=1)
        x[1:-1, 1:-1] = sfft.idstn(coeff / self._denom, type=1)
        return x


class HelmholtzTopBC:
    """Solve (I - c * L) x = b where L is the laplacian with no-flux lateral
    and bottom folds and a "robin" or "flux" top row.

    The y direction diagonalizes in the Neumann cosine basis (DCT-I); the z
    direction uses a dense symmetric eigendecomposition of the folded
    second-difference operator, symmetrized by the trapezoidal weights.
    """

    def __init__(self, grid: Grid2D, c: float, top: str):
        nz, dz = grid.nz, grid.dz
        lz = np.zeros((nz + 1, nz + 1))
        for j in range(1, nz):
            lz[j, j - 1 : j + 2] = (1.0, -2.0, 1.0)
        lz[0, 0], lz[0, 1] = -2.0, 2.0
        lz[nz, nz - 1], lz[nz, nz] = 2.0, -2.0
        lz /= dz**2
        if top == "robin":
            lz[nz, nz] -= 2.0 / dz
        elif top != "flux":
            raise ValueError(f"unknown top treatment {top!r}")
        w = trap_weights(nz)
        sqrt_w = np.sqrt(w)
        sym = sqrt_w[:, None] * lz / sqrt_w[None, :]
        mu, qmat = np.linalg.eigh(0.5 * (sym + sym.T))
        self._fwd = (qmat.T * sqrt_w[None, :])
        self._bwd = (qmat / sqrt_w[:, None])
        lam_y = _neumann_eigs(grid.ny, grid.dy)
        self._denom = 1.0 - c * (lam_y[:, None] + mu[None, :])

    def solve(self, b: np.ndarray) -> np.ndarray:
        a = sfft.dct(b, type=1, axis=0)
        a = a @ self._fwd.T
        a /= self._denom
        a = a @ self._bwd.T
        return sfft.idct(a, type=1, axis=0)


# ---------------------------------------------------------------------------
# Arakawa jacobian with mirror-image halos


def _extend_mirror(a: np.ndarray, parity: str) -> np.ndarray:
    """One-node halo by even/odd reflection about each wall.

    Odd reflection is about the wall value (ghost = 2 wall - inner), which
    coincides with sign reflection for wall-pinned fields and keeps constants
    exactly constant.
    """
    g = np.empty((a.shape[0] + 2, a.shape[1] + 2))
    g[1:-1, 1:-1] = a
    if parity == "even":
        g[0, 1:-1] = a[1, :]
        g[-1, 1:-1] = a[-2, :]
        g[:, 0] = g[:, 2]
        g[:, -1] = g[:, -3]
    else:
        g[0, 1:-1] = 2.0 * a[0, :] - a[1, :]
        g[-1, 1:-1] = 2.0 * a[-1, :] - a[-2, :]
        g[:, 0] = 2.0 * g[:, 1] - g[:, 2]
        g[:, -1] = 2.0 * g[:, -2] - g[:, -3]
    return g


def _arakawa_core_numpy(F: np.ndarray, P: np.ndarray, scale: float) -> np.ndarray:
    # grouped-by-f form of (J++ + J+x + Jx+) / 3; one term per f neighbor
    a = P[:, 2:] - P[:, :-2]          # p_north - p_south, on extended columns
    b = P[2:, :] - P[:-2, :]          # p_east - p_west, on extended rows
    pc = P[1:-1, 1:-1]
    pn, ps = P[1:-1, 2:], P[1:-1, :-2]
    pe, pw = P[2:, 1:-1], P[:-2, 1:-1]
    del pc
    out = F[2:, 1:-1] * (a[1:-1, :] + a[2:, :])
    out -= F[:-2, 1:-1] * (a[1:-1, :] + a[:-2, :])
    out -= F[1:-1, 2:] * (b[:, 1:-1] + b[:, 2:])
    out += F[1:-1, :-2] * (b[:, 1:-1] + b[:, :-2])
    out += F[2:, 2:] * (pn - pe)
    out += F[:-2, :-2] * (ps - pw)
    out += F[:-2, 2:] * (pw - pn)
    out += F[2:, :-2] * (pe - ps)
    out *= scale
    return out


try:  # numba kernel mirrors _arakawa_core_numpy term for term (bit-compatible)
    import numba

    @numba.njit(cache=True, fastmath=False)
    def _arakawa_core_numba(F, P, scale):  # pragma: no cover - jitted
        ny2, nz2 = F.shape
        out = np.empty((ny2 - 2, nz2 - 2))
        for i in range(1, ny2 - 1):
            for j in range(1, nz2 - 1):
                ac = P[i, j + 1] - P[i, j - 1]
                ae = P[i + 1, j + 1] - P[i + 1, j - 1]
                aw = P[i - 1, j + 1] - P[i - 1, j - 1]
                bc = P[i + 1, j] - P[i - 1, j]
                bn = P[i + 1, j + 1] - P[i - 1, j + 1]
                bs = P[i + 1, j - 1] - P[i - 1, j - 1]
                acc = F[i + 1, j] * (ac + ae)
                acc -= F[i - 1, j] * (ac + aw)
                acc -= F[i, j + 1] * (bc + bn)
                acc += F[i, j - 1] * (bc + bs)
                acc += F[i + 1, j + 1] * (P[i, j + 1] - P[i + 1, j])
                acc += F[i - 1, j - 1] * (P[i, j - 1] - P[i - 1, j])
                acc += F[i - 1, j + 1] * (P[i - 1, j] - P[i, j + 1])
                acc += F[i + 1, j - 1] * (P[i + 1, j] - P[i, j - 1])
                out[i - 1, j - 1] = acc * scale
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def arakawa_values(f: np.ndarray, psi: np.ndarray, grid: Grid2D,
                   f_parity: str = "even") -> np.ndarray:
    """Raw-array Arakawa jacobian J(f, psi) = f_y psi_z - f_z psi_y.

    Mirror-image halos (f even for no-flux fields, odd for wall-pinned
    fields; psi always odd, consistent with psi = 0 and free slip) make
    the trapezoidal inner products <J, f>, <J, psi> and the integral of J
    vanish to rounding error on the closed square.
    """
    F = _extend_mirror(f, f_parity)
    P = _extend_mirror(psi, "odd")
    scale = 1.0 / (12.0 * grid.dy * grid.dz)
    if _HAVE_NUMBA:
        return _arakawa_core_numba(F, P, scale)
    return _arakawa_core_numpy(F, P, scale)


def arakawa_jacobian(f: Field2D, psi: Field2D, f_parity: str = "even") -> Field2D:
    """Energy/enstrophy-conserving discrete jacobian J(f, psi)."""
    if f.grid != psi.grid:
        raise GridMismatchError("jacobian arguments live on different grids")
    if f_parity not in ("even", "odd"):
        raise ValueError(f"unknown field parity {f_parity!r}")
    return Field2D(f.grid, arakawa_values(f.values, psi.values, f.grid, f_parity))


# ---------------------------------------------------------------------------
# diffusion with boundary conditions folded through ghost nodes


def _ghost_pad_1d(a: np.ndarray) -> np.ndarray:
    g = np.empty(a.size + 2)
    g[1:-1] = a
    g[0] = a[1]
    g[-1] = a[-2]
    return g


def laplacian_1d_neumann(a: np.ndarray) -> np.ndarray:
    n = a.size - 1
    g = _ghost_pad_1d(a)
    return (g[:-2] - 2.0 * g[1:-1] + g[2:]) * n * n


def diffusion_values(f: np.ndarray, grid: Grid2D, bc: BoundarySpec) -> np.ndarray:
    """Discrete laplacian of a 2-D node array with the given boundary folds."""
    dy2 = grid.dy**2
    dz2 = grid.dz**2
    if bc.kind == "dirichlet-zero-all":
        out = np.zeros_like(f)
        out[1:-1, 1:-1] = (
            (f[2:, 1:-1] - 2.0 * f[1:-1, 1:-1] + f[:-2, 1:-1]) / dy2
            + (f[1:-1, 2:] - 2.0 * f[1:-1, 1:-1] + f[1:-1, :-2]) / dz2
        )
        return out

    g = np.empty((f.shape[0] + 2, f.shape[1] + 2))
    g[1:-1, 1:-1] = f
    # lateral walls: no flux
    g[0, 1:-1] = f[1, :]
    g[-1, 1:-1] = f[-2, :]
    # bottom: no flux
    g[1:-1, 0] = f[:, 1]
    # top ghost by boundary kind
    if bc.kind == "neumann-zero-all":
        g[1:-1, -1] = f[:, -2]
    elif bc.kind == "robin-top":
        if bc.theta is None or bc.s_o is None:
            raise ValueError("robin-top needs theta and s_o profiles")
        fluxtop = bc.s_o + bc.theta - f[:, -1]
        g[1:-1, -1] = f[:, -2] + 2.0 * grid.dz * fluxtop
    elif bc.kind == "flux-top":
        if bc.flux is None:
            raise ValueError("flux-top needs a flux profile")
        g[1:-1, -1] = f[:, -2] + 2.0 * grid.dz * bc.flux
    else:
        raise ValueError(f"unknown boundary spec {bc.kind!r}")
    # corner ghosts are never read by the 5-point stencil
    g[0, 0] = g[0, -1] = g[-1, 0] = g[-1, -1] = 0.0
    c = g[1:-1, 1:-1]
    return (g[2:, 1:-1] - 2.0 * c + g[:-2, 1:-1]) / dy2 + (
        g[1:-1, 2:] - 2.0 * c + g[1:-1, :-2]
    ) / dz2


def diffusion_apply(f: "Field1D | Field2D", bc: BoundarySpec) -> "Field1D | Field2D":
    """Second-order discrete laplacian (or d2/dy2 in 1-D) with BCs folded in."""
    if isinstance(f, Field1D):
        if bc.kind != "neumann-1d":
            raise ValueError(f"boundary spec {bc.kind!r} does not apply to 1-D fields")
        return Field1D(laplacian_1d_neumann(f.values))
    if not isinstance(f, Field2D):
        raise TypeError(f"diffusion_apply expects a field, got {type(f).__name__}")
    if bc.kind == "neumann-1d":
        raise ValueError("neumann-1d applies to 1-D fields only")
    return Field2D(f.grid, diffusion_values(f.values, f.grid, bc))


def trace_top(f: Field2D) -> Field1D:
    """Restriction of a 2-D field to the top boundary z = 1."""
    return Field1D(f.values[:, -1].copy())


# ---------------------------------------------------------------------------
# mode transforms (cosine basis for no-flux fields, sine for wall-pinned)


def cos_modes_1d(a: np.ndarray) -> np.ndarray:
    return sfft.dct(a, type=1)


def from_cos_modes_1d(c: np.ndarray) -> np.ndarray:
    return sfft.idct(c, type=1)


def cos_modes_2d(a: np.ndarray) -> np.ndarray:
    return sfft.dctn(a, type=1)


def from_cos_modes_2d(c: np.ndarray) -> np.ndarray:
    return sfft.idctn(c, type=1)


def sin_modes_2d(a: np.ndarray) -> np.ndarray:
    """DST-I coefficients of the interior nodes (walls are pinned to zero)."""
    return sfft.dstn(a[1:-1, 1:-1], type=1)


def from_sin_modes_2d(c: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape)
    out[1:-1, 1:-1] = sfft.idstn(c, type=1)
    return out
