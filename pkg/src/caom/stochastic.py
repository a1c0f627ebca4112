"""Trace-class noise and the stationary Ornstein-Uhlenbeck forcing process.

The Wiener process w(y, t) is expanded in the Neumann cosine basis
phi_k(y) = cos(k pi y) with mode variances sigma_k^2 = sigma0^2 (1 + (k pi)^2)^(-gamma),
a power-law family chosen so the trace and the OU statistics have closed
forms (the model only requires the trace to be finite). The OU process z
solves dz/dt + A1 z = dw/dt with A1 = -d2/dy2 + (1 + b(y)) under no-flux
boundary conditions, advanced mode-wise by a semi-implicit Euler step.

Randomness is counter-style: one Philox stream per mode, consumed strictly
in mesh order, so any window of a path can be regenerated bit-exactly from
(seed, spectrum, b profile, dt) and ensembles are order-independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .grid import Field1D, inner_1d, trap_weights
from .seeding import seed_split

__all__ = [
    "NoiseSpectrum",
    "OUModeState",
    "OUPath",
    "ReplayPath",
    "OUStabilityWarning",
    "PathRangeError",
    "wiener_increment",
    "wiener_increment_modes",
    "ou_advance",
    "stationary_ou_path",
    "wiener_shift",
    "ou_segments",
    "cosine_matrix",
    "phi_norm_sq",
    "project_cosine",
]

_BURN_EFOLDS = 10.0
_U_LO = 2.0**-53
_U_HI = 1.0 - 2.0**-53


class OUStabilityWarning(UserWarning):
    """Semi-implicit OU step is stable but biased for the fastest modes."""


class PathRangeError(ValueError):
    """Requested window lies outside what this path family can regenerate."""


@dataclass(frozen=True)
class NoiseSpectrum:
    """Diagonal covariance in the cosine basis with power-law eigenvalues."""

    sigma0: float = 0.1
    gamma: float = 1.0
    n_modes: int = 32

    def __post_init__(self):
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be nonnegative")
        if self.gamma <= 0.5:
            raise ValueError("gamma must exceed 1/2 for a trace-class covariance")
        if self.n_modes < 0:
            raise ValueError("n_modes must be nonnegative")

    def mode_variances(self) -> np.ndarray:
        k = np.arange(self.n_modes + 1)
        return self.sigma0**2 * (1.0 + (k * np.pi) ** 2) ** (-self.gamma)

    def trace(self) -> float:
        return float(np.sum(self.mode_variances()))


def cosine_matrix(n_modes: int, y: np.ndarray) -> np.ndarray:
    """Basis matrix Phi[k, i] = cos(k pi y_i)."""
    k = np.arange(n_modes + 1)[:, None]
    return np.cos(k * np.pi * y[None, :])


def phi_norm_sq(n_modes: int) -> np.ndarray:
    """L2(0,1) norms squared of the cosine basis functions."""
    w = np.full(n_modes + 1, 0.5)
    w[0] = 1.0
    return w


def project_cosine(values: np.ndarray, n_modes: int) -> np.ndarray:
    """Trapezoidal projection of a profile onto the first cosine modes."""
    y = np.linspace(0.0, 1.0, values.size)
    phi = cosine_matrix(n_modes, y)
    w = trap_weights(values.size - 1) / (values.size - 1)
    return (phi * w[None, :]) @ values / phi_norm_sq(n_modes)


def _normals_from_uniforms(u: np.ndarray) -> np.ndarray:
    # inverse-CDF sampling: exactly one uniform per normal, so streams are
    # position-indexed and replayable
    return ndtri(np.clip(u, _U_LO, _U_HI))


def wiener_increment_modes(spec: NoiseSpectrum, dt: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Mode coefficients of one Wiener increment over a step of length dt."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0.0:
        return np.zeros(spec.n_modes + 1)
    xi = _normals_from_uniforms(rng.random(spec.n_modes + 1))
    return np.sqrt(spec.mode_variances() * dt) * xi


def wiener_increment(spec: NoiseSpectrum, dt: float, rng: np.random.Generator,
                     n: int = 64) -> Field1D:
    """One spatial Wiener increment sampled on the n+1 nodes of [0, 1]."""
    modes = wiener_increment_modes(spec, dt, rng)
    y = np.linspace(0.0, 1.0, n + 1)
    return Field1D(modes @ cosine_matrix(spec.n_modes, y))


# ---------------------------------------------------------------------------
# OU dynamics in mode space


def _ou_operators(spec: NoiseSpectrum, b_profile: Field1D):
    """Decay rates and the projected coupling of the fluctuating part of b.

    Returns (lambdas, coupling) with lambdas_k = (k pi)^2 + 1 + mean(b) and
    coupling the dense matrix of multiplication by b - mean(b) in the cosine
    basis (None when b is constant, making the mode recursion exact).
    """
    b = b_profile.values
    b_mean = inner_1d(b, np.ones_like(b))
    k = np.arange(spec.n_modes + 1)
    lambdas = (k * np.pi) ** 2 + 1.0 + b_mean
    if np.ptp(b) == 0.0:
        return lambdas, None
    fluct = b - b_mean
    phi = cosine_matrix(spec.n_modes, b_profile.y)
    w = trap_weights(b_profile.n) / b_profile.n
    weighted = phi * (w * fluct)[None, :]
    coupling = (weighted @ phi.T) / phi_norm_sq(spec.n_modes)[:, None]
    return lambdas, coupling


@dataclass
class OUModeState:
    """Mode coefficients of z plus the operators needed to advance them."""

    modes: np.ndarray
    lambdas: np.ndarray
    coupling: np.ndarray | None = None

    def copy(self) -> "OUModeState":
        return OUModeState(self.modes.copy(), self.lambdas, self.coupling)


def ou_advance(state: OUModeState, dt: float,
               increment: "Field1D | np.ndarray") -> OUModeState:
    """One semi-implicit step of dz/dt + A1 z = dw/dt.

    Mode update z_k <- (z_k + dw_k - dt C_k z) / (1 + dt lambda_k); for a
    constant ocean-fraction profile this is the exact implicit-Euler OU
    recursion.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(increment, Field1D):
        dw = project_cosine(increment.values, state.modes.size - 1)
    else:
        dw = np.asarray(increment, dtype=float)
    drift = 0.0 if state.coupling is None else dt * (state.coupling @ state.modes)
    new = (state.modes + dw - drift) / (1.0 + dt * state.lambdas)
    return OUModeState(new, state.lambdas, state.coupling)


# ---------------------------------------------------------------------------
# stationary paths, anchored to an absolute mesh so shifts are bit-exact


class _ModeStreams:
    """One Philox stream per mode, consumed strictly in mesh order."""

    def __init__(self, seed: int, n_modes: int):
        self._rngs = [
            np.random.Generator(np.random.Philox(key=seed_split(seed, "ou-mode", k)))
            for k in range(n_modes + 1)
        ]

    def draw(self, n_steps: int) -> np.ndarray:
        """Standard normals, shape (n_steps, n_modes + 1)."""
        cols = [_normals_from_uniforms(rng.random(n_steps)) for rng in self._rngs]
        return np.column_stack(cols)


class _OUFamily:
    """Shared store for all windows/shifts of one noise realization.

    The mesh is absolute: index i corresponds to time i * dt, and the
    increment consumed between indices i and i+1 is draw number
    (i - i_anchor) of each mode stream. Growing to the right continues the
    same recursion, so overlapping windows agree bit-exactly.
    """

    def __init__(self, spec: NoiseSpectrum, b_profile: Field1D, dt: float,
                 seed: int, i_anchor: int, n_burn: int):
        self.spec = spec
        self.b_profile = b_profile
        self.dt = dt
        self.seed = seed
        self.i_anchor = i_anchor
        self.first_valid = i_anchor + n_burn
        self.lambdas, self.coupling = _ou_operators(spec, b_profile)
        self.phi = cosine_matrix(spec.n_modes, b_profile.y)
        self.phi_nsq = phi_norm_sq(spec.n_modes)
        self.sigma_dt = np.sqrt(spec.mode_variances() * dt)
        self.bias_warning = bool(dt * np.max(self.lambdas) >= 1.0)
        self._streams = _ModeStreams(seed, spec.n_modes)
        self._state = np.zeros(spec.n_modes + 1)
        self._state_index = i_anchor
        # stored modes cover indices [_store_base, _store_base + len - 1];
        # released rows can only be recovered by regenerating the family
        self._store: np.ndarray | None = None
        self._store_base = self.first_valid
        self._advance_to(self.first_valid, record=False)

    # -- recursion ---------------------------------------------------------
    def _run(self, z0: np.ndarray, n_steps: int) -> np.ndarray:
        """Advance n_steps from z0; returns the n_steps states after each step."""
        if n_steps == 0:
            return np.empty((0, z0.size))
        dw = self._streams.draw(n_steps) * self.sigma_dt[None, :]
        lam = self.lambdas
        if self.coupling is None:
            phi_k = 1.0 / (1.0 + self.dt * lam)
            out = np.empty((n_steps, z0.size))
            for k in range(z0.size):
                zi = np.array([phi_k[k] * z0[k]])
                out[:, k], _ = lfilter([phi_k[k]], [1.0, -phi_k[k]], dw[:, k], zi=zi)
            return out
        out = np.empty((n_steps, z0.size))
        z = z0
        denom = 1.0 + self.dt * lam
        for n in range(n_steps):
            z = (z + dw[n] - self.dt * (self.coupling @ z)) / denom
            out[n] = z
        return out

    def _advance_to(self, index: int, record: bool):
        n_steps = index - self._state_index
        if n_steps <= 0:
            return
        block = self._run(self._state, n_steps)
        if record:
            if self._store is None:
                self._store = np.vstack([self._state[None, :], block])
            else:
                self._store = np.vstack([self._store, block])
        self._state = block[-1].copy()
        self._state_index = index

    def ensure(self, i_lo: int, i_hi: int):
        if i_lo < self.first_valid:
            raise PathRangeError(
                f"window starts at index {i_lo}, before the stationary anchor "
                f"{self.first_valid}; regenerate the path with earlier coverage"
            )
        if i_lo < self._store_base:
            raise PathRangeError(
                f"window starts at index {i_lo}, inside a released span "
                f"(store begins at {self._store_base}); regenerate the path"
            )
        if self._store is None:
            self._store = self._state[None, :].copy()
        self._advance_to(max(i_hi, self._state_index), record=True)

    def release_before(self, index: int):
        """Drop stored history before the given mesh index to bound memory."""
        if self._store is None:
            return
        drop = min(index - self._store_base, len(self._store) - 1)
        if drop > 0:
            self._store = self._store[drop:]
            self._store_base += drop

    def modes_window(self, i_lo: int, i_hi: int) -> np.ndarray:
        self.ensure(i_lo, i_hi)
        a = i_lo - self._store_base
        return self._store[a : a + (i_hi - i_lo) + 1]


def _mesh_index(t: float, dt: float, what: str) -> int:
    i = round(t / dt)
    if abs(t - i * dt) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"{what} = {t} is not a multiple of the mesh step {dt}")
    return i


@dataclass
class OUPath:
    """A realization of the stationary OU process on a time mesh.

    ``eval(t)`` returns the profile z(., t); ``shift_m`` records how far the
    family mesh has been relabeled by Wiener shifts (z(t) of this path is
    the family value at index round(t/dt) + shift_m).
    """

    family: _OUFamily
    i0: int
    i1: int
    shift_m: int = 0

    def __post_init__(self):
        self.family.ensure(self.i0 + self.shift_m, self.i1 + self.shift_m)

    @property
    def dt(self) -> float:
        return self.family.dt

    @property
    def t0(self) -> float:
        return self.i0 * self.dt

    @property
    def t1(self) -> float:
        return self.i1 * self.dt

    @property
    def seed(self) -> int:
        return self.family.seed

    @property
    def spec(self) -> NoiseSpectrum:
        return self.family.spec

    @property
    def b_profile(self) -> Field1D:
        return self.family.b_profile

    @property
    def bias_warning(self) -> bool:
        return self.family.bias_warning

    @property
    def modes(self) -> np.ndarray:
        """Mode coefficients on the mesh, shape (n_times, n_modes + 1)."""
        return self.family.modes_window(self.i0 + self.shift_m, self.i1 + self.shift_m)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.i0, self.i1 + 1) * self.dt

    def index_of(self, t: float) -> int:
        i = _mesh_index(t, self.dt, "time")
        if i < self.i0 or i > self.i1:
            raise PathRangeError(f"time {t} outside path window [{self.t0}, {self.t1}]")
        return i - self.i0

    def modes_at(self, t: float) -> np.ndarray:
        return self.modes[self.index_of(t)]

    def eval(self, t: float) -> Field1D:
        return Field1D(self.modes_at(t) @ self.family.phi)

    def values_at_index(self, j: int) -> np.ndarray:
        return self.modes[j] @ self.family.phi

    def norm_sq_at_index(self, j: int) -> float:
        m = self.modes[j]
        return float(np.dot(m * m, self.family.phi_nsq))

    def norm_sq(self, t: float) -> float:
        """Parseval L2 norm squared of z(., t)."""
        return self.norm_sq_at_index(self.index_of(t))

    def norm_sq_series(self) -> np.ndarray:
        m = self.modes
        return (m * m) @ self.family.phi_nsq


@dataclass
class ReplayPath:
    """A deserialized path window: same evaluation interface as OUPath.

    Backed by stored mode arrays only; supports evaluation and simulation
    over its window but not Wiener shifts beyond it.
    """

    spec: NoiseSpectrum
    b_profile: Field1D
    dt: float
    seed: int
    i0: int
    i1: int
    modes: np.ndarray

    def __post_init__(self):
        self._phi = cosine_matrix(self.spec.n_modes, self.b_profile.y)
        self._phi_nsq = phi_norm_sq(self.spec.n_modes)

    @property
    def t0(self) -> float:
        return self.i0 * self.dt

    @property
    def t1(self) -> float:
        return self.i1 * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.i0, self.i1 + 1) * self.dt

    @property
    def bias_warning(self) -> bool:
        return False

    def index_of(self, t: float) -> int:
        i = _mesh_index(t, self.dt, "time")
        if i < self.i0 or i > self.i1:
            raise PathRangeError(f"time {t} outside path window [{self.t0}, {self.t1}]")
        return i - self.i0

    def modes_at(self, t: float) -> np.ndarray:
        return self.modes[self.index_of(t)]

    def eval(self, t: float) -> Field1D:
        return Field1D(self.modes_at(t) @ self._phi)

    def values_at_index(self, j: int) -> np.ndarray:
        return self.modes[j] @ self._phi

    def norm_sq_at_index(self, j: int) -> float:
        m = self.modes[j]
        return float(np.dot(m * m, self._phi_nsq))

    def norm_sq(self, t: float) -> float:
        return self.norm_sq_at_index(self.index_of(t))

    def norm_sq_series(self) -> np.ndarray:
        m = self.modes
        return (m * m) @ self._phi_nsq


def stationary_ou_path(spec: NoiseSpectrum, b_profile: Field1D, t0: float,
                       t1: float, dt: float, seed: int) -> OUPath:
    """Generate a stationary OU path on the mesh t0, t0+dt, ..., t1.

    Stationarity is approximate: the recursion starts from zero a burn-in
    of at least 10 / lambda_min before t0 (relaxation to the stationary law
    within about e^-10 in the slowest mode).
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    i0 = _mesh_index(t0, dt, "t0")
    i1 = _mesh_index(t1, dt, "t1")
    b_min = float(np.min(b_profile.values))
    n_burn = int(np.ceil(_BURN_EFOLDS / (1.0 + b_min) / dt))
    family = _OUFamily(spec, b_profile, dt, seed, i0 - n_burn, n_burn)
    if family.bias_warning:
        warnings.warn(
            f"dt = {dt} is at or above 1/lambda_max = {1.0 / np.max(family.lambdas):.3e}; "
            "the semi-implicit OU step stays stable but its fastest modes are biased",
            OUStabilityWarning,
            stacklevel=2,
        )
    return OUPath(family, i0, i1)


def wiener_shift(path: OUPath, s: float) -> OUPath:
    """Path of t -> z(theta_s omega)(t) = z(omega)(t + s) on the same window.

    Shifting is index relabeling inside the shared family; windows that run
    past the generated range are extended from the stored streams (bit-exact),
    and windows before the stationary anchor raise PathRangeError.
    """
    m = _mesh_index(s, path.dt, "shift")
    return OUPath(path.family, path.i0, path.i1, path.shift_m + m)


def ou_segments(spec: NoiseSpectrum, b_profile: Field1D, t_start: float,
                t_end: float, dt: float, seed: int, chunk_steps: int):
    """Yield consecutive path windows covering [t_start, t_end].

    Streams over one noise realization without materializing the whole mode
    history: history behind the current chunk is released as the iterator
    advances. Adjacent segments share their boundary node, so chunked
    integration reproduces a single long window bit-exactly.
    """
    first = stationary_ou_path(spec, b_profile, t_start,
                               min(t_start + chunk_steps * dt, t_end), dt, seed)
    family = first.family
    yield first
    i_end = _mesh_index(t_end, dt, "t_end")
    i = first.i1
    while i < i_end:
        family.release_before(i)
        j = min(i + chunk_steps, i_end)
        yield OUPath(family, i, j)
        i = j
