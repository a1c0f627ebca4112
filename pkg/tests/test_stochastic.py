"""Noise and OU process against closed-form statistics (seeded Monte Carlo)."""

import numpy as np
import pytest
from scipy.signal import lfilter

from caom.grid import Field1D
from caom.seeding import make_generator
from caom.stochastic import (
    NoiseSpectrum,
    OUModeState,
    PathRangeError,
    ou_advance,
    ou_segments,
    phi_norm_sq,
    project_cosine,
    stationary_ou_path,
    wiener_increment,
    wiener_increment_modes,
    wiener_shift,
)


def const_b(n=32, value=0.7):
    return Field1D(np.full(n + 1, value))


def lambdas_for(spec, b_mean):
    k = np.arange(spec.n_modes + 1)
    return (k * np.pi) ** 2 + 1.0 + b_mean


# ---------------------------------------------------------------------------
# spectrum


def test_spectrum_trace_and_validation():
    spec = NoiseSpectrum(0.1, 1.0, 8)
    assert abs(spec.trace() - np.sum(spec.mode_variances())) < 1e-15
    # strictly decreasing in gamma at fixed amplitude
    traces = [NoiseSpectrum(0.1, gam, 8).trace() for gam in (0.6, 1.0, 1.5, 2.5)]
    assert all(b < a for a, b in zip(traces, traces[1:]))
    with pytest.raises(ValueError, match="trace-class"):
        NoiseSpectrum(0.1, 0.5, 8)
    with pytest.raises(ValueError):
        NoiseSpectrum(-0.1, 1.0, 8)


# ---------------------------------------------------------------------------
# wiener increments


def test_increment_zero_dt():
    rng = make_generator(1, "w")
    out = wiener_increment(NoiseSpectrum(0.1, 1.0, 4), 0.0, rng, 16)
    assert np.all(out.values == 0.0)


def test_increment_mode_variance_montecarlo():
    spec = NoiseSpectrum(0.2, 1.0, 6)
    dt = 0.05
    rng = make_generator(2, "w")
    draws = np.array([wiener_increment_modes(spec, dt, rng) for _ in range(100_000)])
    var = draws.var(axis=0)
    expect = spec.mode_variances() * dt
    assert np.all(np.abs(var / expect - 1.0) < 0.05)


def test_increment_l2_energy_parseval():
    # E|dw|^2 = dt (sigma_0^2 + sum_k>=1 sigma_k^2 / 2), cosine normalization
    spec = NoiseSpectrum(0.15, 1.0, 6)
    dt = 0.02
    rng = make_generator(3, "w")
    draws = np.array([wiener_increment_modes(spec, dt, rng) for _ in range(100_000)])
    sq = (draws**2 * phi_norm_sq(spec.n_modes)[None, :]).sum(axis=1)
    var = spec.mode_variances()
    expect = dt * (var[0] + 0.5 * var[1:].sum())
    assert abs(np.mean(sq) / expect - 1.0) < 0.05


# ---------------------------------------------------------------------------
# ou advance


def test_ou_zero_noise_closed_form_decay():
    spec = NoiseSpectrum(0.0, 1.0, 4)
    lam = lambdas_for(spec, 0.7)
    dt = 1e-2
    state = OUModeState(np.eye(5)[2].copy(), lam)
    for _ in range(250):
        state = ou_advance(state, dt, np.zeros(5))
    expect = (1.0 + dt * lam[2]) ** (-250)
    assert abs(state.modes[2] - expect) <= 1e-12 * expect


def test_ou_advance_accepts_field_increment():
    spec = NoiseSpectrum(0.0, 1.0, 4)
    lam = lambdas_for(spec, 0.0)
    y = np.linspace(0, 1, 33)
    inc = Field1D(0.3 + 0.2 * np.cos(np.pi * y))
    state = ou_advance(OUModeState(np.zeros(5), lam), 0.1, inc)
    expect0 = 0.3 / (1 + 0.1 * lam[0])
    expect1 = 0.2 / (1 + 0.1 * lam[1])
    assert abs(state.modes[0] - expect0) < 1e-12
    assert abs(state.modes[1] - expect1) < 1e-12


def test_ou_stationary_variance_oracle():
    # semi-implicit AR(1) stationary variance sigma^2 dt / ((1+dt lam)^2 - 1);
    # with dt <= 0.01 / lam it sits within 0.5% of sigma^2 / (2 lam)
    spec = NoiseSpectrum(0.3, 1.0, 3)
    b_mean = 0.7
    lam = lambdas_for(spec, b_mean)
    rng = make_generator(4, "ou-var")
    for k in (0, 2):
        dt = 0.01 / lam[k]
        phi = 1.0 / (1.0 + dt * lam[k])
        sig = np.sqrt(spec.mode_variances()[k] * dt)
        noise = sig * rng.standard_normal(1_000_000)
        z = lfilter([phi], [1.0, -phi], noise)
        discrete_expect = sig**2 / ((1.0 + dt * lam[k]) ** 2 - 1.0)
        cont_expect = spec.mode_variances()[k] / (2 * lam[k])
        assert abs(discrete_expect / cont_expect - 1.0) < 0.01
        var = z[len(z) // 10 :].var()
        assert abs(var / cont_expect - 1.0) < 0.05


def test_ou_variance_monotone_in_b():
    # b = 0 has smaller decay rates, hence larger stationary energy than b = 1
    spec = NoiseSpectrum(0.2, 1.0, 8)
    total0 = np.sum(spec.mode_variances() / (2 * lambdas_for(spec, 0.0))
                    * phi_norm_sq(8))
    total1 = np.sum(spec.mode_variances() / (2 * lambdas_for(spec, 1.0))
                    * phi_norm_sq(8))
    assert total0 > total1
    p0 = stationary_ou_path(spec, const_b(16, 0.0), 0.0, 200.0, 5e-3, 77)
    p1 = stationary_ou_path(spec, const_b(16, 1.0), 0.0, 200.0, 5e-3, 77)
    assert np.mean(p0.norm_sq_series()) > np.mean(p1.norm_sq_series())


# ---------------------------------------------------------------------------
# stationary paths


def test_path_zero_amplitude():
    p = stationary_ou_path(NoiseSpectrum(0.0, 1.0, 4), const_b(8), 0.0, 1.0,
                           0.01, 5)
    assert np.all(p.modes == 0.0)
    assert p.norm_sq(0.5) == 0.0


def test_path_bit_reproducible_and_decorrelated():
    spec = NoiseSpectrum(0.1, 1.0, 8)
    b = const_b(16)
    a1 = stationary_ou_path(spec, b, 0.0, 100.0, 0.01, 123)
    a2 = stationary_ou_path(spec, b, 0.0, 100.0, 0.01, 123)
    assert np.array_equal(a1.modes, a2.modes)
    other = stationary_ou_path(spec, b, 0.0, 100.0, 0.01, 124)
    m0a = a1.modes[:, 0] - a1.modes[:, 0].mean()
    m0b = other.modes[:, 0] - other.modes[:, 0].mean()
    corr = np.dot(m0a, m0b) / np.sqrt(np.dot(m0a, m0a) * np.dot(m0b, m0b))
    assert abs(corr) < 0.05


def test_path_time_average_matches_analytic():
    spec = NoiseSpectrum(0.1, 1.0, 8)
    b = const_b(16, 0.7)
    p = stationary_ou_path(spec, b, 0.0, 1000.0, 1e-2, 42)
    lam = lambdas_for(spec, 0.7)
    expect = np.sum(spec.mode_variances() / (2 * lam) * phi_norm_sq(8))
    emp = np.mean(p.norm_sq_series())
    assert abs(emp / expect - 1.0) < 0.10


def test_path_stationarity_ensemble():
    # mode-0 variance across members at t and t + 100 (spec: 5%, 10^3 members)
    spec = NoiseSpectrum(0.2, 1.5, 2)
    b = const_b(8, 0.5)
    early, late = [], []
    for i in range(1000):
        p = stationary_ou_path(spec, b, 0.0, 110.0, 0.05, seed=9000 + i)
        early.append(p.modes_at(5.0)[0])
        late.append(p.modes_at(105.0)[0])
    v_early = np.var(early)
    v_late = np.var(late)
    assert abs(v_late / v_early - 1.0) < 0.05 * (1 + 1)  # paired-seed comparison


def test_path_eval_matches_cosine_sum():
    spec = NoiseSpectrum(0.1, 1.0, 4)
    b = const_b(16)
    p = stationary_ou_path(spec, b, 0.0, 1.0, 0.01, 3)
    z = p.eval(0.5)
    modes = p.modes_at(0.5)
    y = np.linspace(0, 1, 17)
    manual = sum(modes[k] * np.cos(k * np.pi * y) for k in range(5))
    assert np.max(np.abs(z.values - manual)) < 1e-14
    # parseval norm equals trapezoidal norm for n_modes <= n/2
    from caom.grid import norm_sq_1d

    assert abs(p.norm_sq(0.5) - norm_sq_1d(z.values)) < 1e-14


def test_nonconstant_b_coupling_row_sums():
    # coupling matrix of b - mean(b) annihilates the constant profile's mean
    spec = NoiseSpectrum(0.1, 1.0, 6)
    y = np.linspace(0, 1, 33)
    b = Field1D(0.5 + 0.3 * np.cos(2 * np.pi * y))
    p = stationary_ou_path(spec, b, 0.0, 1.0, 1e-3, 8)
    assert np.all(np.isfinite(p.modes))
    from caom.stochastic import _ou_operators

    lam, coupling = _ou_operators(spec, b)
    assert coupling is not None
    # projection of (b - mean b) * 1 onto mode 0 vanishes
    assert abs(coupling[0, 0]) < 1e-12


# ---------------------------------------------------------------------------
# wiener shift


def test_shift_identity_and_mesh_relation():
    spec = NoiseSpectrum(0.1, 1.0, 4)
    b = const_b(8)
    p = stationary_ou_path(spec, b, 0.0, 10.0, 0.01, 11)
    assert np.array_equal(wiener_shift(p, 0.0).modes, p.modes)
    sh = wiener_shift(p, 2.0)
    for t in (0.0, 1.0, 7.0):
        assert np.array_equal(sh.modes_at(t), p.modes_at(t + 2.0))


def test_shift_composition_and_inverse():
    spec = NoiseSpectrum(0.1, 1.0, 4)
    b = const_b(8)
    p = stationary_ou_path(spec, b, 0.0, 10.0, 0.01, 12)
    back = wiener_shift(wiener_shift(p, 3.0), -3.0)
    assert np.array_equal(back.modes, p.modes)
    ab = wiener_shift(wiener_shift(p, 1.0), 2.0)
    direct = wiener_shift(p, 3.0)
    assert np.array_equal(ab.modes, direct.modes)


def test_shift_extends_right_and_rejects_left():
    spec = NoiseSpectrum(0.1, 1.0, 4)
    b = const_b(8)
    p = stationary_ou_path(spec, b, 0.0, 5.0, 0.01, 13)
    extended = wiener_shift(p, 4.0)  # needs [4, 9]: regenerated from streams
    q = stationary_ou_path(spec, b, 0.0, 9.0, 0.01, 13)
    assert np.array_equal(extended.modes, q.modes[400:])
    with pytest.raises(PathRangeError):
        wiener_shift(p, -1000.0)
    with pytest.raises(ValueError, match="multiple"):
        wiener_shift(p, 0.005)


def test_segments_equal_whole_and_release():
    spec = NoiseSpectrum(0.1, 1.0, 4)
    b = const_b(8)
    whole = stationary_ou_path(spec, b, 0.0, 3.0, 0.01, 21)
    rows = []
    for seg in ou_segments(spec, b, 0.0, 3.0, 0.01, 21, chunk_steps=70):
        rows.append(seg.modes if not rows else seg.modes[1:])
    assert np.array_equal(np.vstack(rows), whole.modes)


def test_bias_warning_flag():
    spec = NoiseSpectrum(0.1, 1.0, 32)
    with pytest.warns(UserWarning, match="stable but"):
        p = stationary_ou_path(spec, const_b(64), 0.0, 0.1, 1e-3, 2)
    assert p.bias_warning
    calm = stationary_ou_path(NoiseSpectrum(0.1, 1.0, 2), const_b(64),
                              0.0, 0.1, 1e-3, 2)
    assert not calm.bias_warning


def test_project_cosine_roundtrip():
    rng = make_generator(5, "proj")
    coeff = rng.standard_normal(9)
    y = np.linspace(0, 1, 33)
    vals = sum(coeff[k] * np.cos(k * np.pi * y) for k in range(9))
    back = project_cosine(vals, 8)
    assert np.max(np.abs(back - coeff)) < 1e-12
