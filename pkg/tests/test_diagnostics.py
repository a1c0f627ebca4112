"""Dissipativity ledger, absorbing radii, and the discrete Poincare bound."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from caom.diagnostics import (
    AbsorbingReport,
    EnergyRecorder,
    absorbing_radius_r1,
    absorbing_radius_r2,
    check_dissipativity,
    energy_ledger,
    fit_decay_rate,
    gronwall_envelope,
    poincare_check,
    r1_truncation_bound,
    rolling_r1,
    trace_l2,
)
from caom.fields import random_field2d, random_state
from caom.grid import Field1D, Field2D, Grid2D
from caom.model import default_params, simulate
from caom.seeding import make_generator
from caom.stochastic import NoiseSpectrum, ReplayPath, stationary_ou_path


def flat_path(norm_sq_value: float, t0: float, t1: float, dt: float) -> ReplayPath:
    """Synthetic path whose |z|^2 is constant (mode-0 only)."""
    i0, i1 = round(t0 / dt), round(t1 / dt)
    modes = np.zeros((i1 - i0 + 1, 2))
    modes[:, 0] = np.sqrt(norm_sq_value)
    return ReplayPath(NoiseSpectrum(0.1, 1.0, 1), Field1D(np.full(9, 0.5)),
                      dt, 0, i0, i1, modes)


# ---------------------------------------------------------------------------
# ledger


def test_ledger_defaults_feasible():
    p = default_params(32)
    led = energy_ledger(p, Grid2D(32, 32))
    assert led.feasible
    assert 0.0 < led.alpha < 0.5
    assert led.c10 > 0.0
    assert led.z_coeff == 6.0
    assert led.c24 == led.c10 and led.c25 == led.alpha
    assert abs(led.lam1 - 2 * np.pi**2) < 0.1 * 2 * np.pi**2
    assert led.kappa_q == p.pr * led.lam1


def test_ledger_infeasible_outside_window():
    p = default_params(32)
    led = energy_ledger(replace(p, nu=10.0), Grid2D(32, 32))
    assert not led.feasible


def test_ledger_scales_with_data():
    p = default_params(32)
    small = energy_ledger(p.scaled(data_scale=0.01), Grid2D(32, 32))
    big = energy_ledger(p, Grid2D(32, 32))
    assert small.c10 < 1e-3 * big.c10
    assert small.alpha == big.alpha  # alpha depends on b, nu only


def test_trace_l2():
    spec = NoiseSpectrum(0.2, 1.0, 4)
    var = spec.mode_variances()
    assert abs(trace_l2(spec) - (var[0] + 0.5 * var[1:].sum())) < 1e-15
    assert trace_l2(spec) < spec.trace()


# ---------------------------------------------------------------------------
# absorbing radius R1


def test_r1_zero_noise_floor():
    alpha, c10 = 0.05, 7.0
    t_need = -np.log(1e8) / alpha
    p = flat_path(0.0, np.floor(t_need) - 1, 0.0, 0.05)
    r1 = absorbing_radius_r1(p, alpha, c10)
    assert abs(r1 - 2 * c10 / alpha) <= 1e-3 * (2 * c10 / alpha)
    with pytest.raises(ValueError, match="floor"):
        AbsorbingReport(alpha, c10, r1=0.5 * c10 / alpha, r2=None,
                        entry_time=None, stayed_inside=False,
                        envelope_ok=True, max_envelope_ratio=0.0)


def test_r1_constant_noise_closed_form():
    alpha, c10, z_sq = 0.08, 3.0, 0.4
    t_need = -np.log(1e8) / alpha
    p = flat_path(z_sq, np.floor(t_need) - 1, 0.0, 0.02)
    r1 = absorbing_radius_r1(p, alpha, c10)
    expect = 2 * (c10 + 6 * z_sq) / alpha
    assert abs(r1 - expect) <= 1e-3 * expect


def test_r1_matches_adaptive_quadrature():
    p_model = default_params(16)
    alpha, c10 = 0.05, 5.0
    t0 = np.ceil(np.log(1e8) / alpha / 0.01) * 0.01
    path = stationary_ou_path(p_model.noise, p_model.b, -t0, 0.0, 0.01, 31)
    r1 = absorbing_radius_r1(path, alpha, c10)
    taus = path.times[: path.index_of(0.0) + 1]
    z_sq = path.norm_sq_series()[: path.index_of(0.0) + 1]

    def integrand(tau):
        return np.exp(alpha * tau) * (c10 + 6 * np.interp(tau, taus, z_sq))

    oracle = 0.0
    for a, b in zip(taus[::400], list(taus[400::400]) + [0.0]):
        val, _ = quad(integrand, a, b, limit=200)
        oracle += val
    oracle *= 2.0
    assert abs(r1 - oracle) <= 1e-3 * oracle


def test_r1_requires_coverage():
    p = flat_path(0.0, -5.0, 0.0, 0.05)
    with pytest.raises(ValueError, match="coverage"):
        absorbing_radius_r1(p, 0.05, 1.0)


def test_r1_monotonicity():
    alpha, c10 = 0.06, 2.0
    t0 = np.floor(-np.log(1e8) / alpha) - 1
    base = absorbing_radius_r1(flat_path(0.2, t0, 0.0, 0.05), alpha, c10)
    assert absorbing_radius_r1(flat_path(0.3, t0, 0.0, 0.05), alpha, c10) > base
    assert absorbing_radius_r1(flat_path(0.2, t0, 0.0, 0.05), alpha, c10 + 1) > base
    smaller_alpha = absorbing_radius_r1(
        flat_path(0.2, np.floor(-np.log(1e8) / 0.03) - 1, 0.0, 0.05), 0.03, c10)
    assert smaller_alpha > base


def test_truncation_bound_reported():
    p = flat_path(0.1, -400.0, 0.0, 0.05)
    bound = r1_truncation_bound(p, 0.05, 2.0)
    assert 0 < bound < 1e-6


def test_rolling_r1_tracks_recursion():
    alpha, c10 = 0.5, 1.0
    times = np.linspace(0, 20, 2001)
    z_sq = np.zeros_like(times)
    rho = rolling_r1(times, z_sq, alpha, c10, r1_initial=10.0)
    # converges to the fixed point 2 c10 / alpha
    assert abs(rho[-1] - 2 * c10 / alpha) < 1e-3


# ---------------------------------------------------------------------------
# dissipativity verdicts


def run_recorded(p, grid, h_sq0, t_end, seed=5, stride=20):
    rng = make_generator(seed, "diag-ic")
    v0 = random_state(grid, rng, h_sq0)
    path = stationary_ou_path(p.noise, p.b, 0.0, t_end, 1e-3, seed)
    rec = EnergyRecorder(stride=stride)
    simulate(v0, path, p, t_end, 1e-3, (rec,))
    return rec.record()


def test_envelope_zero_noise_pure_decay():
    grid = Grid2D(16, 16)
    p = default_params(16).scaled(data_scale=0.0, sigma0=0.0)
    record = run_recorded(p, grid, 4.0, 2.0)
    led = energy_ledger(p, grid)
    env = gronwall_envelope(record, led.alpha, led.c10)
    assert np.all(record.htilde_sq <= env * 1.05 + 1e-12)
    # c10 = 0 here, so the envelope is exactly the decaying exponential
    assert abs(led.c10) < 1e-12
    assert np.all(np.diff(record.htilde_sq) <= 1e-12)


def test_check_dissipativity_default_regime():
    grid = Grid2D(32, 32)
    p = default_params(32)
    led = energy_ledger(p, grid)
    record = run_recorded(p, grid, 1.0, 3.0)
    report = check_dissipativity(record, led.alpha, led.c10,
                                 z_coeff=led.z_coeff)
    assert report.envelope_ok
    assert report.entry_time is not None
    assert report.stayed_inside
    assert report.max_envelope_ratio < 1.0


def test_check_dissipativity_large_ic_entry():
    grid = Grid2D(16, 16)
    p = default_params(16)
    led = energy_ledger(p, grid)
    t_need = np.ceil(np.log(1e8) / led.alpha / 0.01) * 0.01
    path = stationary_ou_path(p.noise, p.b, -t_need, 0.0, 0.01, 3)
    r1 = absorbing_radius_r1(path, led.alpha, led.c10, led.z_coeff)
    record = run_recorded(p, grid, 10.0 * r1, 8.0)
    report = check_dissipativity(record, led.alpha, led.c10, r1_initial=r1,
                                 z_coeff=led.z_coeff)
    assert report.envelope_ok
    # analytic envelope crossing: the decaying term must fall to the gap
    # between the ball radius and the envelope's stationary asymptote
    z_bar = float(np.mean(record.z_sq))
    gap = (led.c10 + led.z_coeff * z_bar) / led.alpha
    t_star = np.log(record.htilde_sq[0] / gap) / led.alpha
    assert report.entry_time is not None
    assert report.entry_time <= t_star * 1.2
    assert report.stayed_inside


def test_r2_positive_and_scales_with_ra():
    grid = Grid2D(16, 16)
    p = default_params(16)
    led = energy_ledger(p, grid)
    t_need = np.ceil(np.log(1e8) / min(led.alpha, led.kappa_q) / 0.01) * 0.01
    path = stationary_ou_path(p.noise, p.b, -t_need, 0.0, 0.01, 4)
    r2 = absorbing_radius_r2(path, led, p)
    assert r2 > 0
    led_hot = energy_ledger(replace(p, ra=2 * p.ra), grid)
    r2_hot = absorbing_radius_r2(path, led_hot, replace(p, ra=2 * p.ra))
    assert r2_hot > r2


# ---------------------------------------------------------------------------
# poincare and record consistency


def test_poincare_trivials(grid16):
    assert poincare_check(Field2D(grid16, np.zeros(grid16.shape))) == 0.0
    ratio = poincare_check(Field2D(grid16, np.ones(grid16.shape)))
    assert abs(ratio - 0.5) < 1e-12


def test_poincare_thousand_random_fields():
    g = Grid2D(64, 64)
    rng = make_generator(11, "poincare")
    worst = 0.0
    for _ in range(1000):
        vals = random_field2d(rng, g, "cos", n_modes=10, decay=1.0)
        worst = max(worst, poincare_check(Field2D(g, vals)))
    assert worst <= 1.05


def test_energy_record_component_consistency():
    grid = Grid2D(16, 16)
    p = default_params(16)
    record = run_recorded(p, grid, 1.0, 0.5, stride=10)
    total = record.theta_sq + record.q_sq + record.t_sq + record.s_sq
    assert np.max(np.abs(record.h_sq - total)) <= 1e-12 * np.max(total)
    assert np.all(np.diff(record.times) > 0)


def test_fit_decay_rate():
    t = np.linspace(0, 5, 200)
    series = 3.0 * np.exp(-1.7 * t)
    rate, r2 = fit_decay_rate(t, series)
    assert abs(rate - 1.7) < 1e-6 and r2 > 0.999999
    # symbolic alpha is a valid lower bound for the measured decay
    grid = Grid2D(16, 16)
    p = default_params(16).scaled(data_scale=0.0, sigma0=0.0)
    record = run_recorded(p, grid, 1.0, 1.0, stride=10)
    led = energy_ledger(p, grid)
    emp_rate, _ = fit_decay_rate(record.times, record.htilde_sq)
    assert emp_rate > led.alpha
