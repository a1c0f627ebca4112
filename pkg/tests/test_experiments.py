"""Experiment drivers on small fast configurations.

The full-size acceptance runs live in test_acceptance.py; here each driver
is exercised on reduced grids/horizons with its trivial cases and oracles.
"""

from dataclasses import replace

import numpy as np
import pytest

from caom.experiments import (
    ExperimentConfig,
    determining_modes,
    ergodicity_check,
    fixed_point_contraction,
    pullback_attractor,
    small_data_params,
    small_data_suite,
    theta_feedback_bound,
)
from caom.grid import Field1D, Grid2D
from caom.model import default_params
from caom.seeding import seed_split
from caom.stochastic import NoiseSpectrum


def make_cfg(n=16, n_seeds=3, master=7, horizons=(), params=None, dt=1e-3,
             kind="test"):
    return ExperimentConfig(
        params=params if params is not None else default_params(n),
        grid=Grid2D(n, n),
        dt=dt,
        ensemble_size=n_seeds,
        seeds=[seed_split(master, kind, i) for i in range(n_seeds)],
        horizons=list(horizons),
        config_hash="testcfg",
    )


def quiet_params(n):
    return default_params(n).scaled(data_scale=0.0, sigma0=0.0)


def test_config_invariants():
    with pytest.raises(ValueError, match="seeds"):
        ExperimentConfig(default_params(16), Grid2D(16, 16), 1e-3, 2, [1],
                         config_hash="x")
    with pytest.raises(ValueError, match="horizons"):
        make_cfg(horizons=(4.0, 2.0))
    with pytest.raises(ValueError, match="grid"):
        ExperimentConfig(default_params(32), Grid2D(16, 16), 1e-3, 1, [1])


# ---------------------------------------------------------------------------
# pullback attractor


def test_pullback_single_ic_degenerate():
    cfg = make_cfg(horizons=(0.5, 1.0), n_seeds=1)
    report = pullback_attractor(cfg, n_ics=1)
    assert report.stats["diameters"] == [0.0, 0.0]
    assert report.passed


def test_pullback_zero_noise_zero_data_exponential():
    p = quiet_params(16)
    cfg = make_cfg(params=p, horizons=(0.5, 1.0, 2.0, 4.0), n_seeds=1, dt=2e-3)
    report = pullback_attractor(cfg, n_ics=4, ic_radius_sq=1.0)
    d = np.array(report.stats["diameters"])
    assert np.all(np.diff(d) < 0)
    # clean exponential: log-diameter decrements scale with horizon gaps
    rates = -np.diff(np.log(d)) / np.diff([0.5, 1.0, 2.0, 4.0])
    assert np.all(rates > 0.1)
    assert rates.max() / rates.min() < 3.0
    assert report.verdicts["diameters_non_increasing"]


def test_pullback_relabeling_invariance():
    # the diameter is a set quantity: ic index permutation cannot change it
    cfg = make_cfg(horizons=(0.5, 1.0), n_seeds=1)
    a = pullback_attractor(cfg, n_ics=3)
    b = pullback_attractor(cfg, n_ics=3)
    assert a.stats["diameters"] == b.stats["diameters"]
    assert a.csv_text() == b.csv_text()


def test_pullback_default_small():
    cfg = make_cfg(horizons=(1.0, 2.0, 4.0), n_seeds=1)
    report = pullback_attractor(cfg, n_ics=4, contraction_target=0.5)
    assert report.verdicts["diameters_non_increasing"]
    assert report.stats["final_over_initial"] <= 0.5
    assert report.csv_header == ("horizon", "diameter")
    assert len(report.csv_rows) == 3
    assert "r1_sampling_radius" in report.stats


# ---------------------------------------------------------------------------
# determining modes


def test_determining_full_nudge_and_identical_ics():
    cfg = make_cfg(n_seeds=2, dt=1e-3)
    report = determining_modes(cfg, modes_list=[0, 4], horizon=2.0, tol=1e-4)
    assert report.verdicts["full_nudge_one_step"]
    assert report.stats["one_step_full_nudge_diff"] <= 1e-10


def test_determining_identical_ics_zero_diff():
    from caom.experiments import _nudged_pair_run
    from caom.fields import random_state
    from caom.model import _RawState, _step_raw, stepper_ops
    from caom.stochastic import stationary_ou_path
    from caom.grid import norm_sq_2d

    # same ic seed for master and follower: diff stays identically zero
    cfg = make_cfg(n_seeds=1)
    p = cfg.params
    g = cfg.grid
    path = stationary_ou_path(p.noise, p.b, 0.0, 0.05, cfg.dt, 3)
    rng = np.random.Generator(np.random.Philox(key=9))
    v = random_state(g, rng, 1.0)
    a, b = _RawState.of(v), _RawState.of(v)
    ops = stepper_ops(g, p, cfg.dt)
    for j in range(50):
        z = path.values_at_index(j)
        a = _step_raw(a, z, g, p, cfg.dt, ops)
        b = _step_raw(b, z, g, p, cfg.dt, ops)
    assert norm_sq_2d(a.q - b.q, g) == 0.0
    assert np.array_equal(a.theta, b.theta)


def test_determining_nudging_accelerates_convergence():
    cfg = make_cfg(n_seeds=2, master=11)
    report = determining_modes(cfg, modes_list=[0, 8], horizon=6.0, tol=1e-5)
    rows = {(r[0], r[1]): r[2] for r in report.csv_rows}
    for seed in cfg.seeds:
        if (seed, 0) in rows and (seed, 8) in rows:
            assert rows[(seed, 8)] < rows[(seed, 0)]
    assert report.verdicts["n_star_exists"]
    assert report.verdicts["n_star_bounded"]


def test_determining_supercritical_contrast_reported():
    cfg = make_cfg(n_seeds=1, master=13)
    report = determining_modes(cfg, modes_list=[0], horizon=1.0, tol=1e-12,
                               ra_super=800.0)
    assert "supercritical_unnudged_diff" in report.stats
    assert "supercritical_unnudged_stays_apart" in report.verdicts


# ---------------------------------------------------------------------------
# fixed point and ergodicity


def test_contraction_linear_decay_oracle():
    # zero data, zero noise, b = 0: a pure Robin eigenmode difference in T
    # decays at exactly nu * w^2, where w solves w tan(w) = 1 (slowest
    # z-mode of -d2/dz2 with no-flux bottom and the surface exchange); no
    # other field is forced, so log k over one unit window is -nu w^2
    from scipy.optimize import brentq

    n = 16
    nu = 2.0
    p = quiet_params(n)
    p = replace(p, b=Field1D(np.zeros(n + 1)), nu=nu,
                noise=NoiseSpectrum(0.0, 1.0, 2))
    from caom.model import TransformedState, simulate
    from caom.grid import Field2D
    from caom.stochastic import stationary_ou_path
    from caom.fields import state_diff_h_sq

    g = Grid2D(n, n)
    w = brentq(lambda x: x * np.tan(x) - 1.0, 0.2, 1.5)
    zero2 = Field2D(g, np.zeros(g.shape))
    tmode = Field2D(g, np.tile(np.cos(w * g.z), (n + 1, 1)))
    zero1 = Field1D(np.zeros(n + 1))
    va = TransformedState.make(zero1, zero2, tmode, zero2)
    vb = TransformedState.make(zero1, zero2, zero2, zero2)
    path = stationary_ou_path(p.noise, p.b, 0.0, 1.0, 1e-3, 1)
    fa = simulate(va, path, p, 1.0, 1e-3).state
    fb = simulate(vb, path, p, 1.0, 1e-3).state
    log_k = 0.5 * np.log(state_diff_h_sq(fa, fb) / state_diff_h_sq(va, vb))
    assert abs(log_k - (-nu * w**2)) <= 0.05 * nu * w**2


def test_contraction_scale_free_small_perturbation():
    # contraction ratio is scale-free: a 1e-8 perturbation contracts equally
    n = 16
    p = small_data_params(default_params(n), 0.01, 10.0)
    from caom.fields import random_state, state_diff_h_sq
    from caom.model import simulate
    from caom.stochastic import stationary_ou_path

    g = Grid2D(n, n)
    rng = np.random.Generator(np.random.Philox(key=21))
    base = random_state(g, rng, 0.01)
    pert = base.copy()
    pert.theta.values += 1e-8
    path = stationary_ou_path(p.noise, p.b, 0.0, 1.0, 1e-3, 5)
    fa = simulate(base, path, p, 1.0, 1e-3).state
    fb = simulate(pert, path, p, 1.0, 1e-3).state
    ratio = np.sqrt(state_diff_h_sq(fa, fb) / state_diff_h_sq(base, pert))
    assert ratio < 1.0


def test_fixed_point_contraction_small():
    p = small_data_params(default_params(16), 0.01, 10.0)
    cfg = make_cfg(params=p, n_seeds=6, master=31)
    report = fixed_point_contraction(cfg, n_pairs=2, fit_horizon=4.0)
    assert report.verdicts["mean_log_k_negative"]
    assert report.verdicts["exponential_attraction"]
    assert report.stats["mean_log_k"] < 0
    assert report.stats["fit_r_squared"] >= 0.95
    assert len(report.csv_rows) == 6


def test_ergodicity_small():
    p = small_data_params(default_params(16), 0.01, 10.0)
    cfg = make_cfg(params=p, n_seeds=16, master=37)
    report = ergodicity_check(cfg, t_long=60.0, t_late=6.0, burn_in=10.0)
    assert report.verdicts["averages_agree"]
    assert report.stats["gap"] <= report.tolerances["agreement"]
    assert report.stats["time_average"] > 0


def test_small_data_suite_consistency():
    p = small_data_params(default_params(16), 0.01, 10.0)
    cfg = make_cfg(params=p, n_seeds=6, master=41)
    fp, erg = small_data_suite(
        cfg,
        fixedpoint={"n_pairs": 2, "fit_horizon": 3.0},
        ergodicity={"t_long": 40.0, "t_late": 5.0, "burn_in": 8.0},
    )
    assert fp.verdicts["consistent_with_ergodicity"]
    assert erg.verdicts["consistent_with_contraction"]


# ---------------------------------------------------------------------------
# feedback bound


def test_feedback_zero_noise_zero_sources_plateau_zero():
    p = quiet_params(16)
    cfg = make_cfg(params=p, n_seeds=3, master=43)
    report = theta_feedback_bound(cfg, t_end=20.0, plateau_from=16.0,
                                  sweep=(1.0,), sweep_members=3)
    # everything decays: plateau and bound both collapse to zero
    assert report.stats["plateau_e_theta_sq"] < 1e-6
    assert report.stats["bound"] < 1e-12
    assert report.verdicts["integrated_bound"]


def test_feedback_small_run():
    # small deterministic sources + wide sweep factors: the sigma0^2 signal
    # then dominates the odd cross term (theta_det times the realized window
    # mean of z), which scales with the sources and only decays like 1/sqrt(K)
    p = default_params(16).scaled(data_scale=0.3, sigma0=0.1)
    cfg = make_cfg(params=p, n_seeds=4, master=47)
    report = theta_feedback_bound(cfg, t_end=8.0, plateau_from=4.0,
                                  sweep=(0.25, 1.0, 6.0), sweep_members=4)
    assert report.verdicts["plateau_below_bound"]
    assert report.verdicts["integrated_bound"]
    assert report.stats["bound_slack_factor"] > 1.0
    plateaus = report.stats["sweep_plateaus"]
    assert len(plateaus) == 3
    assert plateaus[-1] > plateaus[0]


def test_report_rendering():
    cfg = make_cfg(horizons=(0.5, 1.0), n_seeds=1)
    report = pullback_attractor(cfg, n_ics=2)
    text = report.to_text()
    assert text.startswith("experiment: attractor")
    assert "[verdicts]" in text and "[provenance]" in text
    assert "noise_family" in text
    csv = report.csv_text()
    assert csv.splitlines()[0] == "horizon,diameter"
    # deterministic rendering
    again = pullback_attractor(cfg, n_ics=2)
    assert again.to_text() == text
