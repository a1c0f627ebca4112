"""Acceptance suite: one test per primary criterion, pinned tolerances.

Each test prints a PASS line with its headline numbers (visible with -s or
in captured output). The full module is the heaviest part of the suite;
expect roughly an hour single-threaded.
"""

import time

import numpy as np
import pytest

from caom.diagnostics import (
    EnergyRecorder,
    absorbing_radius_r1,
    check_dissipativity,
    energy_ledger,
    gronwall_envelope,
    poincare_check,
    trace_l2,
)
from caom.experiments import (
    ExperimentConfig,
    determining_modes,
    ergodicity_check,
    fixed_point_contraction,
    pullback_attractor,
    small_data_params,
    theta_feedback_bound,
)
from caom.fields import random_field2d, random_state
from caom.grid import Field2D, Grid2D, arakawa_jacobian, inner_2d, norm_sq_2d
from caom.model import default_params, simulate
from caom.seeding import make_generator, seed_split
from caom.stochastic import stationary_ou_path

MASTER = 20260810


def announce(name: str, passed: bool, detail: str, t0: float):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {name}: {status} ({detail}; {time.time() - t0:.0f}s)")


# ---------------------------------------------------------------------------


def test_conservation_suite():
    """S mass drift <= 1e-10 over 10 trajectories; jacobian orthogonality
    <= 1e-12 relative on 100 pairs; Poincare ratio <= 1.05 on 1000 fields."""
    t0 = time.time()
    grid = Grid2D(64, 64)
    p = default_params(64)

    worst_drift = 0.0
    for i in range(10):
        seed = seed_split(MASTER, "conservation", i)
        rng = make_generator(seed, "ic")
        v0 = random_state(grid, rng, 2.0)
        path = stationary_ou_path(p.noise, p.b, 0.0, 10.0, 1e-3,
                                  seed_split(seed, "noise"))
        rec = EnergyRecorder(stride=100)
        simulate(v0, path, p, 10.0, 1e-3, (rec,))
        r = rec.record()
        worst_drift = max(worst_drift, float(np.max(np.abs(r.s_mass - r.s_mass[0]))))
    assert worst_drift <= 1e-10

    rng = make_generator(MASTER, "jacobian-pairs")
    worst_orth = 0.0
    for trial in range(100):
        f = rng.standard_normal(grid.shape)
        psi_v = rng.standard_normal(grid.shape)
        psi_v[0, :] = psi_v[-1, :] = psi_v[:, 0] = psi_v[:, -1] = 0.0
        jac = arakawa_jacobian(Field2D(grid, f), Field2D(grid, psi_v)).values
        rel = abs(inner_2d(jac, f, grid)) / np.sqrt(
            norm_sq_2d(jac, grid) * norm_sq_2d(f, grid))
        worst_orth = max(worst_orth, rel)
    assert worst_orth <= 1e-12

    rng = make_generator(MASTER, "poincare-fields")
    worst_ratio = 0.0
    for _ in range(1000):
        vals = random_field2d(rng, grid, "cos", n_modes=12, decay=1.0)
        worst_ratio = max(worst_ratio, poincare_check(Field2D(grid, vals)))
    assert worst_ratio <= 1.05

    announce("conservation", True,
             f"drift {worst_drift:.1e}, orth {worst_orth:.1e}, "
             f"poincare {worst_ratio:.3f}", t0)


def test_dissipativity():
    """Gronwall envelope with 5% slack for 8 seeds from norms up to 10 R1;
    entry before the analytic crossing time + 20%; no exit afterward over
    1000 dt units."""
    t0 = time.time()
    grid = Grid2D(64, 64)
    p = default_params(64)
    led = energy_ledger(p, grid)
    dt = 1e-3

    scales = [1.0, 2.0, 3.0, 5.0, 7.0, 8.5, 10.0, 10.0]
    entries = []
    for i in range(8):
        seed = seed_split(MASTER, "dissipativity", i)
        cover = float(np.ceil(np.log(1e8) / led.alpha / 0.01) * 0.01)
        r1_path = stationary_ou_path(p.noise, p.b, -cover, 0.0, 0.01,
                                     seed_split(seed, "noise-r1"))
        r1 = absorbing_radius_r1(r1_path, led.alpha, led.c10, led.z_coeff)
        rng = make_generator(seed, "ic")
        v0 = random_state(grid, rng, scales[i] * r1)
        path = stationary_ou_path(p.noise, p.b, 0.0, 16.0, dt,
                                  seed_split(seed, "noise"))
        rec = EnergyRecorder(stride=20)
        simulate(v0, path, p, 16.0, dt, (rec,))
        record = rec.record()
        report = check_dissipativity(record, led.alpha, led.c10,
                                     r1_initial=r1, slack=0.05,
                                     z_coeff=led.z_coeff)
        assert report.envelope_ok, (i, report.max_envelope_ratio)
        assert report.entry_time is not None, i
        z_bar = float(np.mean(record.z_sq))
        gap = (led.c10 + led.z_coeff * z_bar) / led.alpha
        t_star = np.log(record.htilde_sq[0] / gap) / led.alpha
        assert report.entry_time <= 1.2 * t_star, (i, report.entry_time, t_star)
        # forward invariance over at least 1000 steps past entry
        assert record.times[-1] - report.entry_time >= 1000 * dt, i
        assert report.stayed_inside, i
        entries.append(report.entry_time)
    announce("dissipativity", True,
             f"entries {min(entries):.2f}..{max(entries):.2f}", t0)


def test_pullback_attractor():
    """One noise realization, 16 ICs in the R1 ball, horizons 1..16:
    diameters non-increasing (10% floor) and final/initial <= 0.1."""
    t0 = time.time()
    grid = Grid2D(64, 64)
    cfg = ExperimentConfig(
        params=default_params(64),
        grid=grid,
        dt=1e-3,
        ensemble_size=1,
        seeds=[seed_split(MASTER, "attractor", 0)],
        horizons=[1.0, 2.0, 4.0, 8.0, 16.0],
        config_hash="acceptance",
    )
    report = pullback_attractor(cfg, n_ics=16, noise_floor=0.10,
                                contraction_target=0.10)
    assert report.verdicts["diameters_non_increasing"], report.stats
    assert report.verdicts["contracted"], report.stats
    announce("pullback-attractor", True,
             f"diameters {report.stats['diameters'][0]:.2f} -> "
             f"{report.stats['diameters'][-1]:.2e}, ratio "
             f"{report.stats['final_over_initial']:.2e}", t0)


def test_determining_modes():
    """Full nudging closes the gap in one step; a finite N* <= 64 reaches
    1e-6 by horizon 50; N* agrees across >= 90% of 8 seeds."""
    t0 = time.time()
    cfg = ExperimentConfig(
        params=default_params(32),
        grid=Grid2D(32, 32),
        dt=1e-3,
        ensemble_size=8,
        seeds=[seed_split(MASTER, "determining", i) for i in range(8)],
        config_hash="acceptance",
    )
    report = determining_modes(cfg, modes_list=[0, 1, 2, 4, 8, 16, 32, 64],
                               horizon=50.0, tol=1e-6)
    assert report.verdicts["full_nudge_one_step"], report.stats
    assert report.verdicts["n_star_exists"], report.stats
    assert report.verdicts["n_star_bounded"], report.stats
    assert report.verdicts["n_star_seed_stable"], report.stats
    announce("determining-modes", True,
             f"N* = {report.stats['n_star_modal']} for "
             f"{report.stats['seed_stability_fraction']:.0%} of seeds", t0)


def test_fixed_point_and_ergodicity():
    """Small-data/large-nu regime: E[log k] < 0 at 95% bootstrap confidence
    over 32 realizations, log-linear attraction fit R^2 >= 0.95, and time
    average vs ensemble average of |Theta|^2 within combined 2-sigma bands
    (T_long = 1000, K = 64)."""
    t0 = time.time()
    p = small_data_params(default_params(32), data_scale=0.01, nu=10.0)
    fp_cfg = ExperimentConfig(
        params=p, grid=Grid2D(32, 32), dt=1e-3,
        ensemble_size=32,
        seeds=[seed_split(MASTER, "fixedpoint", i) for i in range(32)],
        config_hash="acceptance",
    )
    fp = fixed_point_contraction(fp_cfg, n_pairs=4, fit_horizon=10.0)
    assert fp.verdicts["mean_log_k_negative"], fp.stats
    assert fp.verdicts["exponential_attraction"], fp.stats

    erg_cfg = ExperimentConfig(
        params=p, grid=Grid2D(32, 32), dt=1e-3,
        ensemble_size=64,
        seeds=[seed_split(MASTER, "ergodicity", i) for i in range(64)],
        observable="theta_l2_sq",
        config_hash="acceptance",
    )
    erg = ergodicity_check(erg_cfg, t_long=1000.0, t_late=20.0, burn_in=100.0)
    assert erg.verdicts["averages_agree"], erg.stats
    announce("fixed-point+ergodicity", True,
             f"E[log k] = {fp.stats['mean_log_k']:.2f} "
             f"(95% ub {fp.stats['bootstrap_upper95']:.2f}), fit R^2 = "
             f"{fp.stats['fit_r_squared']:.3f}; averages gap "
             f"{erg.stats['gap']:.2e} <= {erg.tolerances['agreement']:.2e}", t0)


def test_theta_feedback_bound():
    """Ensemble plateau of E|Theta|^2 below (c24 + trQ)/c25 and monotone in
    sigma0 over a 3-point common-random-number sweep."""
    t0 = time.time()
    cfg = ExperimentConfig(
        params=default_params(32), grid=Grid2D(32, 32), dt=1e-3,
        ensemble_size=32,
        seeds=[seed_split(MASTER, "feedback", i) for i in range(32)],
        config_hash="acceptance",
    )
    report = theta_feedback_bound(cfg, t_end=40.0, plateau_from=20.0,
                                  sweep=(0.25, 1.0, 4.0), sweep_members=16)
    assert report.verdicts["plateau_below_bound"], report.stats
    assert report.verdicts["integrated_bound"], report.stats
    assert report.verdicts["plateau_monotone_in_sigma0"], report.stats
    announce("theta-feedback-bound", True,
             f"plateau {report.stats['plateau_e_theta_sq']:.3f} <= bound "
             f"{report.stats['bound']:.1f} (slack x"
             f"{report.stats['bound_slack_factor']:.0f}); sweep "
             f"{[round(x, 4) for x in report.stats['sweep_plateaus']]}", t0)


def test_numerical_analysis():
    """Manufactured-solution and eigenfunction errors drop by >= 3.5x per
    grid doubling; linear decay rates match closed forms within 2%."""
    t0 = time.time()
    import test_grid
    import test_model

    test_model.test_rhs_manufactured_solution_convergence()
    test_grid.test_poisson_eigenfunction_convergence()
    test_grid.test_diffusion_neumann_eigenfunction_convergence()
    test_grid.test_jacobian_symbolic_oracle_interior_second_order()
    test_model.test_linear_theta_decay_rate(0, 1.0)
    test_model.test_linear_theta_decay_rate(1, np.pi**2 + 1.0)
    announce("numerical-analysis", True,
             "MMS + eigenfunction halving >= 3.5x, rates within 2%", t0)


def test_reproducibility(tmp_path):
    """A CLI run repeated with the same config and seed is byte-identical
    (CSV and snapshots), single-threaded."""
    t0 = time.time()
    from caom.cli import main

    cfg_text = (
        "[grid]\nny = 64\nnz = 64\n"
        "[time]\ndt = 1e-3\nt_end = 1.0\n"
        "[output]\nstride = 100\nsnapshot_stride = 500\n"
        "[run]\nseed = 4242\nworkers = 1\n"
    )
    cfg_file = tmp_path / "repro.ini"
    cfg_file.write_text(cfg_text)
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["simulate", "--config", str(cfg_file), "--out",
                     str(out), "--quiet"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    n_bytes = 0
    for name in names:
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        assert a == b, name
        n_bytes += len(a)
    assert any(n.endswith(".csv") for n in names)
    assert any(n.endswith(".snap") for n in names)
    announce("reproducibility", True,
             f"{len(names)} files, {n_bytes} bytes byte-identical", t0)
