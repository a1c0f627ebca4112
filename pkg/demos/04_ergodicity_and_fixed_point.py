"""Laminar regime: contraction of the unit-time map and time-average vs
ensemble-average agreement for the atmospheric temperature energy.

Small data and large viscosity put the system in the unique-random-fixed-
point regime; every trajectory forgets its start exponentially fast and
one long run samples the invariant measure.
"""

from caom.experiments import (
    ExperimentConfig,
    ergodicity_check,
    fixed_point_contraction,
    small_data_params,
)
from caom.grid import Grid2D
from caom.model import default_params
from caom.seeding import seed_split

params = small_data_params(default_params(24), data_scale=0.01, nu=10.0)

fp_cfg = ExperimentConfig(
    params=params, grid=Grid2D(24, 24), dt=1e-3,
    ensemble_size=8,
    seeds=[seed_split(3, "fixedpoint", i) for i in range(8)],
    config_hash="demo",
)
print("contraction of the unit-time map over 8 noise realizations ...")
fp = fixed_point_contraction(fp_cfg, n_pairs=2, fit_horizon=5.0)
print(f"  E[log k] = {fp.stats['mean_log_k']:.3f} "
      f"(bootstrap 95% upper bound {fp.stats['bootstrap_upper95']:.3f})")
print(f"  attraction rate {fp.stats['attraction_rate']:.2f}, "
      f"fit R^2 = {fp.stats['fit_r_squared']:.4f}")

erg_cfg = ExperimentConfig(
    params=params, grid=Grid2D(24, 24), dt=1e-3,
    ensemble_size=24,
    seeds=[seed_split(3, "ergodicity", i) for i in range(24)],
    observable="theta_l2_sq",
    config_hash="demo",
)
print("time average (one run, T = 200) vs ensemble average (24 members) ...")
erg = ergodicity_check(erg_cfg, t_long=200.0, t_late=10.0, burn_in=20.0)
print(f"  time average     = {erg.stats['time_average']:.6f}")
print(f"  ensemble average = {erg.stats['ensemble_average']:.6f}")
print(f"  gap {erg.stats['gap']:.2e} vs 2-sigma tolerance "
      f"{erg.tolerances['agreement']:.2e} -> "
      f"{'agree' if erg.verdicts['averages_agree'] else 'disagree'}")
