"""Experiment drivers that turn the asymptotic claims into verdicts.

Each driver integrates ensembles of trajectories and reduces them to a
structured ExperimentReport with statistics, tolerances and boolean
verdicts. Claims stated as limits in probability are tested as ensemble
statements over the seed list; every report carries the provenance needed
to reproduce it bit-exactly (config hash, seeds, noise-family flags).

Ensemble members can run in worker processes; all randomness flows through
seed_split and the reduction order is fixed by the seed list, so results
are independent of worker count and completion order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__ as _version
from .diagnostics import (
    EnergyRecorder,
    LedgerConstants,
    absorbing_radius_r1,
    energy_ledger,
    trace_l2,
)
from .grid import (
    Field1D,
    Field2D,
    Grid2D,
    cos_modes_1d,
    cos_modes_2d,
    from_cos_modes_1d,
    from_cos_modes_2d,
    from_sin_modes_2d,
    inner_1d,
    norm_sq_1d,
    norm_sq_2d,
    sin_modes_2d,
    trap_weights,
)
from .model import (
    ModelParams,
    TransformedState,
    simulate,
    state_norms,
    stepper_ops,
    to_u,
    _RawState,
    _step_raw,
)
from .seeding import seed_split
from .stochastic import stationary_ou_path
from .fields import random_state, state_diff_h_sq

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "pullback_attractor",
    "determining_modes",
    "fixed_point_contraction",
    "ergodicity_check",
    "theta_feedback_bound",
    "small_data_params",
    "small_data_suite",
]


@dataclass
class ExperimentConfig:
    """Shared experiment inputs; per-driver knobs are keyword arguments."""

    params: ModelParams
    grid: Grid2D
    dt: float
    ensemble_size: int
    seeds: list
    horizons: list = field(default_factory=list)
    modes_n: int = 0
    observable: str = "theta_l2_sq"
    workers: int = 1
    config_hash: str = "unconfigured"

    def __post_init__(self):
        if len(self.seeds) != self.ensemble_size:
            raise ValueError("ensemble_size must equal the number of seeds")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise ValueError("horizons must be strictly increasing")
        if self.params.b.n != self.grid.ny:
            raise ValueError("params profiles are not on the configured grid")


@dataclass
class ExperimentReport:
    kind: str
    stats: dict
    tolerances: dict
    verdicts: dict
    provenance: dict
    csv_header: tuple = ()
    csv_rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_text(self) -> str:
        lines = [f"experiment: {self.kind}",
                 f"verdict: {'PASS' if self.passed else 'FAIL'}"]
        for block in ("verdicts", "tolerances", "stats", "provenance"):
            lines.append(f"[{block}]")
            data = getattr(self, block)
            for key in sorted(data):
                lines.append(f"{key} = {_render(data[key])}")
        return "\n".join(lines) + "\n"

    def csv_text(self) -> str:
        lines = [",".join(self.csv_header)]
        for row in self.csv_rows:
            lines.append(",".join(_render(x) for x in row))
        return "\n".join(lines) + "\n"


def _render(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_render(x) for x in v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _provenance(cfg: ExperimentConfig, **extra) -> dict:
    prov = {
        "config_hash": cfg.config_hash,
        "code_version": _version,
        "seeds": list(cfg.seeds),
        "grid": f"{cfg.grid.ny}x{cfg.grid.nz}",
        "dt": cfg.dt,
        "noise_family": "power-law cosine diagonal (model choice, trace-class)",
        "profiles": "package defaults unless overridden in config",
    }
    prov.update(extra)
    return prov


def _pool_map(fn, payloads: list, workers: int) -> list:
    if workers <= 1 or len(payloads) <= 1:
        return [fn(x) for x in payloads]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, payloads))


def small_data_params(base: ModelParams, data_scale: float = 0.01,
                      nu: float = 10.0) -> ModelParams:
    """The laminar regime: sources and noise scaled down, viscosity up."""
    return base.scaled(data_scale=data_scale, nu=nu)


# ---------------------------------------------------------------------------
# pullback attractor


def _pullback_member(job: dict):
    grid: Grid2D = job["grid"]
    p: ModelParams = job["params"]
    path = stationary_ou_path(p.noise, p.b, -job["horizon"], 0.0, job["dt"],
                              job["path_seed"])
    rng = np.random.Generator(np.random.Philox(key=job["ic_seed"]))
    v0 = random_state(grid, rng, job["ic_h_sq"], time=-job["horizon"])
    res = simulate(v0, path, p, 0.0, job["dt"])
    s = res.state
    return (job["horizon"], job["ic_index"],
            s.theta.values, s.q.values, s.t_ocean.values, s.s_ocean.values)


def pullback_attractor(cfg: ExperimentConfig, n_ics: int = 16,
                       noise_floor: float = 0.10,
                       contraction_target: float = 0.10,
                       ic_radius_sq: float | None = None) -> ExperimentReport:
    """Ensemble diameter at time zero versus pullback horizon.

    One noise realization; all initial conditions are pulled back to time -T
    and integrated to 0 with the same shifted noise. The attractor signature
    is the diameter shrinking as T grows. Initial conditions are sampled in
    the ball of squared radius R1 unless ic_radius_sq overrides it (needed
    when zero data makes R1 collapse to zero).
    """
    if n_ics < 1:
        raise ValueError("need at least one initial condition")
    horizons = list(cfg.horizons) or [1.0, 2.0, 4.0, 8.0, 16.0]
    seed = cfg.seeds[0]
    p = cfg.params
    ledger = energy_ledger(p, cfg.grid)

    # sampling radius from the pullback integral, on a coarse quadrature mesh
    cover = max(np.log(1e8) / ledger.alpha, max(horizons))
    dt_r1 = 0.01
    cover = np.ceil(cover / dt_r1) * dt_r1
    r1_path = stationary_ou_path(p.noise, p.b, -cover, 0.0, dt_r1,
                                 seed_split(seed, "noise-r1"))
    r1 = absorbing_radius_r1(r1_path, ledger.alpha, ledger.c10, ledger.z_coeff)

    ball_sq = r1 if ic_radius_sq is None else ic_radius_sq
    if ball_sq <= 0.0:
        raise ValueError("sampling ball is empty; pass ic_radius_sq > 0")
    path_seed = seed_split(seed, "noise")
    rng_master = np.random.Generator(np.random.Philox(key=seed_split(seed, "ic-radii")))
    ic_h_sq = ball_sq * rng_master.uniform(0.1, 1.0, size=n_ics)

    jobs = [
        {"grid": cfg.grid, "params": p, "dt": cfg.dt, "horizon": T,
         "path_seed": path_seed, "ic_seed": seed_split(seed, "ic", i),
         "ic_h_sq": float(ic_h_sq[i]), "ic_index": i}
        for T in horizons for i in range(n_ics)
    ]
    results = _pool_map(_pullback_member, jobs, cfg.workers)

    diameters = {}
    hulls = {}
    for T in horizons:
        members = sorted([r for r in results if r[0] == T], key=lambda r: r[1])
        fields = [(m[2], m[3], m[4], m[5]) for m in members]
        diam_sq = 0.0
        for i in range(len(fields)):
            for j in range(i + 1, len(fields)):
                d = (norm_sq_1d(fields[i][0] - fields[j][0])
                     + norm_sq_2d(fields[i][1] - fields[j][1], cfg.grid)
                     + norm_sq_2d(fields[i][2] - fields[j][2], cfg.grid)
                     + norm_sq_2d(fields[i][3] - fields[j][3], cfg.grid))
                diam_sq = max(diam_sq, d)
        diameters[T] = float(np.sqrt(diam_sq))
        hulls[T] = {
            name: (float(min(np.min(f[k]) for f in fields)),
                   float(max(np.max(f[k]) for f in fields)))
            for k, name in enumerate(("theta", "q", "t", "s"))
        }

    diam_list = [diameters[T] for T in horizons]
    non_increasing = all(
        d2 <= d1 * (1.0 + noise_floor) for d1, d2 in zip(diam_list, diam_list[1:])
    )
    ratio = diam_list[-1] / diam_list[0] if diam_list[0] > 0 else 0.0
    degenerate = n_ics == 1

    report = ExperimentReport(
        kind="attractor",
        stats={
            "horizons": horizons,
            "diameters": diam_list,
            "final_over_initial": ratio,
            "r1_sampling_radius": r1,
            "alpha": ledger.alpha,
            "c10": ledger.c10,
            "hull_final": hulls[horizons[-1]],
        },
        tolerances={"noise_floor": noise_floor,
                    "contraction_target": contraction_target},
        verdicts={
            "diameters_non_increasing": bool(non_increasing or degenerate),
            "contracted": bool(degenerate or ratio <= contraction_target),
        },
        provenance=_provenance(cfg, omega_seed=seed, n_ics=n_ics,
                               ou_bias_warning=r1_path.bias_warning),
        csv_header=("horizon", "diameter"),
        csv_rows=[(T, diameters[T]) for T in horizons],
    )
    return report


# ---------------------------------------------------------------------------
# determining modes (nudging)


def _nudge(follower: _RawState, master: _RawState, n: int):
    """Overwrite the follower's lowest n x n mode block with the master's."""
    if n <= 0:
        return
    c_f = cos_modes_1d(follower.theta)
    c_m = cos_modes_1d(master.theta)
    c_f[:n] = c_m[:n]
    follower.theta = from_cos_modes_1d(c_f)
    s_f = sin_modes_2d(follower.q)
    s_m = sin_modes_2d(master.q)
    s_f[:n, :n] = s_m[:n, :n]
    follower.q = from_sin_modes_2d(s_f, follower.q.shape)
    for name in ("t", "s"):
        a_f = cos_modes_2d(getattr(follower, name))
        a_m = cos_modes_2d(getattr(master, name))
        a_f[:n, :n] = a_m[:n, :n]
        setattr(follower, name, from_cos_modes_2d(a_f))


def _mode_amplitudes_1d(vals: np.ndarray, n: int) -> np.ndarray:
    x = cos_modes_1d(vals)
    m = vals.size - 1
    amp = x / m
    amp[0] *= 0.5
    if n >= m + 1:
        amp[m] *= 0.5
    return amp[:n]


def _functional_sup_sq(follower: _RawState, master: _RawState, n: int) -> float:
    """max_j |l_j(diff)|^2 over the nudged functional set (pre-overwrite)."""
    if n <= 0:
        return 0.0
    worst = np.max(np.abs(_mode_amplitudes_1d(follower.theta - master.theta, n)),
                   initial=0.0)
    nq = sin_modes_2d(follower.q - master.q)[: n, : n]
    if nq.size:
        worst = max(worst, float(np.max(np.abs(nq))) / (4.0 * follower.q.shape[0] *
                                                        follower.q.shape[1]))
    for name in ("t", "s"):
        d = cos_modes_2d(getattr(follower, name) - getattr(master, name))[: n, : n]
        m0, m1 = getattr(follower, name).shape
        worst = max(worst, float(np.max(np.abs(d))) / (4.0 * (m0 - 1) * (m1 - 1)))
    return float(worst) ** 2


def _raw_diff_h_sq(a: _RawState, b: _RawState, grid: Grid2D) -> float:
    return (norm_sq_1d(a.theta - b.theta)
            + norm_sq_2d(a.q - b.q, grid)
            + norm_sq_2d(a.t - b.t, grid)
            + norm_sq_2d(a.s - b.s, grid))


def _nudged_pair_run(cfg: ExperimentConfig, p: ModelParams, seed: int,
                     modes_n: int, horizon: float, tol: float,
                     record_stride: int = 0):
    """Integrate master and follower with per-step nudging; returns the run log."""
    grid, dt = cfg.grid, cfg.dt
    path = stationary_ou_path(p.noise, p.b, 0.0, horizon, dt,
                              seed_split(seed, "noise"))
    rng_m = np.random.Generator(np.random.Philox(key=seed_split(seed, "ic", 0)))
    rng_f = np.random.Generator(np.random.Philox(key=seed_split(seed, "ic", 1)))
    master = _RawState.of(random_state(grid, rng_m, 1.0))
    follower = _RawState.of(random_state(grid, rng_f, 1.0))
    ops = stepper_ops(grid, p, dt)
    n_steps = path.index_of(horizon)
    floor = tol * 1e-4

    window_steps = max(1, round(1.0 / dt))
    window_acc, window_sup = 0.0, []
    diffs = [] if record_stride else None
    diff = np.sqrt(_raw_diff_h_sq(master, follower, grid))
    for j in range(n_steps):
        z_now = path.values_at_index(j)
        master = _step_raw(master, z_now, grid, p, dt, ops)
        follower = _step_raw(follower, z_now, grid, p, dt, ops)
        window_acc += dt * _functional_sup_sq(follower, master, modes_n)
        _nudge(follower, master, modes_n)
        diff = np.sqrt(_raw_diff_h_sq(master, follower, grid))
        if record_stride and (j + 1) % record_stride == 0:
            diffs.append(((j + 1) * dt, diff))
        if (j + 1) % window_steps == 0:
            window_sup.append(window_acc)
            window_acc = 0.0
        if diff < floor:
            break
    return {
        "final_diff": float(diff),
        "converged": bool(diff <= tol),
        "steps_run": j + 1 if n_steps else 0,
        "functional_windows": window_sup,
        "diff_series": diffs,
    }


def determining_modes(cfg: ExperimentConfig, modes_list=None, horizon: float = 50.0,
                      tol: float = 1e-6, ra_super: float = 0.0) -> ExperimentReport:
    """Nudging proxy for determining functionals.

    A follower trajectory has its lowest cosine/sine mode block overwritten
    by the master's after every step; N* is the smallest block size in the
    sweep for which the follower converges to the master by the horizon.
    """
    modes_list = sorted(set(modes_list or [0, 1, 2, 4, 8, 16, 32, 64]))
    p = cfg.params
    full = max(cfg.grid.ny, cfg.grid.nz) + 1

    # full-state nudging closes the gap in one step, up to transform roundoff
    one = _nudged_pair_run(cfg, p, cfg.seeds[0], full, 2 * cfg.dt, tol)
    one_step_diff = one["final_diff"]

    rows = []
    n_stars = []
    for seed in cfg.seeds:
        n_star = None
        for n in modes_list:
            run = _nudged_pair_run(cfg, p, seed, n, horizon, tol)
            rows.append((seed, n, run["final_diff"], int(run["converged"])))
            if run["converged"]:
                n_star = n
                break
        n_stars.append(n_star)

    found = [n for n in n_stars if n is not None]
    modal = max(set(found), key=found.count) if found else None
    stability = (found.count(modal) / len(cfg.seeds)) if found else 0.0

    stats = {
        "one_step_full_nudge_diff": one_step_diff,
        "n_star_per_seed": [(-1 if n is None else n) for n in n_stars],
        "n_star_modal": -1 if modal is None else modal,
        "seed_stability_fraction": stability,
        "modes_swept": modes_list,
        "horizon": horizon,
    }
    verdicts = {
        "full_nudge_one_step": bool(one_step_diff <= 1e-10),
        "n_star_exists": all(n is not None for n in n_stars),
        "n_star_bounded": all(n is not None and n <= 64 for n in n_stars),
        "n_star_seed_stable": bool(stability >= 0.9),
    }

    if ra_super > 0.0:
        p_super = replace(p, ra=ra_super)
        contrast = _nudged_pair_run(cfg, p_super, cfg.seeds[0], 0, horizon, tol)
        stats["supercritical_ra"] = ra_super
        stats["supercritical_unnudged_diff"] = contrast["final_diff"]
        verdicts["supercritical_unnudged_stays_apart"] = bool(
            not contrast["converged"]
        )

    return ExperimentReport(
        kind="determining",
        stats=stats,
        tolerances={"diff_tol": tol, "seed_stability": 0.9,
                    "one_step_tol": 1e-10},
        verdicts=verdicts,
        provenance=_provenance(cfg, horizon=horizon),
        csv_header=("seed", "modes_n", "final_diff", "converged"),
        csv_rows=rows,
    )


# ---------------------------------------------------------------------------
# random fixed point (contraction) and ergodicity


def _contraction_member(job: dict):
    cfg_grid: Grid2D = job["grid"]
    p: ModelParams = job["params"]
    dt = job["dt"]
    seed = job["seed"]
    horizon = max(1.0, job["fit_horizon"])
    path = stationary_ou_path(p.noise, p.b, 0.0, horizon, dt,
                              seed_split(seed, "noise"))
    ops = stepper_ops(cfg_grid, p, dt)
    n_unit = path.index_of(1.0)

    ratios = []
    fit_series = None
    for pair in range(job["n_pairs"]):
        rng_a = np.random.Generator(np.random.Philox(key=seed_split(seed, "ic-a", pair)))
        rng_b = np.random.Generator(np.random.Philox(key=seed_split(seed, "ic-b", pair)))
        va = _RawState.of(random_state(cfg_grid, rng_a, job["ball_sq"]))
        vb = _RawState.of(random_state(cfg_grid, rng_b, job["ball_sq"]))
        d0 = np.sqrt(_raw_diff_h_sq(va, vb, cfg_grid))
        series = [(0.0, d0)]
        n_total = path.index_of(horizon) if pair == 0 else n_unit
        for j in range(n_total):
            z_now = path.values_at_index(j)
            va = _step_raw(va, z_now, cfg_grid, p, dt, ops)
            vb = _step_raw(vb, z_now, cfg_grid, p, dt, ops)
            if j + 1 == n_unit or (pair == 0 and (j + 1) % job["fit_stride"] == 0):
                series.append(((j + 1) * dt, np.sqrt(_raw_diff_h_sq(va, vb, cfg_grid))))
        d1 = next(d for t, d in series if abs(t - 1.0) < 0.5 * dt)
        ratios.append(d1 / d0)
        if pair == 0:
            fit_series = series
    return {"seed": seed, "log_k": float(np.log(max(ratios))),
            "fit_series": fit_series}


def fixed_point_contraction(cfg: ExperimentConfig, n_pairs: int = 4,
                            fit_horizon: float = 10.0,
                            bootstrap_rounds: int = 10000) -> ExperimentReport:
    """Empirical contraction factor of the unit-time solution map.

    cfg.params should already be in the small-data / large-viscosity regime.
    k(omega) is the worst pairwise contraction ratio over one unit window;
    the verdict needs the bootstrap 95% upper bound of E[log k] below zero
    plus a clean exponential fit of pair separation over the longer window.
    """
    p = cfg.params
    base_ledger = energy_ledger(replace(p, nu=1.0), cfg.grid)
    ball_sq = 2.0 * base_ledger.c10 / base_ledger.alpha

    jobs = [{"grid": cfg.grid, "params": p, "dt": cfg.dt, "seed": s,
             "n_pairs": n_pairs, "ball_sq": ball_sq,
             "fit_horizon": fit_horizon,
             "fit_stride": max(1, round(0.1 / cfg.dt))}
            for s in cfg.seeds]
    members = _pool_map(_contraction_member, jobs, cfg.workers)
    members.sort(key=lambda m: cfg.seeds.index(m["seed"]))

    log_ks = np.array([m["log_k"] for m in members])
    mean_log_k = float(np.mean(log_ks))
    boot_rng = np.random.Generator(np.random.Philox(
        key=seed_split(cfg.seeds[0], "bootstrap")))
    idx = boot_rng.integers(0, len(log_ks), size=(bootstrap_rounds, len(log_ks)))
    boot_means = log_ks[idx].mean(axis=1)
    upper95 = float(np.quantile(boot_means, 0.95))

    # pooled exponential-attraction fit on the mean of log separations
    times = np.array([t for t, _ in members[0]["fit_series"]])
    floor = 1e-13
    logs = np.full((len(members), times.size), np.nan)
    for i, m in enumerate(members):
        vals = np.array([d for _, d in m["fit_series"]])
        logs[i, : vals.size] = np.where(vals > floor, np.log(vals), np.nan)
    mean_logs = np.nanmean(logs, axis=0)
    ok = np.isfinite(mean_logs)
    coeffs = np.polyfit(times[ok], mean_logs[ok], 1)
    fitted = np.polyval(coeffs, times[ok])
    ss_res = float(np.sum((mean_logs[ok] - fitted) ** 2))
    ss_tot = float(np.sum((mean_logs[ok] - np.mean(mean_logs[ok])) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rate = -float(coeffs[0])

    return ExperimentReport(
        kind="fixedpoint",
        stats={
            "mean_log_k": mean_log_k,
            "bootstrap_upper95": upper95,
            "log_k_per_seed": [float(x) for x in log_ks],
            "attraction_rate": rate,
            "fit_r_squared": r2,
            "ball_sq": ball_sq,
        },
        tolerances={"confidence": 0.95, "fit_r2_min": 0.95},
        verdicts={
            "mean_log_k_negative": bool(upper95 < 0.0),
            "exponential_attraction": bool(r2 >= 0.95 and rate > 0.0),
        },
        provenance=_provenance(cfg, n_pairs=n_pairs, fit_horizon=fit_horizon),
        csv_header=("seed", "log_k"),
        csv_rows=[(s, float(k)) for s, k in zip(cfg.seeds, log_ks)],
    )


def _h_norm_sq_raw(w: _RawState, z: np.ndarray, grid: Grid2D) -> float:
    return (norm_sq_1d(w.theta + z) + norm_sq_2d(w.q, grid)
            + norm_sq_2d(w.t, grid) + norm_sq_2d(w.s, grid))


def _observable_raw(name: str, w: _RawState, z: np.ndarray, grid: Grid2D) -> float:
    if name == "theta_l2_sq":
        return norm_sq_1d(w.theta + z)
    if name == "theta_mean":
        return inner_1d(w.theta + z, np.ones_like(z))
    if name == "h_norm_sq":
        return _h_norm_sq_raw(w, z, grid)
    raise ValueError(f"unknown observable {name!r}")


def _ensemble_member_observable(job: dict):
    grid: Grid2D = job["grid"]
    p: ModelParams = job["params"]
    dt = job["dt"]
    path = stationary_ou_path(p.noise, p.b, 0.0, job["t_late"], dt,
                              seed_split(job["seed"], "noise"))
    rng = np.random.Generator(np.random.Philox(key=seed_split(job["seed"], "ic")))
    w = _RawState.of(random_state(grid, rng, job["ic_h_sq"]))
    ops = stepper_ops(grid, p, dt)
    n = path.index_of(job["t_late"])
    for j in range(n):
        w = _step_raw(w, path.values_at_index(j), grid, p, dt, ops)
    return _observable_raw(job["observable"], w, path.values_at_index(n), grid)


def _batch_mean_se(samples: np.ndarray, n_batches: int = 40) -> float:
    m = len(samples) // n_batches
    if m < 1:
        return float(np.std(samples) / np.sqrt(max(len(samples), 1)))
    means = samples[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def ergodicity_check(cfg: ExperimentConfig, t_long: float = 1000.0,
                     t_late: float = 20.0, burn_in: float = 100.0,
                     sample_stride: int = 10) -> ExperimentReport:
    """Time average along one trajectory versus ensemble average.

    cfg.params should be the small-data / large-viscosity regime where the
    random fixed point exists; then both averages estimate the invariant
    measure's mean of the observable.
    """
    p = cfg.params
    grid, dt = cfg.grid, cfg.dt
    obs_name = cfg.observable

    # one long trajectory, streamed in segments
    from .stochastic import ou_segments

    seed0 = cfg.seeds[0]
    chunk = max(1, round(50.0 / dt))
    rng = np.random.Generator(np.random.Philox(key=seed_split(seed0, "ic")))
    w = _RawState.of(random_state(grid, rng, 1.0))
    ops = stepper_ops(grid, p, dt)
    samples = []
    sample_times = []
    step = 0
    for seg in ou_segments(p.noise, p.b, 0.0, t_long, dt,
                           seed_split(seed0, "noise"), chunk):
        n = seg.i1 - seg.i0
        for j in range(n):
            w = _step_raw(w, seg.values_at_index(j), grid, p, dt, ops)
            step += 1
            if step % sample_stride == 0:
                samples.append(_observable_raw(obs_name, w,
                                               seg.values_at_index(j + 1), grid))
                sample_times.append(step * dt)
    samples = np.array(samples)
    sample_times = np.array(sample_times)
    kept = sample_times > burn_in
    tail = samples[kept]
    time_avg = float(np.mean(tail))
    se_time = _batch_mean_se(tail)
    se_half = _batch_mean_se(tail[: len(tail) // 2])

    # ensemble leg
    jobs = [{"grid": grid, "params": p, "dt": dt, "seed": s, "t_late": t_late,
             "observable": obs_name, "ic_h_sq": 1.0}
            for s in cfg.seeds]
    values = np.array(_pool_map(_ensemble_member_observable, jobs, cfg.workers))
    ens_avg = float(np.mean(values))
    se_ens = float(np.std(values, ddof=1) / np.sqrt(len(values)))

    gap = abs(time_avg - ens_avg)
    tol = 2.0 * float(np.hypot(se_time, se_ens))
    clt_ratio = se_half / se_time if se_time > 0 else np.inf
    clt_ok = abs(clt_ratio - np.sqrt(2.0)) <= 0.3 * np.sqrt(2.0)

    running = np.cumsum(samples) / np.arange(1, len(samples) + 1)
    csv_stride = max(1, len(samples) // 2000)
    rows = [(float(sample_times[i]), float(running[i]))
            for i in range(0, len(samples), csv_stride)]

    return ExperimentReport(
        kind="ergodicity",
        stats={
            "observable": obs_name,
            "time_average": time_avg,
            "ensemble_average": ens_avg,
            "gap": gap,
            "se_time": se_time,
            "se_ensemble": se_ens,
            "clt_se_ratio_half_vs_full": float(clt_ratio),
            "t_long": t_long,
            "t_late": t_late,
            "members": len(cfg.seeds),
        },
        tolerances={"agreement": tol, "clt_rel_tol": 0.3},
        verdicts={
            "averages_agree": bool(gap <= tol),
            "clt_rate": bool(clt_ok),
        },
        provenance=_provenance(cfg, burn_in=burn_in),
        csv_header=("time", "running_average"),
        csv_rows=rows,
    )


def small_data_suite(cfg: ExperimentConfig, **kwargs) -> tuple:
    """Contraction and ergodicity in one regime, plus the consistency flag."""
    fp = fixed_point_contraction(cfg, **kwargs.get("fixedpoint", {}))
    erg = ergodicity_check(cfg, **kwargs.get("ergodicity", {}))
    consistent = (not fp.verdicts["mean_log_k_negative"]) or \
        erg.verdicts["averages_agree"]
    fp.verdicts["consistent_with_ergodicity"] = bool(consistent)
    erg.verdicts["consistent_with_contraction"] = bool(consistent)
    return fp, erg


# ---------------------------------------------------------------------------
# atmospheric temperature feedback bound


def _feedback_member(job: dict):
    grid: Grid2D = job["grid"]
    p: ModelParams = job["params"]
    dt = job["dt"]
    path = stationary_ou_path(p.noise, p.b, 0.0, job["t_end"], dt,
                              seed_split(job["seed"], "noise"))
    rng = np.random.Generator(np.random.Philox(key=seed_split(job["seed"], "ic")))
    v0 = random_state(grid, rng, job["ic_h_sq"])
    rec = EnergyRecorder(stride=job["stride"])
    simulate(v0, path, p, job["t_end"], dt, (rec,))
    r = rec.record()
    return r.times, r.theta_sq, r.h_sq, r.v_sq


def theta_feedback_bound(cfg: ExperimentConfig, t_end: float = 40.0,
                         plateau_from: float = 20.0,
                         sweep: tuple = (0.25, 1.0, 4.0),
                         sweep_members: int = 16,
                         stride: int = 20) -> ExperimentReport:
    """Late-time plateau of E|Theta|^2 against the (c24 + trQ) / c25 bound.

    Also checks the linear-in-time integrated mean-square bound through the
    vorticity cascade constant, and the plateau's monotonicity in the noise
    amplitude over a common-random-number sweep.
    """
    p = cfg.params
    grid, dt = cfg.grid, cfg.dt
    ledger = energy_ledger(p, grid)
    tr = trace_l2(p.noise)
    bound = (ledger.c24 + tr) / ledger.c25

    def run_ensemble(params: ModelParams, seeds: list):
        jobs = [{"grid": grid, "params": params, "dt": dt, "seed": s,
                 "t_end": t_end, "stride": stride, "ic_h_sq": 1.0}
                for s in seeds]
        outs = _pool_map(_feedback_member, jobs, cfg.workers)
        times = outs[0][0]
        theta_sq = np.mean([o[1] for o in outs], axis=0)
        h_sq = np.mean([o[2] for o in outs], axis=0)
        v_sq = np.mean([o[3] for o in outs], axis=0)
        return times, theta_sq, h_sq, v_sq

    times, mean_theta_sq, mean_h_sq, mean_v_sq = run_ensemble(p, cfg.seeds)
    plateau_mask = times >= plateau_from
    plateau = float(np.mean(mean_theta_sq[plateau_mask]))

    # integrated bound: E|u(t)|^2 + alpha int E|u|_V^2 <= gain (E|u0|^2 + t (c24+trQ))
    cum_v = np.concatenate([[0.0], np.cumsum(
        0.5 * (mean_v_sq[1:] + mean_v_sq[:-1]) * np.diff(times))])
    lhs = mean_h_sq + ledger.alpha * cum_v
    rhs = ledger.cascade_gain * (mean_h_sq[0] + times * (ledger.c24 + tr))
    integrated_ok = bool(np.all(lhs <= rhs * (1.0 + 1e-9)))
    integrated_slack = float(np.max(lhs / rhs))

    sweep_plateaus = []
    sweep_seeds = cfg.seeds[:sweep_members]
    for factor in sweep:
        if factor == 1.0 and len(sweep_seeds) == len(cfg.seeds):
            sweep_plateaus.append(plateau)
            continue
        p_f = p.scaled(sigma0=p.noise.sigma0 * factor)
        t_f, th_f, _, _ = run_ensemble(p_f, sweep_seeds)
        sweep_plateaus.append(float(np.mean(th_f[t_f >= plateau_from])))
    monotone = all(b >= a * (1.0 - 1e-6)
                   for a, b in zip(sweep_plateaus, sweep_plateaus[1:]))

    return ExperimentReport(
        kind="feedback",
        stats={
            "plateau_e_theta_sq": plateau,
            "bound": bound,
            "bound_slack_factor": bound / plateau if plateau > 0 else np.inf,
            "c24": ledger.c24,
            "c25": ledger.c25,
            "trace_q_l2": tr,
            "integrated_bound_max_ratio": integrated_slack,
            "cascade_gain": ledger.cascade_gain,
            "sweep_factors": list(sweep),
            "sweep_plateaus": sweep_plateaus,
        },
        tolerances={"plateau_below_bound": 1.0, "monotone_tol": 1e-6},
        verdicts={
            "plateau_below_bound": bool(plateau <= bound),
            "integrated_bound": integrated_ok,
            "plateau_monotone_in_sigma0": bool(monotone),
        },
        provenance=_provenance(cfg, t_end=t_end, plateau_from=plateau_from,
                               sweep_members=len(sweep_seeds)),
        csv_header=("time", "mean_theta_sq", "mean_h_sq"),
        csv_rows=[(float(t), float(a), float(b))
                  for t, a, b in zip(times, mean_theta_sq, mean_h_sq)],
    )
