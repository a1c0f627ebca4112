"""Command-line entry point: run orchestration, seeding, and output files.

Exit codes: 0 success (and experiment verdict passed), 2 experiment ran but
its verdict failed, 1 error. Every run is reproducible byte-for-byte from
(config file, master seed) with single-threaded numerics: output files
carry no timestamps and all randomness flows through seed_split.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (
    EnergyRecorder,
    absorbing_radius_r1,
    check_dissipativity,
    energy_ledger,
    r1_truncation_bound,
)
from .experiments import (
    ExperimentConfig,
    determining_modes,
    ergodicity_check,
    fixed_point_contraction,
    pullback_attractor,
    small_data_params,
    theta_feedback_bound,
)
from .fields import random_state
from .formats import snapshot_from_state, write_energy_csv, write_snapshot
from .model import simulate, to_u
from .seeding import seed_split
from .stochastic import stationary_ou_path

COMMANDS = ("simulate", "attractor", "determining", "fixedpoint",
            "ergodicity", "feedback", "selftest")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="caom",
        description="stochastic coupled atmosphere-ocean model: simulation "
                    "and theorem-verification experiments",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", metavar="PATH", help="config file (INI)")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--seed", type=int, metavar="N", help="master seed")
    parser.add_argument("--workers", type=int, metavar="N",
                        help="ensemble worker processes")
    parser.add_argument("--stride", type=int, metavar="N",
                        help="energy-record stride in steps")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else parse_config("")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.stride is not None:
        cfg.stride = args.stride
    out_dir = os.environ.get("CAOM_OUT") or args.out or cfg.out_dir

    try:
        return run(args.command, cfg, out_dir, quiet=args.quiet)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        if not args.quiet:
            traceback.print_exc()
        return 1


def run(command: str, cfg: RunConfig, out_dir: str, quiet: bool = False) -> int:
    """Execute one subcommand; returns the process exit status."""
    if command == "selftest":
        return _run_selftest(quiet)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = (lambda *_: None) if quiet else (lambda *a: print(*a))

    if command == "simulate":
        return _run_simulate(cfg, out, say)
    report = _run_experiment(command, cfg, say)
    stem = f"{command}-{cfg.hash}"
    (out / f"{stem}.txt").write_text(report.to_text(), encoding="ascii")
    (out / f"{stem}.csv").write_text(report.csv_text(), encoding="ascii")
    say(f"wrote {out / (stem + '.txt')}")
    say(f"verdict: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 2


class SnapshotWriter:
    """Observer writing physical-state snapshots every ``stride`` steps."""

    def __init__(self, directory: Path, prefix: str, stride: int):
        self.directory = directory
        self.prefix = prefix
        self.stride = max(1, stride)
        self.frame = 0

    def __call__(self, view):
        u = to_u(view.state, view.z)
        snap = snapshot_from_state(u, z=view.z)
        write_snapshot(self.directory / f"{self.prefix}-{self.frame:06d}.snap", snap)
        self.frame += 1


def _run_simulate(cfg: RunConfig, out: Path, say) -> int:
    p = cfg.params
    ledger = energy_ledger(p, cfg.grid)
    stem = f"simulate-{cfg.hash}"

    cover = float(np.ceil(np.log(1e8) / ledger.alpha / 0.01) * 0.01)
    r1_path = stationary_ou_path(p.noise, p.b, -cover, 0.0, 0.01,
                                 seed_split(cfg.seed, "noise-r1"))
    r1 = absorbing_radius_r1(r1_path, ledger.alpha, ledger.c10, ledger.z_coeff)
    trunc = r1_truncation_bound(r1_path, ledger.alpha, ledger.c10, ledger.z_coeff)

    path = stationary_ou_path(p.noise, p.b, 0.0, cfg.t_end, cfg.dt,
                              seed_split(cfg.seed, "noise"))
    rng = np.random.Generator(np.random.Philox(key=seed_split(cfg.seed, "ic")))
    v0 = random_state(cfg.grid, rng, 1.0)
    observers = [EnergyRecorder(stride=cfg.stride)]
    if cfg.snapshot_stride > 0:
        observers.append(SnapshotWriter(out, stem, cfg.snapshot_stride))
    res = simulate(v0, path, p, cfg.t_end, cfg.dt, tuple(observers))
    record = observers[0].record()
    write_energy_csv(out / f"{stem}.csv", record)

    report = check_dissipativity(record, ledger.alpha, ledger.c10,
                                 r1_initial=r1, z_coeff=ledger.z_coeff,
                                 truncation_bound=trunc)
    lines = [
        "run: simulate",
        f"config_hash: {cfg.hash}",
        f"seed: {cfg.seed}",
        f"grid: {cfg.grid.ny}x{cfg.grid.nz}",
        f"dt: {cfg.dt!r}",
        f"t_end: {cfg.t_end!r}",
        f"steps: {res.n_steps}",
        f"cfl_halvings: {res.n_cfl_halvings}",
        f"alpha: {ledger.alpha!r}",
        f"c10: {ledger.c10!r}",
        f"r1: {r1!r}",
        f"r1_truncation_bound: {trunc!r}",
        f"envelope_ok: {report.envelope_ok}",
        f"max_envelope_ratio: {report.max_envelope_ratio!r}",
        f"entry_time: {report.entry_time!r}",
        f"stayed_inside: {report.stayed_inside}",
        f"final_h_sq: {record.h_sq[-1]!r}",
        f"s_mass_drift: {float(np.max(np.abs(record.s_mass - record.s_mass[0])))!r}",
        f"ou_bias_warning: {path.bias_warning}",
        "noise_family: power-law cosine diagonal (model choice, trace-class)",
        f"defaulted_keys: {';'.join(cfg.defaulted) if cfg.defaulted else '(none)'}",
    ]
    (out / f"{stem}.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    say(f"wrote {out / (stem + '.csv')}")
    return 0


def _experiment_config(cfg: RunConfig, kind: str, n_members: int,
                       ny: int | None = None, nz: int | None = None,
                       params=None, horizons=None) -> ExperimentConfig:
    from .grid import Grid2D

    grid = cfg.grid if ny is None else Grid2D(ny, nz if nz is not None else ny)
    return ExperimentConfig(
        params=params if params is not None else cfg.params_for(grid.ny),
        grid=grid,
        dt=cfg.dt,
        ensemble_size=n_members,
        seeds=[seed_split(cfg.seed, kind, i) for i in range(n_members)],
        horizons=list(horizons) if horizons else [],
        observable=cfg.experiments["ergodicity"]["observable"],
        workers=cfg.workers,
        config_hash=cfg.hash,
    )


def _run_experiment(kind: str, cfg: RunConfig, say):
    e = cfg.experiments
    if kind == "attractor":
        sec = e["attractor"]
        xc = _experiment_config(cfg, "attractor", 1, horizons=sec["horizons"])
        say(f"pullback attractor: {sec['ics']} ICs, horizons {sec['horizons']}")
        return pullback_attractor(xc, n_ics=sec["ics"])
    if kind == "determining":
        sec = e["determining"]
        xc = _experiment_config(cfg, "determining", sec["seeds"],
                                ny=sec["ny"], nz=sec["nz"])
        say(f"determining modes: sweep {sec['modes']}")
        return determining_modes(xc, modes_list=sec["modes"],
                                 horizon=sec["horizon"], tol=sec["tol"],
                                 ra_super=sec["ra_super"])
    if kind == "fixedpoint":
        sec = e["fixedpoint"]
        base = cfg.params_for(sec["ny"])
        p = small_data_params(base, sec["data_scale"], sec["nu"])
        xc = _experiment_config(cfg, "fixedpoint", sec["realizations"],
                                ny=sec["ny"], nz=sec["nz"], params=p)
        say(f"fixed-point contraction: {sec['realizations']} realizations")
        return fixed_point_contraction(xc, n_pairs=sec["pairs"],
                                       fit_horizon=sec["fit_horizon"])
    if kind == "ergodicity":
        sec = e["ergodicity"]
        base = cfg.params_for(sec["ny"])
        p = small_data_params(base, sec["data_scale"], sec["nu"])
        xc = _experiment_config(cfg, "ergodicity", sec["members"],
                                ny=sec["ny"], nz=sec["nz"], params=p)
        say(f"ergodicity: T_long={sec['t_long']}, K={sec['members']}")
        return ergodicity_check(xc, t_long=sec["t_long"], t_late=sec["t_late"],
                                burn_in=sec["burn_in"])
    if kind == "feedback":
        sec = e["feedback"]
        xc = _experiment_config(cfg, "feedback", sec["members"],
                                ny=sec["ny"], nz=sec["nz"])
        say(f"theta feedback bound: K={sec['members']}, t_end={sec['t_end']}")
        return theta_feedback_bound(xc, t_end=sec["t_end"],
                                    plateau_from=sec["plateau_from"],
                                    sweep=tuple(sec["sweep"]))
    raise ConfigError(f"unknown command {kind!r}")


# ---------------------------------------------------------------------------
# selftest: the quick closed-form example suite of every module


def _selftest_cases():
    import warnings
    from dataclasses import replace

    from .grid import (BoundarySpec, Field1D, Field2D, Grid2D, arakawa_jacobian,
                       diffusion_apply, norms, poisson_solve_dirichlet, trace_top)
    from .model import (TransformedState, default_params, rhs_transformed,
                        state_norms, step_imex, to_u, to_v)
    from .stochastic import (NoiseSpectrum, OUModeState, ou_advance,
                             stationary_ou_path, wiener_increment, wiener_shift)
    from .diagnostics import poincare_check
    from .config import parse_config
    from .formats import Snapshot, read_snapshot, write_snapshot
    import tempfile

    g = Grid2D(16, 16)
    Y, Z = np.meshgrid(g.y, g.z, indexing="ij")
    zero2 = np.zeros(g.shape)

    def poisson_zero():
        psi = poisson_solve_dirichlet(Field2D(g, zero2))
        assert np.all(psi.values == 0.0)

    def poisson_eigenfunction():
        q = Field2D(g, 2 * np.pi**2 * np.sin(np.pi * Y) * np.sin(np.pi * Z))
        psi = poisson_solve_dirichlet(q)
        assert np.max(np.abs(psi.values - np.sin(np.pi * Y) * np.sin(np.pi * Z))) < 5e-3

    def jacobian_self():
        fvals = np.sin(np.pi * Y) * np.sin(2 * np.pi * Z)
        f = Field2D(g, fvals)
        scale = np.max(np.abs(fvals)) ** 2 / (g.dy * g.dz)
        assert np.max(np.abs(arakawa_jacobian(f, f, "odd").values)) <= 1e-12 * scale
        psi = Field2D(g, np.sin(np.pi * Y) * np.sin(np.pi * Z))
        c = Field2D(g, np.full(g.shape, 3.7))
        assert np.max(np.abs(arakawa_jacobian(c, psi).values)) < 1e-12
        assert np.max(np.abs(arakawa_jacobian(psi, c, "odd").values)) == 0.0

    def diffusion_constant():
        c = Field2D(g, np.full(g.shape, 2.5))
        out = diffusion_apply(c, BoundarySpec("neumann-zero-all"))
        assert np.max(np.abs(out.values)) < 1e-10

    def trace_examples():
        f = Field2D(g, Z.copy())
        assert np.allclose(trace_top(f).values, 1.0)
        f2 = Field2D(g, np.sin(np.pi * Y) * Z)
        assert np.allclose(trace_top(f2).values, np.sin(np.pi * g.y))

    def norm_examples():
        n0 = norms(Field2D(g, zero2))
        assert n0.l2_sq == 0.0 and n0.grad_sq == 0.0
        n1 = norms(Field2D(g, np.ones(g.shape)))
        assert abs(n1.l2_sq - 1.0) < 1e-12 and n1.grad_sq < 1e-20

    def wiener_zero_dt():
        spec = NoiseSpectrum(0.1, 1.0, 4)
        rng = np.random.Generator(np.random.Philox(key=1))
        dw = wiener_increment(spec, 0.0, rng, 16)
        assert np.all(dw.values == 0.0)

    def ou_decay():
        spec = NoiseSpectrum(0.0, 1.0, 4)
        lam = np.array([(k * np.pi) ** 2 + 1.0 for k in range(5)])
        state = OUModeState(np.array([0.0, 1.0, 0.0, 0.0, 0.0]), lam)
        dtv = 0.01
        for _ in range(100):
            state = ou_advance(state, dtv, np.zeros(5))
        expect = (1.0 + dtv * lam[1]) ** (-100)
        assert abs(state.modes[1] - expect) < 1e-12

    def shift_identity():
        spec = NoiseSpectrum(0.1, 1.0, 4)
        b = Field1D(np.full(17, 0.5))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pth = stationary_ou_path(spec, b, 0.0, 1.0, 0.01, 3)
        assert np.array_equal(wiener_shift(pth, 0.0).modes, pth.modes)

    def rhs_equilibrium():
        p = default_params(16)
        p0 = replace(p, a=0.0,
                     s_a=Field1D(np.zeros(17)), s_o=Field1D(np.zeros(17)),
                     f_flux=Field1D(np.zeros(17)))
        v = TransformedState.make(Field1D(np.zeros(17)), Field2D(g, zero2),
                                  Field2D(g, zero2), Field2D(g, zero2))
        tend = rhs_transformed(v, Field1D(np.zeros(17)), p0)
        for arr in (tend.theta.values, tend.q.values, tend.t_ocean.values,
                    tend.s_ocean.values):
            assert np.max(np.abs(arr)) < 1e-12

    def rhs_uniform_relaxation():
        p = default_params(16)
        p0 = replace(p, a=0.3, b=Field1D(np.zeros(17)),
                     s_a=Field1D(np.zeros(17)), s_o=Field1D(np.zeros(17)),
                     f_flux=Field1D(np.zeros(17)))
        th0 = 0.8
        v = TransformedState.make(Field1D(np.full(17, th0)), Field2D(g, zero2),
                                  Field2D(g, zero2), Field2D(g, zero2))
        tend = rhs_transformed(v, Field1D(np.zeros(17)), p0)
        assert np.max(np.abs(tend.theta.values + (0.3 + th0))) < 1e-10

    def step_identity():
        p = default_params(16)
        rng = np.random.Generator(np.random.Philox(key=5))
        v = TransformedState.make(Field1D(rng.standard_normal(17)),
                                  Field2D(g, zero2), Field2D(g, zero2),
                                  Field2D(g, zero2))
        z0 = Field1D(np.zeros(17))
        out = step_imex(v, z0, z0, p, 0.0)
        assert np.array_equal(out.theta.values, v.theta.values)

    def transform_roundtrip():
        rng = np.random.Generator(np.random.Philox(key=6))
        v = TransformedState.make(Field1D(rng.standard_normal(17)),
                                  Field2D(g, zero2), Field2D(g, zero2),
                                  Field2D(g, zero2))
        z = Field1D(rng.standard_normal(17))
        u = to_u(v, z)
        back = to_v(u, z)
        # theta re-subtraction is exact to one rounding; q, T, S are copies
        assert np.max(np.abs(back.theta.values - v.theta.values)) < 1e-14
        assert np.array_equal(back.q.values, v.q.values)
        zero = Field1D(np.zeros(17))
        assert np.array_equal(to_u(v, zero).theta.values, v.theta.values)

    def poincare_examples():
        assert poincare_check(Field2D(g, zero2)) == 0.0
        ratio = poincare_check(Field2D(g, np.ones(g.shape)))
        assert abs(ratio - 0.5) < 1e-12

    def config_defaults():
        c = parse_config("")
        assert c.grid.ny == 64 and c.params.pr == 1.0

    def config_rejects():
        try:
            parse_config("[model]\nb = constant:1.3\n")
        except ConfigError as exc:
            assert "b(y)" in str(exc)
        else:
            raise AssertionError("b = 1.3 accepted")
        try:
            parse_config("[model]\nf = cosine:0.05,0.1,1\n")
        except ConfigError as exc:
            assert "integral" in str(exc)
        else:
            raise AssertionError("nonzero-integral F accepted")

    def seed_split_examples():
        assert seed_split(7, "noise", 0) == seed_split(7, "noise", 0)
        assert seed_split(7, "noise", 0) != seed_split(7, "noise", 1)
        assert seed_split(7, "ic", 0) != seed_split(7, "noise", 0)

    def snapshot_roundtrip():
        rng = np.random.Generator(np.random.Philox(key=8))
        snap = Snapshot(16, 16, 1.25, {
            "theta": rng.standard_normal(17),
            "q": rng.standard_normal((17, 17)),
        })
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.snap"
            write_snapshot(path, snap)
            back = read_snapshot(path)
        assert back.time == 1.25
        assert np.array_equal(back.fields["q"], snap.fields["q"])

    return [
        ("poisson zero field", poisson_zero),
        ("poisson eigenfunction", poisson_eigenfunction),
        ("jacobian J(f,f)=0 and J(const,psi)=0", jacobian_self),
        ("diffusion of constant", diffusion_constant),
        ("trace restriction", trace_examples),
        ("trapezoidal norms", norm_examples),
        ("wiener increment dt=0", wiener_zero_dt),
        ("ou zero-noise decay", ou_decay),
        ("wiener shift identity", shift_identity),
        ("rhs zero equilibrium", rhs_equilibrium),
        ("rhs uniform relaxation", rhs_uniform_relaxation),
        ("step dt=0 identity", step_identity),
        ("transform roundtrip", transform_roundtrip),
        ("poincare examples", poincare_examples),
        ("config defaults", config_defaults),
        ("config constraint rejection", config_rejects),
        ("seed split determinism", seed_split_examples),
        ("snapshot roundtrip", snapshot_roundtrip),
    ]


def _run_selftest(quiet: bool) -> int:
    failures = 0
    for name, fn in _selftest_cases():
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"FAIL {name}: {exc}")
            continue
        if not quiet:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} selftest case(s) failed")
        return 1
    if not quiet:
        print("selftest passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
