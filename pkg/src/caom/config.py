"""Run configuration: flat INI-style text, strictly validated.

Every key has a default; unknown sections or keys are hard errors, and all
physical constraints (ocean fraction range, zero-integral freshwater flux,
trace-class noise) are enforced at parse time with the offending key named.
Profiles accept three forms:

    constant:VALUE            flat profile
    cosine:A0,A1,M            A0 + A1 cos(M pi y)
    nodes:v0,v1,...,vn        inline node list (must match ny + 1 values)
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .grid import Field1D, Grid2D
from .model import ModelParams
from .stochastic import NoiseSpectrum

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "config_hash"]


class ConfigError(ValueError):
    """Bad configuration text; message carries the section/key or line."""


_SCHEMA = {
    "grid": {"ny": ("int", 64), "nz": ("int", 64)},
    "time": {"dt": ("float", 1e-3), "t_end": ("float", 10.0)},
    "model": {
        "a": ("float", 0.5),
        "pr": ("float", 1.0),
        "ra": ("float", 500.0),
        "nu": ("float", 1.0),
        "b": ("profile", "constant:0.7"),
        "s_a": ("profile", "cosine:1.0,-0.4,2"),
        "s_o": ("profile", "cosine:0.5,-0.2,2"),
        "f": ("profile", "cosine:0.0,0.1,1"),
    },
    "noise": {
        "sigma0": ("float", 0.1),
        "gamma": ("float", 1.0),
        "n_modes": ("int", 32),
    },
    "output": {
        "dir": ("str", "out"),
        "stride": ("int", 100),
        "snapshot_stride": ("int", 0),
    },
    "run": {"seed": ("int", 12345), "workers": ("int", 1)},
    "attractor": {
        "ics": ("int", 16),
        "horizons": ("floatlist", "1,2,4,8,16"),
    },
    "determining": {
        "modes": ("intlist", "0,1,2,4,8,16,32,64"),
        "horizon": ("float", 50.0),
        "seeds": ("int", 8),
        "ny": ("int", 32),
        "nz": ("int", 32),
        "tol": ("float", 1e-6),
        "ra_super": ("float", 0.0),
    },
    "fixedpoint": {
        "realizations": ("int", 32),
        "pairs": ("int", 4),
        "data_scale": ("float", 0.01),
        "nu": ("float", 10.0),
        "fit_horizon": ("float", 10.0),
        "ny": ("int", 32),
        "nz": ("int", 32),
    },
    "ergodicity": {
        "t_long": ("float", 1000.0),
        "members": ("int", 64),
        "t_late": ("float", 20.0),
        "burn_in": ("float", 100.0),
        "observable": ("str", "theta_l2_sq"),
        "data_scale": ("float", 0.01),
        "nu": ("float", 10.0),
        "ny": ("int", 32),
        "nz": ("int", 32),
    },
    "feedback": {
        "members": ("int", 32),
        "t_end": ("float", 40.0),
        "plateau_from": ("float", 20.0),
        "sweep": ("floatlist", "0.25,1.0,4.0"),
        "ny": ("int", 32),
        "nz": ("int", 32),
    },
}

_OBSERVABLES = ("h_norm_sq", "theta_mean", "theta_l2_sq")


@dataclass
class RunConfig:
    grid: Grid2D
    dt: float
    t_end: float
    params: ModelParams
    out_dir: str
    stride: int
    snapshot_stride: int
    seed: int
    workers: int
    experiments: dict
    defaulted: list = field(default_factory=list)
    canonical: str = ""
    model_spec: dict = field(default_factory=dict)
    noise_spec: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.canonical)

    def params_for(self, ny: int) -> ModelParams:
        """Model parameters with profiles re-resolved on an ny-cell mesh.

        Functional profile forms re-evaluate exactly; inline node lists are
        linearly interpolated.
        """
        if ny == self.grid.ny:
            return self.params
        m = self.model_spec
        profiles = {}
        for key in ("b", "s_a", "s_o", "f"):
            spec_text = m[key]
            if spec_text.startswith("nodes:"):
                src = _resolve_profile(spec_text, self.grid.ny, f"model.{key}")
                y_new = np.linspace(0.0, 1.0, ny + 1)
                profiles[key] = Field1D(np.interp(y_new, src.y, src.values))
            else:
                profiles[key] = _resolve_profile(spec_text, ny, f"model.{key}")
        n = self.noise_spec
        return ModelParams(
            a=m["a"], pr=m["pr"], ra=m["ra"], nu=m["nu"],
            b=profiles["b"], s_a=profiles["s_a"], s_o=profiles["s_o"],
            f_flux=profiles["f"],
            noise=NoiseSpectrum(n["sigma0"], n["gamma"], n["n_modes"]),
        )


def config_hash(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()[:12]


def _parse_scalar(kind: str, text: str, where: str):
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            return text.strip()
        if kind == "floatlist":
            return [float(p) for p in text.split(",") if p.strip() != ""]
        if kind == "intlist":
            return [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} as {kind}") from exc
    if kind == "profile":
        return text.strip()
    raise ConfigError(f"{where}: unknown schema kind {kind}")


def _resolve_profile(spec_text: str, ny: int, where: str) -> Field1D:
    y = np.linspace(0.0, 1.0, ny + 1)
    head, _, rest = spec_text.partition(":")
    head = head.strip()
    try:
        if head == "constant":
            return Field1D(np.full(ny + 1, float(rest)))
        if head == "cosine":
            a0, a1, m = (float(p) for p in rest.split(","))
            if m != int(m) or m < 0:
                raise ConfigError(f"{where}: cosine mode index must be a "
                                  f"nonnegative integer, got {m}")
            return Field1D(a0 + a1 * np.cos(int(m) * np.pi * y))
        if head == "nodes":
            vals = np.array([float(p) for p in rest.split(",")])
            if vals.size != ny + 1:
                raise ConfigError(
                    f"{where}: inline profile has {vals.size} nodes, grid "
                    f"needs ny + 1 = {ny + 1}"
                )
            return Field1D(vals)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: malformed profile {spec_text!r}") from exc
    raise ConfigError(
        f"{where}: unknown profile form {head!r} (use constant:, cosine:, nodes:)"
    )


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; empty text gives all defaults."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    values: dict[str, dict] = {}
    defaulted: list[str] = []
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            where = f"{section}.{key}"
            if cp.has_option(section, key):
                raw = cp.get(section, key)
            else:
                raw = str(default)
                defaulted.append(where)
            values[section][key] = _parse_scalar(kind, raw, where)

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    ny, nz = values["grid"]["ny"], values["grid"]["nz"]
    try:
        grid = Grid2D(ny, nz)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    dt = values["time"]["dt"]
    if dt <= 0:
        raise ConfigError("time.dt must be positive")
    if values["time"]["t_end"] <= 0:
        raise ConfigError("time.t_end must be positive")

    m = values["model"]
    profiles = {}
    for key in ("b", "s_a", "s_o", "f"):
        profiles[key] = _resolve_profile(m[key], ny, f"model.{key}")
    n = values["noise"]
    try:
        noise = NoiseSpectrum(n["sigma0"], n["gamma"], n["n_modes"])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from exc
    try:
        params = ModelParams(
            a=m["a"], pr=m["pr"], ra=m["ra"], nu=m["nu"],
            b=profiles["b"], s_a=profiles["s_a"], s_o=profiles["s_o"],
            f_flux=profiles["f"], noise=noise,
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    exps = {k: dict(values[k]) for k in
            ("attractor", "determining", "fixedpoint", "ergodicity", "feedback")}
    if exps["ergodicity"]["observable"] not in _OBSERVABLES:
        raise ConfigError(
            f"ergodicity.observable must be one of {_OBSERVABLES}, got "
            f"{exps['ergodicity']['observable']!r}"
        )
    hz = exps["attractor"]["horizons"]
    if any(b <= a for a, b in zip(hz, hz[1:])) or not hz:
        raise ConfigError("attractor.horizons must be strictly increasing")

    canonical = _canonical_dump(values)
    return RunConfig(
        grid=grid,
        dt=dt,
        t_end=values["time"]["t_end"],
        params=params,
        out_dir=values["output"]["dir"],
        stride=values["output"]["stride"],
        snapshot_stride=values["output"]["snapshot_stride"],
        seed=values["run"]["seed"],
        workers=values["run"]["workers"],
        experiments=exps,
        defaulted=defaulted,
        canonical=canonical,
        model_spec=dict(values["model"]),
        noise_spec=dict(values["noise"]),
    )


def _canonical_dump(values: dict) -> str:
    out = io.StringIO()
    for section in sorted(values):
        out.write(f"[{section}]\n")
        for key in sorted(values[section]):
            v = values[section][key]
            if isinstance(v, list):
                v = ",".join(repr(x) for x in v)
            out.write(f"{key} = {v}\n")
    return out.getvalue()


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
