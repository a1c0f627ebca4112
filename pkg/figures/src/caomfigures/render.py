"""Figure rendering from simulator output files.

Every plotted series is drawn from file columns, never recomputed, and
rendering is deterministic: identical inputs and style produce pixel-
identical images. Each renderer returns the extrema of what it plotted so
callers can verify the no-recomputation contract against the files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .readers import ENERGY_COLUMNS, InputError, read_csv_columns, read_snapshot

__all__ = ["FigureJob", "render", "KINDS"]

_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


@dataclass
class FigureJob:
    """One rendering task: input files, figure kind, output image, style."""

    kind: str
    inputs: list
    output: str
    log_y: bool = False
    title: str = ""
    decay_rate: float | None = None  # optional e^{-rate t} overlay (energy)
    heat_field: str = "t"
    extra: dict = field(default_factory=dict)


def _save(fig, job: FigureJob):
    out = Path(job.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=out.suffix.lstrip(".") or "png", metadata={})
    plt.close(fig)


def _single_input(job: FigureJob) -> Path:
    if len(job.inputs) != 1:
        raise InputError(f"figure kind {job.kind!r} needs exactly one input, "
                         f"got {len(job.inputs)}")
    return Path(job.inputs[0])


def _render_energy(job: FigureJob) -> dict:
    cols = read_csv_columns(_single_input(job), expect_prefix=ENERGY_COLUMNS)
    t = cols["time"]
    fig, ax = plt.subplots()
    for name in ("h_sq", "htilde_sq", "q_sq", "z_sq"):
        ax.plot(t, cols[name], label=name)
    if job.decay_rate is not None:
        ref = cols["htilde_sq"][0] * np.exp(-job.decay_rate * (t - t[0]))
        ax.plot(t, ref, "k--", label=f"exp(-{job.decay_rate:g} t)")
    if job.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("norm squared")
    ax.set_title(job.title or "energy record")
    ax.legend(loc="upper right")
    _save(fig, job)
    return {"h_sq": (float(np.min(cols["h_sq"])), float(np.max(cols["h_sq"]))),
            "time": (float(t[0]), float(t[-1]))}


def _render_attractor(job: FigureJob) -> dict:
    cols = read_csv_columns(_single_input(job), expect_prefix=("horizon",
                                                               "diameter"))
    fig, ax = plt.subplots()
    ax.plot(cols["horizon"], cols["diameter"], "o-")
    ax.set_yscale("log")
    ax.set_xlabel("pullback horizon T")
    ax.set_ylabel("ensemble H-diameter at t = 0")
    ax.set_title(job.title or "pullback attractor contraction")
    _save(fig, job)
    return {"diameter": (float(np.min(cols["diameter"])),
                         float(np.max(cols["diameter"])))}


def _render_determining(job: FigureJob) -> dict:
    cols = read_csv_columns(_single_input(job), expect_prefix=("seed",
                                                               "modes_n"))
    fig, ax = plt.subplots()
    for seed in np.unique(cols["seed"]):
        mask = cols["seed"] == seed
        ax.semilogy(cols["modes_n"][mask], cols["final_diff"][mask], "o-",
                    label=f"seed {int(seed) % 10000}")
    ax.set_xlabel("nudged mode block size")
    ax.set_ylabel("final state difference")
    ax.set_title(job.title or "determining modes")
    ax.legend(fontsize=7)
    _save(fig, job)
    return {"final_diff": (float(np.min(cols["final_diff"])),
                           float(np.max(cols["final_diff"])))}


def _render_ergodicity(job: FigureJob) -> dict:
    cols = read_csv_columns(_single_input(job), expect_prefix=("time",
                                                               "running_average"))
    fig, ax = plt.subplots()
    ax.plot(cols["time"], cols["running_average"])
    if job.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("running time average")
    ax.set_title(job.title or "ergodic running average")
    _save(fig, job)
    return {"running_average": (float(np.min(cols["running_average"])),
                                float(np.max(cols["running_average"])))}


def _render_heatmap(job: FigureJob) -> dict:
    snap = read_snapshot(_single_input(job))
    name = job.heat_field
    if name not in snap.fields:
        raise InputError(f"{job.inputs[0]}: field {name!r} not in snapshot "
                         f"(has {sorted(snap.fields)})")
    arr = snap.fields[name]
    if arr.ndim != 2:
        raise InputError(f"{job.inputs[0]}: field {name!r} is 1-D; "
                         "heatmaps need a 2-D field")
    fig, ax = plt.subplots()
    im = ax.imshow(arr.T, origin="lower", extent=(0, 1, 0, 1),
                   aspect="auto", cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label=name)
    ax.set_xlabel("y")
    ax.set_ylabel("z")
    ax.set_title(job.title or f"{name} at t = {snap.time:g}")
    _save(fig, job)
    return {name: (float(np.min(arr)), float(np.max(arr)))}


def _render_hovmoller(job: FigureJob) -> dict:
    if len(job.inputs) < 2:
        raise InputError("hovmoller needs a sequence of at least two snapshots")
    rows = []
    times = []
    ny = None
    for p in sorted(str(x) for x in job.inputs):
        snap = read_snapshot(p)
        if "theta" not in snap.fields:
            raise InputError(f"{p}: snapshot lacks the theta profile")
        if ny is None:
            ny = snap.ny
        elif snap.ny != ny:
            raise InputError(f"{p}: grid ny = {snap.ny} differs from {ny}")
        rows.append(snap.fields["theta"])
        times.append(snap.time)
    order = np.argsort(times)
    data = np.array(rows)[order]
    times = np.array(times)[order]
    fig, ax = plt.subplots()
    im = ax.imshow(data.T, origin="lower", aspect="auto",
                   extent=(times[0], times[-1], 0, 1), cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label="theta")
    ax.set_xlabel("time")
    ax.set_ylabel("y")
    ax.set_title(job.title or "atmospheric temperature hovmoller")
    _save(fig, job)
    return {"theta": (float(np.min(data)), float(np.max(data)))}


KINDS = {
    "energy": _render_energy,
    "attractor": _render_attractor,
    "determining": _render_determining,
    "ergodicity": _render_ergodicity,
    "heatmap": _render_heatmap,
    "hovmoller": _render_hovmoller,
}


def render(job: FigureJob) -> dict:
    """Render one job; returns the plotted extrema per headline series."""
    if job.kind not in KINDS:
        raise InputError(f"unknown figure kind {job.kind!r} "
                         f"(available: {sorted(KINDS)})")
    if not job.inputs:
        raise InputError("no input files given")
    for p in job.inputs:
        if not Path(p).exists():
            raise InputError(f"input file not found: {p}")
    with plt.rc_context(_STYLE):
        return KINDS[job.kind](job)
