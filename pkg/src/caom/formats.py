"""On-disk formats: energy CSV, binary snapshots, and path replay frames.

Snapshot layout (little endian):
    magic "CAOM" | version u32 | ny u32 | nz u32 | time f64 | field count u32
    then per field: 16-byte zero-padded name tag | float64 payload.
2-D payloads are stored y-fastest (Fortran order of the (ny+1, nz+1) node
array); 1-D profiles store ny+1 values. The header is validated before any
payload is read. Write -> read round trips are bit-exact.

CSV columns are append-only across versions: new columns only at the end.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diagnostics import EnergyRecord
from .grid import Field1D
from .stochastic import NoiseSpectrum, ReplayPath

__all__ = [
    "FormatError",
    "Snapshot",
    "write_snapshot",
    "read_snapshot",
    "snapshot_from_state",
    "write_energy_csv",
    "read_energy_csv",
    "write_ou_path",
    "read_ou_path",
]

MAGIC = b"CAOM"
VERSION = 1
PATH_MAGIC = b"CAOP"
_NAME_BYTES = 16
_MAX_FIELDS = 64

FIELD_1D = ("theta", "z")
FIELD_2D = ("q", "t", "s", "psi")


class FormatError(ValueError):
    """Malformed snapshot or CSV content."""


@dataclass
class Snapshot:
    ny: int
    nz: int
    time: float
    fields: dict  # name -> ndarray, 1-D (ny+1,) or 2-D (ny+1, nz+1)


def _field_shape(name: str, ny: int, nz: int):
    if name in FIELD_1D:
        return (ny + 1,)
    if name in FIELD_2D:
        return (ny + 1, nz + 1)
    raise FormatError(f"unknown snapshot field {name!r}")


def write_snapshot(path: "str | Path", snap: Snapshot) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<IIIdI", VERSION, snap.ny, snap.nz, snap.time,
                        len(snap.fields))
    for name, arr in snap.fields.items():
        tag = name.encode("ascii")
        if len(tag) > _NAME_BYTES:
            raise FormatError(f"field name {name!r} exceeds {_NAME_BYTES} bytes")
        blob += tag.ljust(_NAME_BYTES, b"\x00")
        arr = np.asarray(arr, dtype="<f8")
        expect = _field_shape(name, snap.ny, snap.nz)
        if arr.shape != expect:
            raise FormatError(
                f"field {name!r} has shape {arr.shape}, expected {expect}"
            )
        blob += arr.tobytes(order="F")
    Path(path).write_bytes(bytes(blob))


def read_snapshot(path: "str | Path") -> Snapshot:
    raw = Path(path).read_bytes()
    head = 4 + struct.calcsize("<IIIdI")
    if len(raw) < head:
        raise FormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, ny, nz, time, n_fields = struct.unpack("<IIIdI", raw[4:head])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported snapshot version {version}")
    if not (4 <= ny <= 1 << 16 and 4 <= nz <= 1 << 16):
        raise FormatError(f"{path}: implausible grid {ny}x{nz}")
    if n_fields > _MAX_FIELDS:
        raise FormatError(f"{path}: implausible field count {n_fields}")
    fields = {}
    off = head
    for _ in range(n_fields):
        if off + _NAME_BYTES > len(raw):
            raise FormatError(f"{path}: truncated field tag")
        name = raw[off : off + _NAME_BYTES].rstrip(b"\x00").decode("ascii")
        off += _NAME_BYTES
        shape = _field_shape(name, ny, nz)
        count = int(np.prod(shape))
        nbytes = count * 8
        if off + nbytes > len(raw):
            raise FormatError(f"{path}: truncated payload for field {name!r}")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        fields[name] = flat.reshape(shape, order="F").copy()
        off += nbytes
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return Snapshot(ny, nz, time, fields)


def snapshot_from_state(state, z: "Field1D | None" = None) -> Snapshot:
    grid = state.grid
    fields = {
        "theta": state.theta.values,
        "q": state.q.values,
        "t": state.t_ocean.values,
        "s": state.s_ocean.values,
        "psi": state.psi.values,
    }
    if z is not None:
        fields["z"] = z.values
    return Snapshot(grid.ny, grid.nz, state.time, fields)


# ---------------------------------------------------------------------------
# energy CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def write_energy_csv(path: "str | Path", record: EnergyRecord) -> None:
    lines = [",".join(EnergyRecord.CSV_COLUMNS)]
    for row in record.csv_rows():
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_energy_csv(path: "str | Path") -> dict:
    text = Path(path).read_text(encoding="ascii").strip().splitlines()
    if not text:
        raise FormatError(f"{path}: empty energy CSV")
    names = text[0].split(",")
    if names[: len(EnergyRecord.CSV_COLUMNS)] != list(EnergyRecord.CSV_COLUMNS):
        raise FormatError(f"{path}: unexpected CSV header {text[0]!r}")
    data = np.zeros((len(text) - 1, len(names)))
    for i, line in enumerate(text[1:], start=1):
        parts = line.split(",")
        if len(parts) != len(names):
            raise FormatError(f"{path}: row {i} has {len(parts)} fields, "
                              f"expected {len(names)}")
        try:
            data[i - 1] = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from exc
    return {name: data[:, j] for j, name in enumerate(names)}


# ---------------------------------------------------------------------------
# OU path replay frames


def write_ou_path(path: "str | Path", ou) -> None:
    b = ou.b_profile.values
    modes = np.ascontiguousarray(ou.modes, dtype="<f8")
    blob = bytearray()
    blob += PATH_MAGIC
    blob += struct.pack(
        "<IqqqdddI", VERSION, int(ou.seed) - (1 << 63), ou.i0, ou.i1, ou.dt,
        ou.spec.sigma0, ou.spec.gamma, ou.spec.n_modes,
    )
    blob += struct.pack("<I", b.size)
    blob += np.asarray(b, dtype="<f8").tobytes()
    blob += modes.tobytes()
    Path(path).write_bytes(bytes(blob))


def read_ou_path(path: "str | Path") -> ReplayPath:
    raw = Path(path).read_bytes()
    if raw[:4] != PATH_MAGIC:
        raise FormatError(f"{path}: bad path magic {raw[:4]!r}")
    fmt = "<IqqqdddI"
    head = 4 + struct.calcsize(fmt)
    version, seed_off, i0, i1, dt, sigma0, gamma, n_modes = struct.unpack(
        fmt, raw[4:head]
    )
    if version != VERSION:
        raise FormatError(f"{path}: unsupported path version {version}")
    (nb,) = struct.unpack("<I", raw[head : head + 4])
    off = head + 4
    b = np.frombuffer(raw, dtype="<f8", count=nb, offset=off).copy()
    off += nb * 8
    n_times = i1 - i0 + 1
    modes = np.frombuffer(raw, dtype="<f8", count=n_times * (n_modes + 1),
                          offset=off).reshape(n_times, n_modes + 1).copy()
    if off + modes.nbytes != len(raw):
        raise FormatError(f"{path}: trailing bytes in path frame")
    return ReplayPath(
        spec=NoiseSpectrum(sigma0, gamma, n_modes),
        b_profile=Field1D(b),
        dt=dt,
        seed=seed_off + (1 << 63),
        i0=i0,
        i1=i1,
        modes=modes,
    )
