"""Standalone readers for the simulator's published file formats.

These deliberately do not import the simulator package: the figures tool
consumes the on-disk contracts only.

Energy CSV: header `time,h_sq,v_sq,htilde_sq,q_sq,trace_t_sq,s_mass,z_sq`
(columns append-only to the right). Experiment CSVs carry their own small
headers. Snapshots: magic "CAOM", version u32, ny u32, nz u32, time f64,
field count u32, then 16-byte name tags followed by little-endian float64
payloads, 2-D fields y-fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["InputError", "read_csv_columns", "read_snapshot", "SnapshotData",
           "ENERGY_COLUMNS"]

ENERGY_COLUMNS = ("time", "h_sq", "v_sq", "htilde_sq", "q_sq", "trace_t_sq",
                  "s_mass", "z_sq")

_MAGIC = b"CAOM"
_VERSION = 1
_NAME_BYTES = 16
_1D_FIELDS = ("theta", "z")


class InputError(ValueError):
    """Malformed input file; message names the file and the offending part."""


def read_csv_columns(path: "str | Path", expect_prefix: tuple = ()) -> dict:
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").strip().splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not lines:
        raise InputError(f"{path}: empty file")
    names = lines[0].split(",")
    if expect_prefix and tuple(names[: len(expect_prefix)]) != tuple(expect_prefix):
        raise InputError(
            f"{path}: header {lines[0]!r} does not start with "
            f"{','.join(expect_prefix)!r}"
        )
    rows = np.zeros((len(lines) - 1, len(names)))
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != len(names):
            raise InputError(f"{path}: row {i} has {len(parts)} fields, "
                             f"expected {len(names)}")
        try:
            rows[i - 1] = [float(p) for p in parts]
        except ValueError:
            bad = next(p for p in parts if not _is_float(p))
            raise InputError(f"{path}: row {i}: bad number {bad!r}") from None
    return {name: rows[:, j] for j, name in enumerate(names)}


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


@dataclass
class SnapshotData:
    ny: int
    nz: int
    time: float
    fields: dict


def read_snapshot(path: "str | Path") -> SnapshotData:
    path = Path(path)
    raw = path.read_bytes()
    head_fmt = "<IIIdI"
    head_len = 4 + struct.calcsize(head_fmt)
    if len(raw) < head_len:
        raise InputError(f"{path}: truncated header")
    if raw[:4] != _MAGIC:
        raise InputError(f"{path}: bad magic {raw[:4]!r}")
    version, ny, nz, time, n_fields = struct.unpack(head_fmt, raw[4:head_len])
    if version != _VERSION:
        raise InputError(f"{path}: unsupported version {version}")
    fields = {}
    off = head_len
    for k in range(n_fields):
        if off + _NAME_BYTES > len(raw):
            raise InputError(f"{path}: truncated tag for field {k}")
        name = raw[off : off + _NAME_BYTES].rstrip(b"\x00").decode("ascii",
                                                                   "replace")
        off += _NAME_BYTES
        if name in _1D_FIELDS:
            shape = (ny + 1,)
        else:
            shape = (ny + 1, nz + 1)
        count = int(np.prod(shape))
        if off + 8 * count > len(raw):
            raise InputError(f"{path}: truncated payload for field {name!r}")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        fields[name] = flat.reshape(shape, order="F").copy()
        off += 8 * count
    if off != len(raw):
        raise InputError(f"{path}: {len(raw) - off} trailing bytes")
    return SnapshotData(ny, nz, time, fields)
