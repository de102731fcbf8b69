"""File formats: CSV tables, binary rasters, and timestamp records.

All formats are deterministic: identical data produces byte-identical
files.  CSV uses '.' decimals, '\\n' line endings and a header row;
floats are written with ``repr`` so values round-trip exactly.

Binary layouts (little-endian throughout):

* Raster: 32-byte header (8-byte magic ``SSRASTR1``, u32 nx, u32 ny,
  f64 dx in nm, f64 value scale) followed by ny*nx row-major f64.
* Timestamps: 16-byte header (8-byte magic ``SSTSTMP1``, u64 count)
  followed by count u64 nanosecond stamps.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .peaks import Profile1D

__all__ = [
    "RASTER_MAGIC",
    "TIMESTAMP_MAGIC",
    "FormatError",
    "Raster",
    "write_csv",
    "read_csv",
    "write_raster",
    "read_raster",
    "write_timestamps",
    "read_timestamps",
    "write_profile",
    "read_profile",
]

RASTER_MAGIC = b"SSRASTR1"
TIMESTAMP_MAGIC = b"SSTSTMP1"

_RASTER_HEADER = struct.Struct("<8sIIdd")
_TIMESTAMP_HEADER = struct.Struct("<8sQ")


class FormatError(ValueError):
    """File contents do not match the expected binary layout."""


@dataclass(frozen=True)
class Raster:
    values: np.ndarray
    dx_nm: float
    value_scale: float = 1.0


def _format_cell(v) -> str:
    # repr keeps the shortest exact decimal for floats; everything else
    # falls back to str.
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Write a table; an empty row iterable yields a header-only file."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty CSV, expected a header row") from None
        return header, [row for row in reader]


def write_raster(path, values: np.ndarray, dx_nm: float, value_scale: float = 1.0) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"raster values must be 2-D, got shape {values.shape}")
    ny, nx = values.shape
    header = _RASTER_HEADER.pack(RASTER_MAGIC, nx, ny, float(dx_nm), float(value_scale))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_raster(path) -> Raster:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_RASTER_HEADER.size)
        if len(raw) != _RASTER_HEADER.size:
            raise FormatError(f"{path}: truncated raster header")
        magic, nx, ny, dx_nm, scale = _RASTER_HEADER.unpack(raw)
        if magic != RASTER_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {RASTER_MAGIC!r}")
        data = fh.read(8 * nx * ny)
        if len(data) != 8 * nx * ny:
            raise FormatError(f"{path}: raster payload shorter than {nx}x{ny} floats")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after raster payload")
    values = np.frombuffer(data, dtype="<f8").reshape(ny, nx).copy()
    return Raster(values=values, dx_nm=dx_nm, value_scale=scale)


def write_timestamps(path, stamps_ns) -> None:
    """Write one channel's timestamps, rounding to whole nanoseconds."""
    ts = np.asarray(stamps_ns)
    if ts.ndim != 1:
        raise ValueError(f"timestamps must be 1-D, got shape {ts.shape}")
    if ts.size and np.any(ts < 0):
        raise ValueError("timestamps must be non-negative")
    as_u64 = np.round(ts).astype("<u8")
    with open(path, "wb") as fh:
        fh.write(_TIMESTAMP_HEADER.pack(TIMESTAMP_MAGIC, ts.size))
        fh.write(as_u64.tobytes())


def read_timestamps(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_TIMESTAMP_HEADER.size)
        if len(raw) != _TIMESTAMP_HEADER.size:
            raise FormatError(f"{path}: truncated timestamp header")
        magic, count = _TIMESTAMP_HEADER.unpack(raw)
        if magic != TIMESTAMP_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {TIMESTAMP_MAGIC!r}")
        data = fh.read(8 * count)
        if len(data) != 8 * count:
            raise FormatError(f"{path}: expected {count} stamps, payload short")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after timestamp payload")
    return np.frombuffer(data, dtype="<u8").copy()


def write_profile(path, profile: Profile1D) -> None:
    """Two- or three-column CSV depending on whether sigmas are present."""
    if profile.sigma is None:
        write_csv(path, ["position_nm", "value"],
                  zip(profile.positions_nm, profile.values))
    else:
        write_csv(path, ["position_nm", "value", "sigma"],
                  zip(profile.positions_nm, profile.values, profile.sigma))


def read_profile(path) -> Profile1D:
    header, rows = read_csv(path)
    if header[:2] != ["position_nm", "value"]:
        raise FormatError(f"{path}: unexpected profile header {header}")
    if not rows:
        raise FormatError(f"{path}: profile has no data rows")
    cols = np.array([[float(c) for c in row] for row in rows])
    sigma = cols[:, 2] if len(header) > 2 else None
    return Profile1D(positions_nm=cols[:, 0], values=cols[:, 1], sigma=sigma)
