"""Batched multi-channel signals on a spherical grid, plus SFLD file I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import (EQUIANGULAR, GAUSSIAN, SphericalGrid,
                   build_equiangular_grid, build_gaussian_grid, same_grid)

SFLD_MAGIC = "SFLD"
SFLD_VERSION = 1


class GridMismatchError(ValueError):
    """Raised when fields that must share a grid do not."""


@dataclass(frozen=True, eq=False)
class Field:
    """Real signal sampled on a grid, indexed (batch, channel, lat, lon)."""

    values: np.ndarray
    grid: SphericalGrid

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError("field values must be (batch, channel, lat, lon)")
        if v.shape[2] != self.grid.nlat or v.shape[3] != self.grid.nlon:
            raise ValueError(
                f"field shape {v.shape} does not match grid "
                f"({self.grid.nlat}, {self.grid.nlon})")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def batch(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]


def constant_field(grid, value=1.0, batch=1, channels=1) -> Field:
    return Field(np.full((batch, channels, grid.nlat, grid.nlon),
                         float(value)), grid)


def random_field(grid, channels=1, batch=1, rng=None) -> Field:
    rng = np.random.default_rng(rng)
    return Field(rng.standard_normal((batch, channels, grid.nlat, grid.nlon)),
                 grid)


def roll_longitude(field: Field, shift: int) -> Field:
    """Circularly shift all columns eastward by ``shift`` grid steps."""
    return Field(np.roll(field.values, shift, axis=-1), field.grid)


def require_same_grid(*fields):
    first = fields[0].grid
    for f in fields[1:]:
        if not same_grid(first, f.grid):
            raise GridMismatchError("fields are sampled on different grids")
    return first


def _rebuild_grid(family, nlat, nlon) -> SphericalGrid:
    if family == EQUIANGULAR:
        return build_equiangular_grid(nlat, nlon)
    if family == GAUSSIAN:
        return build_gaussian_grid(nlat, nlon)
    raise ValueError(f"unknown grid family {family!r}")


def write_sfld(field: Field, path) -> None:
    """Write a field in the SFLD/1 format.

    One UTF-8 JSON header line terminated by a newline, then the raw values
    as little-endian float64 in row-major (batch-major) order.
    """
    header = {
        "magic": SFLD_MAGIC,
        "version": SFLD_VERSION,
        "shape": list(field.values.shape),
        "dtype": "f64",
        "grid": {
            "family": field.grid.family,
            "nlat": field.grid.nlat,
            "nlon": field.grid.nlon,
        },
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


class MalformedFileError(ValueError):
    """Raised when a serialized file does not match its declared format."""


def read_sfld(path) -> Field:
    """Read a field written by :func:`write_sfld`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"bad SFLD header: {exc}") from exc
        if header.get("magic") != SFLD_MAGIC:
            raise MalformedFileError("not an SFLD file")
        if header.get("version") != SFLD_VERSION:
            raise MalformedFileError(
                f"unsupported SFLD version {header.get('version')}")
        if header.get("dtype") != "f64":
            raise MalformedFileError(
                f"unsupported SFLD dtype {header.get('dtype')}")
        shape = tuple(header["shape"])
        if len(shape) != 4:
            raise MalformedFileError("SFLD shape must have 4 entries")
        count = int(np.prod(shape))
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise MalformedFileError("SFLD payload truncated")
        values = np.frombuffer(raw, dtype="<f8").reshape(shape)
    g = header["grid"]
    grid = _rebuild_grid(g["family"], g["nlat"], g["nlon"])
    return Field(values.astype(np.float64), grid)
