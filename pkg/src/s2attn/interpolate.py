"""Bilinear interpolation on the sphere and rotation of sampled fields."""

from __future__ import annotations

import numpy as np

from .field import Field
from .geometry import TWO_PI, Rotation, rotate_grid_points


def interpolate_bilinear(field: Field, targets) -> np.ndarray:
    """Sample a field at (colat, lon) targets by separable linear interpolation.

    Longitude wraps periodically; colatitudes beyond the outermost grid rows
    clamp to the nearest row (the clamped band vanishes with resolution and
    the equiangular pole row carries zero quadrature weight anyway).  Targets
    may have any leading shape with a trailing axis of size 2; the result has
    shape (batch, channels) + leading shape.  Values at grid nodes are
    reproduced exactly.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[-1] != 2:
        raise ValueError("targets must have a trailing axis of size 2")
    grid = field.grid
    theta = targets[..., 0]
    phi = targets[..., 1] % TWO_PI

    colat = grid.colatitudes
    i0 = np.clip(np.searchsorted(colat, theta, side="right") - 1,
                 0, grid.nlat - 1)
    i1 = np.minimum(i0 + 1, grid.nlat - 1)
    dtheta = colat[i1] - colat[i0]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(dtheta > 0, (theta - colat[i0]) / dtheta, 0.0)
    u = np.clip(u, 0.0, 1.0)

    lon = grid.longitudes
    j0 = np.clip(np.searchsorted(lon, phi, side="right") - 1, 0, grid.nlon - 1)
    j1 = (j0 + 1) % grid.nlon
    dphi = np.where(j1 > j0, lon[j1] - lon[j0], TWO_PI - lon[-1])
    v = np.clip((phi - lon[j0]) / dphi, 0.0, 1.0)

    vals = field.values
    f00 = vals[:, :, i0, j0]
    f01 = vals[:, :, i0, j1]
    f10 = vals[:, :, i1, j0]
    f11 = vals[:, :, i1, j1]
    return ((1 - u) * (1 - v) * f00 + (1 - u) * v * f01
            + u * (1 - v) * f10 + u * v * f11)


def _exact_column_roll(rotation: Rotation, nlon: int):
    """Column shift equivalent to ``rotation``, or None if there is none.

    A rotation about the z-axis by an integer multiple of the longitude
    spacing maps grid nodes onto grid nodes, so the resampled field is an
    exact column permutation rather than an interpolation.
    """
    if not rotation.is_z_rotation():
        return None
    steps = rotation.z_angle() * nlon / TWO_PI
    nearest = np.rint(steps)
    if abs(steps - nearest) > 1e-9:
        return None
    return int(nearest) % nlon


def rotate_field(field: Field, rotation: Rotation) -> Field:
    """Resample a field so that ``output(x) = input(R^{-1} x)``.

    Azimuthal rotations aligned with the grid reduce to an exact column
    roll; anything else is realized by bilinear interpolation at the rotated
    grid points.
    """
    roll = _exact_column_roll(rotation, field.grid.nlon)
    if roll is not None:
        return Field(np.roll(field.values, roll, axis=-1), field.grid)
    targets = rotate_grid_points(field.grid, rotation)
    return Field(interpolate_bilinear(field, targets), field.grid)
