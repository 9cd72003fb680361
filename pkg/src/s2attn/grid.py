"""Spherical grids with per-point quadrature weights.

Both grid families share the layout: ``nlat`` colatitude rows ascending in
[0, pi] and ``nlon`` uniformly spaced longitude columns, with a quadrature
weight per row (the weight of a point depends only on its latitude index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EQUIANGULAR = "equiangular"
GAUSSIAN = "gaussian"
FOUR_PI = 4.0 * np.pi

_GAUSS_NEWTON_TOL = 1e-14
_GAUSS_NEWTON_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Latitude-longitude grid on the unit sphere.

    Attributes
    ----------
    family:
        Node-layout tag, ``"equiangular"`` or ``"gaussian"``.
    nlat, nlon:
        Number of colatitude rows / longitude columns.
    colatitudes:
        Row colatitudes in radians, strictly ascending in [0, pi].
    longitudes:
        Column longitudes, exactly ``2*pi*j/nlon``.
    row_weights:
        Quadrature weight per point in row i, in steradians.  The total
        solid angle ``nlon * row_weights.sum()`` approximates 4*pi.
    """

    family: str
    nlat: int
    nlon: int
    colatitudes: np.ndarray
    longitudes: np.ndarray
    row_weights: np.ndarray

    def __post_init__(self):
        if self.family not in (EQUIANGULAR, GAUSSIAN):
            raise ValueError(f"unknown grid family {self.family!r}")
        colat = np.ascontiguousarray(self.colatitudes, dtype=np.float64)
        lon = np.ascontiguousarray(self.longitudes, dtype=np.float64)
        w = np.ascontiguousarray(self.row_weights, dtype=np.float64)
        if colat.shape != (self.nlat,) or w.shape != (self.nlat,):
            raise ValueError("colatitudes/row_weights must have shape (nlat,)")
        if lon.shape != (self.nlon,):
            raise ValueError("longitudes must have shape (nlon,)")
        if np.any(np.diff(colat) <= 0) or colat[0] < 0 or colat[-1] > np.pi:
            raise ValueError("colatitudes must ascend strictly within [0, pi]")
        if not np.array_equal(lon, uniform_longitudes(self.nlon)):
            raise ValueError("longitudes must be exactly 2*pi*j/nlon")
        if np.any(w < 0):
            raise ValueError("quadrature weights must be non-negative")
        for name, arr in (("colatitudes", colat), ("longitudes", lon),
                          ("row_weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def npoints(self):
        return self.nlat * self.nlon

    @property
    def weights2d(self):
        """Per-point weights broadcast to shape (nlat, nlon)."""
        return np.broadcast_to(self.row_weights[:, None],
                               (self.nlat, self.nlon))

    def total_weight(self):
        """Sum of all point weights; converges to 4*pi with resolution."""
        return self.nlon * float(np.sum(self.row_weights))

    def points(self):
        """All grid points as a (nlat, nlon, 2) array of (colat, lon)."""
        t = np.broadcast_to(self.colatitudes[:, None], (self.nlat, self.nlon))
        p = np.broadcast_to(self.longitudes[None, :], (self.nlat, self.nlon))
        return np.stack([t, p], axis=-1)


def uniform_longitudes(nlon):
    return np.arange(nlon) * (2.0 * np.pi / nlon)


def same_grid(a: SphericalGrid, b: SphericalGrid) -> bool:
    """True if two grids describe the same discretization."""
    return (a.family == b.family and a.nlat == b.nlat and a.nlon == b.nlon
            and np.array_equal(a.colatitudes, b.colatitudes)
            and np.array_equal(a.row_weights, b.row_weights))


def build_equiangular_grid(nlat: int, nlon: int) -> SphericalGrid:
    """Equiangular grid with trapezoidal quadrature weights.

    Colatitudes are ``pi*i/nlat`` for i = 0..nlat-1 (the north-pole row is
    included, the south pole is not) and the weight of every point in row i
    is ``(2*pi**2 / (nlat*nlon)) * sin(colat_i)``.  The pole row carries
    zero weight and is therefore inert under integration.
    """
    if nlat < 2 or nlon < 2:
        raise ValueError("equiangular grid requires nlat >= 2 and nlon >= 2")
    colat = np.pi * np.arange(nlat) / nlat
    w = (2.0 * np.pi**2 / (nlat * nlon)) * np.sin(colat)
    return SphericalGrid(EQUIANGULAR, nlat, nlon, colat,
                         uniform_longitudes(nlon), w)


def build_gaussian_grid(nlat: int, nlon: int) -> SphericalGrid:
    """Gaussian grid: colatitude cosines at Legendre roots.

    ``cos(colat_i)`` are the nlat roots of the Legendre polynomial P_nlat,
    found by Newton iteration, and row weights are ``2*pi/nlon`` times the
    Gauss-Legendre weights, so the total solid angle is 4*pi to machine
    precision at any resolution.
    """
    if nlat < 1 or nlon < 2:
        raise ValueError("gaussian grid requires nlat >= 1 and nlon >= 2")
    nodes, gl_weights = gauss_legendre_nodes(nlat)
    # nodes descend in cos(theta), so colatitudes ascend
    colat = np.arccos(nodes)
    w = (2.0 * np.pi / nlon) * gl_weights
    return SphericalGrid(GAUSSIAN, nlat, nlon, colat,
                         uniform_longitudes(nlon), w)


def _legendre_and_derivative(n, x):
    """P_n(x) and P_n'(x) by the three-term recurrence, vectorized in x."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    if n == 1:
        return p, np.ones_like(x)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre_nodes(n: int):
    """Roots of P_n and the matching Gauss-Legendre weights on [-1, 1].

    Newton iteration from the Chebyshev-like initial guesses; raises if the
    update has not dropped below 1e-14 within the iteration cap.
    """
    k = np.arange(n)
    x = np.cos(np.pi * (k + 0.75) / (n + 0.5))
    for _ in range(_GAUSS_NEWTON_MAX_ITER):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _GAUSS_NEWTON_TOL:
            break
    else:
        raise RuntimeError(
            f"Gauss-Legendre Newton iteration for n={n} did not converge to "
            f"{_GAUSS_NEWTON_TOL} within {_GAUSS_NEWTON_MAX_ITER} steps")
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return x, w


def zero_weight_rows(grid: SphericalGrid) -> np.ndarray:
    """Indices of latitude rows whose quadrature weight is exactly zero."""
    return np.flatnonzero(grid.row_weights == 0.0)


def integrate(field) -> np.ndarray:
    """Quadrature integral of a field, per batch and channel.

    Returns an array of shape (batch, channels) holding
    ``sum_ij values[b, c, i, j] * weight_ij``.
    """
    return np.einsum("bchw,h->bc", field.values, field.grid.row_weights)
