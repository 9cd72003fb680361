"""Real spherical harmonics and associated Legendre polynomials.

The associated Legendre recurrence carries the Condon-Shortley phase in
``P_l^m`` (seed ``P_m^m = (-1)^m (2m-1)!! (1-x^2)^{m/2}``).  The real basis
combines ``cos``/``sin`` azimuthal factors with a sqrt(2) so that the set
{Y_l^m} is orthonormal under the L2 inner product on the sphere; any fixed
orthonormal real convention is equally valid for positional embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .field import Field

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class HarmonicIndex:
    """Degree/order pair (l, m) with |m| <= l."""

    l: int
    m: int

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise ValueError(f"invalid harmonic index (l={self.l}, m={self.m})")

    @classmethod
    def from_channel(cls, k: int) -> "HarmonicIndex":
        """Channel-to-harmonic mapping: l = floor(sqrt(k)), m = k - l*(l+1)."""
        if k < 0:
            raise ValueError("channel index must be non-negative")
        l = math.isqrt(k)
        return cls(l, k - l * (l + 1))


def associated_legendre(l: int, m: int, x):
    """P_l^m(x) by the stable upward recurrence in l.

    Requires 0 <= m <= l and |x| <= 1; vectorized over x.
    """
    if m < 0 or m > l:
        raise ValueError("associated_legendre requires 0 <= m <= l")
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("argument must lie in [-1, 1]")
    x = np.clip(x, -1.0, 1.0)

    # seed: P_m^m = (-1)^m (2m-1)!! (1 - x^2)^{m/2}
    pmm = np.ones_like(x)
    if m > 0:
        s = np.sqrt((1.0 - x) * (1.0 + x))
        fact = 1.0
        for _ in range(m):
            pmm = -fact * s * pmm
            fact += 2.0
    if l == m:
        return pmm
    pmm1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return pmm1
    for ll in range(m + 2, l + 1):
        pmm, pmm1 = pmm1, ((2 * ll - 1) * x * pmm1
                           - (ll + m - 1) * pmm) / (ll - m)
    return pmm1


def norm_constant(l: int, m: int) -> float:
    """Orthonormalization factor sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!).

    Evaluated in log space so large degrees do not overflow the factorials.
    """
    return math.exp(0.5 * (math.log(2 * l + 1) - math.log(FOUR_PI)
                           + gammaln(l - m + 1) - gammaln(l + m + 1)))


def real_sph_harmonic(l: int, m: int, theta, phi):
    """Real orthonormal spherical harmonic Y_l^m at (colat, lon).

    m > 0 pairs with cos(m*phi), m < 0 with sin(|m|*phi), both scaled by
    sqrt(2); m = 0 is the zonal harmonic.  Broadcasts over theta/phi.
    """
    if abs(m) > l:
        raise ValueError("real_sph_harmonic requires |m| <= l")
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    am = abs(m)
    radial = norm_constant(l, am) * associated_legendre(l, am, np.cos(theta))
    if m == 0:
        return radial * np.ones_like(phi)
    if m > 0:
        return math.sqrt(2.0) * radial * np.cos(m * phi)
    return math.sqrt(2.0) * radial * np.sin(am * phi)


def spectral_position_embedding(grid, num_channels: int) -> Field:
    """Positional embedding whose channel k holds Y_l^m sampled on the grid.

    The degree/order of channel k follow the l = floor(sqrt(k)),
    m = k - l*(l+1) mapping, so channels enumerate the harmonics in
    spectral order starting from the constant mode.
    """
    if num_channels < 1:
        raise ValueError("num_channels must be >= 1")
    values = np.empty((1, num_channels, grid.nlat, grid.nlon))
    theta = grid.colatitudes[:, None]
    phi = grid.longitudes[None, :]
    for k in range(num_channels):
        idx = HarmonicIndex.from_channel(k)
        values[0, k] = real_sph_harmonic(idx.l, idx.m, theta, phi)
    return Field(values, grid)


def random_bandlimited_field(grid, lmax: int, channels=1, batch=1,
                             rng=None) -> Field:
    """Random field synthesized from harmonic coefficients with l <= lmax.

    Coefficients are i.i.d. standard normal per (batch, channel, mode); the
    same seed therefore yields the same underlying function on any grid,
    which is what resolution-refinement studies need.
    """
    if lmax < 0:
        raise ValueError("lmax must be non-negative")
    rng = np.random.default_rng(rng)
    num_modes = (lmax + 1) ** 2
    coef = rng.standard_normal((batch, channels, num_modes))
    theta = grid.colatitudes[:, None]
    phi = grid.longitudes[None, :]
    values = np.zeros((batch, channels, grid.nlat, grid.nlon))
    for k in range(num_modes):
        idx = HarmonicIndex.from_channel(k)
        mode = real_sph_harmonic(idx.l, idx.m, theta, phi)
        values += coef[:, :, k, None, None] * mode
    return Field(values, grid)
