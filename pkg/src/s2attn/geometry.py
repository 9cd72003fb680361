"""Geodesic distance and rotations of the sphere.

Distances use the haversine/atan2 form, which keeps full precision at both
d ~ 0 (where arccos of a dot product loses half the digits) and d ~ pi.
Rotations are stored as unit quaternions; ZYZ Euler angles are accepted as
the conventional construction and CLI input format.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def sph_to_cart(theta, phi):
    """Unit vectors for colatitude/longitude arrays, stacked on a last axis."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)],
                    axis=-1)


def cart_to_sph(xyz):
    """Colatitude in [0, pi] and longitude wrapped to [0, 2*pi)."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    theta = np.arctan2(np.hypot(x, y), z)
    phi = np.arctan2(y, x) % TWO_PI
    # guard against phi == 2*pi after rounding of tiny negative angles
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return theta, phi


def geodesic_distance(a, b):
    """Great-circle distance between points on the unit sphere, in [0, pi].

    Points may be given as (colat, lon) pairs (trailing axis of size 2) or
    as Cartesian unit vectors (trailing axis of size 3); both arguments must
    use the same form.  Broadcasts over leading axes.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] == 2 and b.shape[-1] == 2:
        t1, p1 = a[..., 0], a[..., 1]
        t2, p2 = b[..., 0], b[..., 1]
        # haversine with colatitudes: cos(lat) = sin(colat)
        h = (np.sin(0.5 * (t2 - t1)) ** 2
             + np.sin(t1) * np.sin(t2) * np.sin(0.5 * (p2 - p1)) ** 2)
        h = np.clip(h, 0.0, 1.0)
        return 2.0 * np.arctan2(np.sqrt(h), np.sqrt(1.0 - h))
    if a.shape[-1] == 3 and b.shape[-1] == 3:
        cross = np.linalg.norm(np.cross(a, b), axis=-1)
        dot = np.sum(a * b, axis=-1)
        return np.arctan2(cross, dot)
    raise ValueError("points must have a trailing axis of size 2 or 3")


def _quat_multiply(q1, q2):
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


@dataclass(frozen=True, eq=False)
class Rotation:
    """Element of SO(3) stored as a unit quaternion (w, x, y, z)."""

    quaternion: np.ndarray

    def __post_init__(self):
        q = np.ascontiguousarray(self.quaternion, dtype=np.float64)
        if q.shape != (4,):
            raise ValueError("quaternion must have shape (4,)")
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise ValueError("quaternion must have unit norm")
        q = q / norm
        q.setflags(write=False)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def about_z(cls, angle):
        return cls(np.array([np.cos(0.5 * angle), 0.0, 0.0,
                             np.sin(0.5 * angle)]))

    @classmethod
    def about_y(cls, angle):
        return cls(np.array([np.cos(0.5 * angle), 0.0, np.sin(0.5 * angle),
                             0.0]))

    @classmethod
    def from_euler_zyz(cls, alpha, beta, gamma):
        """R = Rz(alpha) Ry(beta) Rz(gamma)."""
        q = _quat_multiply(cls.about_z(alpha).quaternion,
                           _quat_multiply(cls.about_y(beta).quaternion,
                                          cls.about_z(gamma).quaternion))
        return cls(q)

    @classmethod
    def random(cls, rng=None):
        """Haar-uniform rotation from a normalized Gaussian 4-vector."""
        rng = np.random.default_rng(rng)
        q = rng.standard_normal(4)
        return cls(q / np.linalg.norm(q))

    def compose(self, other: "Rotation") -> "Rotation":
        """Rotation applying ``other`` first, then ``self``."""
        return Rotation(_quat_multiply(self.quaternion, other.quaternion))

    def inverse(self) -> "Rotation":
        w, x, y, z = self.quaternion
        return Rotation(np.array([w, -x, -y, -z]))

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])

    def apply(self, xyz) -> np.ndarray:
        """Rotate Cartesian vectors (trailing axis of size 3)."""
        return np.asarray(xyz, dtype=np.float64) @ self.as_matrix().T

    def is_z_rotation(self) -> bool:
        x, y = self.quaternion[1], self.quaternion[2]
        return x == 0.0 and y == 0.0

    def z_angle(self) -> float:
        """Signed rotation angle about z; only meaningful for z-rotations."""
        w, _, _, z = self.quaternion
        return 2.0 * np.arctan2(z, w)


def rotate_grid_points(grid, rotation: Rotation) -> np.ndarray:
    """Coordinates of R^{-1} x for every grid point x.

    Returns an array of shape (nlat, nlon, 2) holding (colat, lon) with the
    longitude wrapped to [0, 2*pi).  Rotating by R^{-1} gives the sampling
    targets for realizing ``output(x) = input(R^{-1} x)``.
    """
    pts = sph_to_cart(grid.colatitudes[:, None], grid.longitudes[None, :])
    theta, phi = cart_to_sph(rotation.inverse().apply(pts))
    return np.stack([theta, phi], axis=-1)
