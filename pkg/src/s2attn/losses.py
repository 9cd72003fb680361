"""Quadrature-weighted losses and segmentation metrics on the sphere.

Every reduction uses the normalized discrete measure w_ij / sum(w): the
discrete total takes the role of 4*pi, so identities such as
T_p + F_p + F_n + T_n = 1 and CE(uniform) = ln C hold to machine precision
on any grid family, not only where the weights sum to 4*pi exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Field, require_same_grid
from .grid import SphericalGrid


def _point_measure(grid: SphericalGrid, point_weights=None):
    w = np.broadcast_to(grid.row_weights[:, None],
                        (grid.nlat, grid.nlon)).copy()
    if point_weights is not None:
        pw = np.asarray(point_weights, dtype=np.float64)
        if pw.shape != (grid.nlat, grid.nlon):
            raise ValueError("point_weights must have shape (nlat, nlon)")
        if np.any(pw < 0):
            raise ValueError("point_weights must be non-negative")
        w *= pw
    total = w.sum()
    if total <= 0:
        raise ValueError("total measure is zero; nothing to average over")
    return w / total


def _weighted_mean(integrand, grid, point_weights=None) -> float:
    """Mean of a (B, C, H, W) integrand over the sphere, batch, and channels."""
    measure = _point_measure(grid, point_weights)
    per_bc = np.einsum("bchw,hw->bc", integrand, measure)
    return float(per_bc.mean())


def l1_distance(u: Field, u_star: Field, point_weights=None) -> float:
    """Normalized integral of |u - u*| over the sphere."""
    grid = require_same_grid(u, u_star)
    if u.values.shape != u_star.values.shape:
        raise ValueError("fields must have the same shape")
    return _weighted_mean(np.abs(u.values - u_star.values), grid,
                          point_weights)


def l2_distance_sq(u: Field, u_star: Field, point_weights=None) -> float:
    """Normalized integral of (u - u*)**2 over the sphere."""
    grid = require_same_grid(u, u_star)
    if u.values.shape != u_star.values.shape:
        raise ValueError("fields must have the same shape")
    return _weighted_mean((u.values - u_star.values) ** 2, grid,
                          point_weights)


def _spherical_gradient_parts(values, grid):
    """|d/dphi . / sin(theta)| + |d/dtheta .| per point.

    Second-order stencils: periodic central differences in longitude,
    np.gradient with edge_order=2 along the (possibly non-uniform)
    colatitudes.  Zero-weight pole rows are excluded from the azimuthal
    term, matching their zero quadrature contribution.
    """
    dphi = 2.0 * np.pi / grid.nlon
    dlon = (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1))
    dlon /= 2.0 * dphi
    dlat = np.gradient(values, grid.colatitudes, axis=2, edge_order=2)
    sin_t = np.sin(grid.colatitudes)
    inv_sin = np.divide(1.0, sin_t, out=np.zeros_like(sin_t),
                        where=sin_t > 0)
    return np.abs(dlon) * inv_sin[:, None] + np.abs(dlat)


def sobolev_w11_seminorm(u: Field, u_star: Field, point_weights=None) -> float:
    """First-order Sobolev semi-norm of u - u* (vanishes on constants)."""
    grid = require_same_grid(u, u_star)
    if u.values.shape != u_star.values.shape:
        raise ValueError("fields must have the same shape")
    integrand = _spherical_gradient_parts(u.values - u_star.values, grid)
    return _weighted_mean(integrand, grid, point_weights)


def depth_loss(u: Field, u_star: Field, lam: float = 0.1,
               point_weights=None) -> float:
    """L1 distance plus ``lam`` times the Sobolev W11 semi-norm."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return (l1_distance(u, u_star, point_weights)
            + lam * sobolev_w11_seminorm(u, u_star, point_weights))


def latitude_band_mask(grid: SphericalGrid, fraction: float = 0.15):
    """Per-point 0/1 weights masking the given colatitude fraction per pole."""
    if not 0.0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    keep = ((grid.colatitudes >= fraction * np.pi)
            & (grid.colatitudes <= (1.0 - fraction) * np.pi))
    return np.broadcast_to(keep[:, None].astype(np.float64),
                           (grid.nlat, grid.nlon)).copy()


@dataclass(frozen=True, eq=False)
class ClassMask:
    """Integer class labels per grid point, batched."""

    labels: np.ndarray  # (B, H, W) integers in [0, num_classes)
    num_classes: int
    grid: SphericalGrid

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.int64)
        if lab.ndim != 3:
            raise ValueError("labels must be (batch, lat, lon)")
        if lab.shape[1] != self.grid.nlat or lab.shape[2] != self.grid.nlon:
            raise ValueError("labels do not match the grid shape")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if lab.min() < 0 or lab.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_one_hot(cls, field: Field) -> "ClassMask":
        v = field.values
        if not np.all((v == 0.0) | (v == 1.0)):
            raise ValueError("one-hot field must contain only 0 and 1")
        if not np.all(v.sum(axis=1) == 1.0):
            raise ValueError("one-hot channels must sum to 1 at every point")
        return cls(np.argmax(v, axis=1), field.channels, field.grid)

    def to_one_hot(self) -> Field:
        b, h, w = self.labels.shape
        values = np.zeros((b, self.num_classes, h, w))
        bb, hh, ww = np.ogrid[:b, :h, :w]
        values[bb, self.labels, hh, ww] = 1.0
        return Field(values, self.grid)


def _check_masks(pred: ClassMask, truth: ClassMask):
    if pred.num_classes != truth.num_classes:
        raise ValueError("class counts differ between prediction and truth")
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("mask shapes differ")
    if not (pred.grid.nlat == truth.grid.nlat
            and pred.grid.nlon == truth.grid.nlon):
        raise ValueError("masks live on different grids")


def confusion_fractions(pred: ClassMask, truth: ClassMask,
                        point_weights=None):
    """Per-class area fractions (T_p, F_p, F_n, T_n), each summing to one.

    Fractions are measured with the normalized quadrature weights and
    averaged over the batch; for every class the four entries add to 1.
    Returns four arrays of shape (num_classes,).
    """
    _check_masks(pred, truth)
    grid = pred.grid
    measure = _point_measure(grid, point_weights) / pred.labels.shape[0]
    c = pred.num_classes
    t_p = np.zeros(c)
    f_p = np.zeros(c)
    f_n = np.zeros(c)
    for cls_idx in range(c):
        p = pred.labels == cls_idx
        t = truth.labels == cls_idx
        t_p[cls_idx] = np.sum((p & t) * measure)
        f_p[cls_idx] = np.sum((p & ~t) * measure)
        f_n[cls_idx] = np.sum((~p & t) * measure)
    t_n = 1.0 - (t_p + f_p + f_n)
    return t_p, f_p, f_n, t_n


def iou_micro(pred: ClassMask, truth: ClassMask, point_weights=None) -> float:
    """Micro-averaged intersection over union.

    Class sums are taken separately in numerator and denominator.  An empty
    denominator (no predictions and no truth in any class) is defined as a
    perfect score of 1.
    """
    t_p, f_p, f_n, _ = confusion_fractions(pred, truth, point_weights)
    denom = np.sum(t_p + f_p + f_n)
    if denom == 0.0:
        return 1.0
    return float(np.sum(t_p) / denom)


def accuracy(pred: ClassMask, truth: ClassMask, point_weights=None) -> float:
    """Fraction of correctly labelled area, averaged over classes."""
    t_p, _, _, t_n = confusion_fractions(pred, truth, point_weights)
    return float(np.mean(t_p + t_n))


def _log_softmax(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(scores: Field, target: ClassMask,
                  point_weights=None) -> float:
    """Softmax cross entropy of unconstrained scores, averaged with weights.

    ``scores`` carries one channel per class.  This is the raw-score entry
    point; see :func:`cross_entropy_from_probabilities` for the variant that
    first maps probabilities through log(u / (1 - u)).
    """
    if scores.channels < 2:
        raise ValueError("cross entropy requires at least 2 classes")
    if scores.channels != target.num_classes:
        raise ValueError("score channels must equal the class count")
    if scores.batch != target.labels.shape[0]:
        raise ValueError("batch sizes differ")
    grid = scores.grid
    measure = _point_measure(grid, point_weights)
    logp = _log_softmax(scores.values)
    b, _, h, w = scores.values.shape
    bb, hh, ww = np.ogrid[:b, :h, :w]
    picked = logp[bb, target.labels, hh, ww]
    return float(-np.einsum("bhw,hw->b", picked, measure).mean())


def cross_entropy_from_probabilities(probs: Field, target: ClassMask,
                                     point_weights=None) -> float:
    """Cross entropy of per-class probabilities via the log(u/(1-u)) map.

    Probabilities must lie strictly inside (0, 1); the logits operator is
    undefined outside.
    """
    v = probs.values
    if np.any(v <= 0.0) or np.any(v >= 1.0):
        raise ValueError("probabilities must lie strictly in (0, 1)")
    logits = np.log(v / (1.0 - v))
    return cross_entropy(Field(logits, probs.grid), target, point_weights)
