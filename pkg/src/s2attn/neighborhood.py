"""Geodesic neighborhood attention: sparse map, forward, and gradients.

Because every grid here is translationally invariant in longitude, the
neighborhood of an output point (h, w) equals the neighborhood of (h, 0)
with all column indices shifted by w.  The map therefore stores, per output
row, a list of (source row, column offset) entries, plus the transposed
list per source row used to accumulate dk/dv deterministically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import backends
from ._threads import get_num_threads
from .attention import AttentionConfig, _check_qkv, merge_heads, split_heads
from .field import Field, MalformedFileError
from .geometry import geodesic_distance

SNBR_MAGIC = "SNBR"
SNBR_VERSION = 1


@dataclass(frozen=True, eq=False)
class NeighborhoodMap:
    """Sparse geodesic-disk adjacency for one grid resolution.

    Forward entries for output row h live in ``nbr_h/nbr_dw`` between
    ``row_ptr[h]`` and ``row_ptr[h+1]``; the key for query (h, w) and entry
    t sits at ``(nbr_h[t], (w + nbr_dw[t]) % nlon)``.  The reverse arrays
    are the exact transpose: for source row h' and entry t, the query sits
    at ``(rev_h[t], (w' - rev_dw[t]) % nlon)``.
    """

    theta_cutoff: float
    nlat: int
    nlon: int
    row_ptr: np.ndarray
    nbr_h: np.ndarray
    nbr_dw: np.ndarray
    rev_ptr: np.ndarray
    rev_h: np.ndarray
    rev_dw: np.ndarray

    def __post_init__(self):
        for name, dtype in (("row_ptr", np.int64), ("nbr_h", np.int32),
                            ("nbr_dw", np.int32), ("rev_ptr", np.int64),
                            ("rev_h", np.int32), ("rev_dw", np.int32)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def counts(self):
        """Neighbors per output row."""
        return np.diff(self.row_ptr)

    @property
    def num_edges(self):
        return int(self.row_ptr[-1])

    def neighbors_of_row(self, h):
        """(source row, column offset) pairs for output row h at w = 0."""
        t0, t1 = self.row_ptr[h], self.row_ptr[h + 1]
        return self.nbr_h[t0:t1], self.nbr_dw[t0:t1]


def build_neighborhood(grid, theta_cutoff: float) -> NeighborhoodMap:
    """Closed geodesic disks of radius ``theta_cutoff`` around each row.

    Membership is ``d(x_i, x_j) <= theta_cutoff`` with the haversine
    distance; ties on the boundary are included.  Entries are ordered by
    (source row, column offset), and the reverse map by (query row, offset).
    """
    if not (0.0 < theta_cutoff <= np.pi):
        raise ValueError("theta_cutoff must lie in (0, pi]")
    nlat, nlon = grid.nlat, grid.nlon
    points = grid.points()

    counts = np.zeros(nlat, dtype=np.int64)
    rows_per_h = []
    offsets_per_h = []
    for h in range(nlat):  # one anchor row at a time keeps memory O(nlat*nlon)
        anchor = np.array([grid.colatitudes[h], 0.0])
        inside = geodesic_distance(anchor, points) <= theta_cutoff
        src_h, src_dw = np.nonzero(inside)
        counts[h] = src_h.size
        rows_per_h.append(src_h)
        offsets_per_h.append(src_dw)

    row_ptr = np.zeros(nlat + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    out_row = np.repeat(np.arange(nlat), counts)
    nbr_h = np.concatenate(rows_per_h)
    nbr_dw = np.concatenate(offsets_per_h)

    # transpose: bucket edges by source row, keep (query row, offset) order
    order = np.lexsort((nbr_dw, out_row, nbr_h))
    rev_h = out_row[order]
    rev_dw = nbr_dw[order]
    rev_counts = np.bincount(nbr_h, minlength=nlat)
    rev_ptr = np.zeros(nlat + 1, dtype=np.int64)
    np.cumsum(rev_counts, out=rev_ptr[1:])

    return NeighborhoodMap(float(theta_cutoff), nlat, nlon, row_ptr,
                           nbr_h, nbr_dw, rev_ptr, rev_h, rev_dw)


def _check_map(grid, nbr_map: NeighborhoodMap):
    if nbr_map.nlat != grid.nlat or nbr_map.nlon != grid.nlon:
        raise ValueError(
            f"neighborhood map was built for a {nbr_map.nlat}x{nbr_map.nlon} "
            f"grid, got {grid.nlat}x{grid.nlon}")


def neighborhood_attention_forward(q: Field, k: Field, v: Field,
                                   nbr_map: NeighborhoodMap,
                                   config: AttentionConfig) -> Field:
    """Attention restricted to each query's geodesic disk.

    Same quadrature-weighted softmax as the global path, with keys limited
    to the map's entries.  A disk whose total quadrature weight is zero
    (possible only for pole-row queries with tiny cutoffs on equiangular
    grids) yields zero output.
    """
    grid = _check_qkv(q, k, v, config)
    _check_map(grid, nbr_map)
    qa = split_heads(q, config.heads)
    ka = split_heads(k, config.heads)
    va = split_heads(v, config.heads)
    out = backends.active().nbr_forward(
        qa, ka, va, grid.row_weights, nbr_map.row_ptr, nbr_map.nbr_h,
        nbr_map.nbr_dw, config.scale, get_num_threads())
    return merge_heads(out, q.batch, grid)


def neighborhood_attention_backward(q: Field, k: Field, v: Field, dy: Field,
                                    nbr_map: NeighborhoodMap,
                                    config: AttentionConfig):
    """Analytic input gradients (dq, dk, dv) for the neighborhood forward.

    The attention coefficients are recomputed on the fly (no stored softmax
    tape).  dq follows the quotient rule per query; dk sums the softmax-
    derivative contribution of every query whose disk contains the source
    point; dv is the attention-weighted upstream gradient.  The 1/sqrt(d)
    logit scale is carried through all three.
    """
    grid = _check_qkv(q, k, v, config)
    _check_map(grid, nbr_map)
    if dy.values.shape != v.values.shape:
        raise ValueError("dy must match v in shape")
    qa = split_heads(q, config.heads)
    ka = split_heads(k, config.heads)
    va = split_heads(v, config.heads)
    dya = split_heads(dy, config.heads)
    dq, dk, dv = backends.active().nbr_backward(
        qa, ka, va, dya, grid.row_weights, nbr_map.row_ptr, nbr_map.nbr_h,
        nbr_map.nbr_dw, nbr_map.rev_ptr, nbr_map.rev_h, nbr_map.rev_dw,
        config.scale, get_num_threads())
    return (merge_heads(dq, q.batch, grid), merge_heads(dk, q.batch, grid),
            merge_heads(dv, q.batch, grid))


def write_snbr(nbr_map: NeighborhoodMap, path) -> None:
    """Write a map in the SNBR/1 format.

    One JSON header line with the grid dimensions, cutoff, and per-row
    entry counts, then the forward entries as little-endian int32
    (source row, column offset) pairs, row by row.
    """
    header = {
        "magic": SNBR_MAGIC,
        "version": SNBR_VERSION,
        "nlat": nbr_map.nlat,
        "nlon": nbr_map.nlon,
        "theta_cutoff": nbr_map.theta_cutoff,
        "counts": nbr_map.counts.tolist(),
    }
    pairs = np.stack([nbr_map.nbr_h, nbr_map.nbr_dw], axis=-1)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(pairs, dtype="<i4").tobytes())


def read_snbr(path) -> NeighborhoodMap:
    """Read a map written by :func:`write_snbr`; the reverse map is rebuilt."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"bad SNBR header: {exc}") from exc
        if header.get("magic") != SNBR_MAGIC:
            raise MalformedFileError("not an SNBR file")
        if header.get("version") != SNBR_VERSION:
            raise MalformedFileError(
                f"unsupported SNBR version {header.get('version')}")
        nlat = int(header["nlat"])
        nlon = int(header["nlon"])
        counts = np.asarray(header["counts"], dtype=np.int64)
        if counts.shape != (nlat,):
            raise MalformedFileError("SNBR counts must list one entry per row")
        total = int(counts.sum())
        raw = fh.read(total * 8)
        if len(raw) != total * 8:
            raise MalformedFileError("SNBR payload truncated")
        pairs = np.frombuffer(raw, dtype="<i4").reshape(total, 2)

    row_ptr = np.zeros(nlat + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    nbr_h = pairs[:, 0].astype(np.int32)
    nbr_dw = pairs[:, 1].astype(np.int32)
    out_row = np.repeat(np.arange(nlat), counts)
    order = np.lexsort((nbr_dw, out_row, nbr_h))
    rev_h = out_row[order]
    rev_dw = nbr_dw[order]
    rev_ptr = np.zeros(nlat + 1, dtype=np.int64)
    np.cumsum(np.bincount(nbr_h, minlength=nlat), out=rev_ptr[1:])
    return NeighborhoodMap(float(header["theta_cutoff"]), nlat, nlon,
                           row_ptr, nbr_h, nbr_dw, rev_ptr, rev_h, rev_dw)


def default_theta_cutoff(nlat: int) -> float:
    """Cutoff whose disk area matches a 7x7 window at the equator."""
    return 7.0 * np.pi / (np.sqrt(np.pi) * nlat)
