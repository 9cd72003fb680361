"""Geometrically faithful attention on the two-dimensional sphere.

Global and geodesic-neighborhood attention discretized with quadrature
rules, plus the surrounding machinery: grids, rotations, interpolation,
spherical harmonics, losses, and a forward-only attention block.
"""

from . import backends
from ._threads import get_num_threads, set_num_threads
from .attention import (AttentionConfig, attention_dense_sequence,
                        s2_attention_forward, s2_attention_forward_logmask)
from .block import (BlockParams, block_forward, forward_blocks,
                    init_block_params, instance_norm, read_sprm, write_sprm)
from .field import (Field, GridMismatchError, MalformedFileError,
                    constant_field, random_field, read_sfld, roll_longitude,
                    write_sfld)
from .geometry import (Rotation, cart_to_sph, geodesic_distance,
                       rotate_grid_points, sph_to_cart)
from .grid import (SphericalGrid, build_equiangular_grid, build_gaussian_grid,
                   integrate, same_grid)
from .harmonics import (HarmonicIndex, associated_legendre,
                        random_bandlimited_field, real_sph_harmonic,
                        spectral_position_embedding)
from .interpolate import interpolate_bilinear, rotate_field
from .losses import (ClassMask, accuracy, confusion_fractions, cross_entropy,
                     cross_entropy_from_probabilities, depth_loss,
                     iou_micro, l1_distance, l2_distance_sq,
                     latitude_band_mask, sobolev_w11_seminorm)
from .neighborhood import (NeighborhoodMap, build_neighborhood,
                           default_theta_cutoff,
                           neighborhood_attention_backward,
                           neighborhood_attention_forward, read_snbr,
                           write_snbr)

__version__ = "0.1.0"

__all__ = [
    "AttentionConfig", "BlockParams", "ClassMask", "Field",
    "GridMismatchError", "HarmonicIndex", "MalformedFileError",
    "NeighborhoodMap", "Rotation", "SphericalGrid", "accuracy",
    "associated_legendre", "attention_dense_sequence", "backends",
    "block_forward", "build_equiangular_grid", "build_gaussian_grid",
    "build_neighborhood", "cart_to_sph", "confusion_fractions",
    "constant_field", "cross_entropy", "cross_entropy_from_probabilities",
    "default_theta_cutoff", "depth_loss", "forward_blocks",
    "geodesic_distance", "get_num_threads", "init_block_params",
    "instance_norm", "integrate", "interpolate_bilinear", "iou_micro",
    "l1_distance", "l2_distance_sq", "latitude_band_mask",
    "neighborhood_attention_backward", "neighborhood_attention_forward",
    "random_bandlimited_field", "random_field", "read_sfld", "read_snbr",
    "read_sprm", "real_sph_harmonic", "roll_longitude", "rotate_field",
    "rotate_grid_points", "s2_attention_forward",
    "s2_attention_forward_logmask", "same_grid", "set_num_threads",
    "sobolev_w11_seminorm", "spectral_position_embedding", "sph_to_cart",
    "write_sfld", "write_snbr", "write_sprm",
]
