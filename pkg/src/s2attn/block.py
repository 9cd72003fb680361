"""Forward-only pre-norm spherical attention block.

Structure per block: y = x + MHA(norm(x) + pos), out = y + MLP(norm(y)),
with quadrature-weighted instance normalization, multi-head spherical
attention (global or neighborhood), and a pointwise linear-GELU-linear MLP.
Training is out of scope, so parameters are plain arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .attention import AttentionConfig, s2_attention_forward
from .field import Field, MalformedFileError
from .neighborhood import NeighborhoodMap, neighborhood_attention_forward

SPRM_MAGIC = "SPRM"
SPRM_VERSION = 1

MODE_GLOBAL = "global"
MODE_NEIGHBORHOOD = "neighborhood"


@dataclass(frozen=True, eq=False)
class BlockParams:
    """Weights of one attention block.

    Projection matrices are (embed, embed); the MLP expands to
    ``mlp_hidden`` channels and back.  ``mode`` selects global attention or
    neighborhood attention with ``theta_cutoff``.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    heads: int
    eps: float = 1e-5
    mode: str = MODE_GLOBAL
    theta_cutoff: float | None = None

    def __post_init__(self):
        embed = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            m = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if m.shape != (embed, embed):
                raise ValueError(f"{name} must be square ({embed}, {embed})")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, m)
        hidden = self.mlp_w1.shape[0]
        shapes = {"mlp_w1": (hidden, embed), "mlp_b1": (hidden,),
                  "mlp_w2": (embed, hidden), "mlp_b2": (embed,)}
        for name, shape in shapes.items():
            m = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if m.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, m)
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if embed % self.heads != 0:
            raise ValueError("embed dimension must be divisible by heads")
        if self.mode not in (MODE_GLOBAL, MODE_NEIGHBORHOOD):
            raise ValueError(f"unknown block mode {self.mode!r}")
        if self.mode == MODE_NEIGHBORHOOD and self.theta_cutoff is None:
            raise ValueError("neighborhood mode requires theta_cutoff")

    @property
    def embed_dim(self):
        return self.w_q.shape[0]

    @property
    def mlp_hidden(self):
        return self.mlp_w1.shape[0]


def init_block_params(embed: int, heads: int, mlp_ratio: float = 4.0,
                      mode: str = MODE_GLOBAL, theta_cutoff=None,
                      eps: float = 1e-5, seed: int = 0) -> BlockParams:
    """Symmetric-uniform initialization scaled by 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    hidden = int(round(mlp_ratio * embed))

    def u(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return BlockParams(
        w_q=u((embed, embed), embed), w_k=u((embed, embed), embed),
        w_v=u((embed, embed), embed), w_o=u((embed, embed), embed),
        mlp_w1=u((hidden, embed), embed), mlp_b1=u((hidden,), embed),
        mlp_w2=u((embed, hidden), hidden), mlp_b2=u((embed,), hidden),
        heads=heads, eps=eps, mode=mode, theta_cutoff=theta_cutoff)


def instance_norm(field: Field, eps: float = 1e-5) -> Field:
    """Per-(batch, channel) standardization with quadrature-weighted stats.

    The spatial mean and variance use the normalized quadrature measure
    rather than plain pixel averages, which keeps the statistics consistent
    across discretizations and avoids oversampling the poles.
    """
    grid = field.grid
    w = grid.weights2d
    measure = w / w.sum()
    mean = np.einsum("bchw,hw->bc", field.values, measure)
    centered = field.values - mean[:, :, None, None]
    var = np.einsum("bchw,hw->bc", centered**2, measure)
    return Field(centered / np.sqrt(var + eps)[:, :, None, None], grid)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _project(values, matrix):
    # pointwise channel mixing: (out_c, in_c) x (B, in_c, H, W)
    return np.einsum("oc,bchw->bohw", matrix, values)


def pointwise_mlp(field: Field, params: BlockParams) -> Field:
    """linear -> GELU -> linear applied independently at every point."""
    h = _project(field.values, params.mlp_w1) + params.mlp_b1[None, :, None,
                                                              None]
    h = gelu(h)
    out = _project(h, params.mlp_w2) + params.mlp_b2[None, :, None, None]
    return Field(out, field.grid)


def multi_head_attention(field: Field, params: BlockParams,
                         nbr_map: NeighborhoodMap | None = None) -> Field:
    """Project to q/k/v, run per-head spherical attention, and recombine."""
    grid = field.grid
    config = AttentionConfig(head_dim=params.embed_dim // params.heads,
                             heads=params.heads,
                             theta_cutoff=params.theta_cutoff)
    q = Field(_project(field.values, params.w_q), grid)
    k = Field(_project(field.values, params.w_k), grid)
    v = Field(_project(field.values, params.w_v), grid)
    if params.mode == MODE_NEIGHBORHOOD:
        if nbr_map is None:
            raise ValueError("neighborhood mode requires a NeighborhoodMap")
        attn = neighborhood_attention_forward(q, k, v, nbr_map, config)
    else:
        if nbr_map is not None:
            raise ValueError("global mode must not receive a NeighborhoodMap")
        attn = s2_attention_forward(q, k, v, config)
    return Field(_project(attn.values, params.w_o), grid)


def block_forward(field: Field, params: BlockParams,
                  pos_embedding: Field | None = None,
                  nbr_map: NeighborhoodMap | None = None) -> Field:
    """One pre-norm block: attention and MLP, each behind a residual."""
    if pos_embedding is not None:
        if pos_embedding.channels != params.embed_dim:
            raise ValueError("positional embedding channels must match embed")
        pos = pos_embedding.values
    else:
        pos = 0.0
    normed = instance_norm(field, params.eps)
    attn_in = Field(normed.values + pos, field.grid)
    y = Field(field.values + multi_head_attention(attn_in, params,
                                                  nbr_map).values, field.grid)
    out = y.values + pointwise_mlp(instance_norm(y, params.eps), params).values
    return Field(out, field.grid)


def forward_blocks(field: Field, blocks, pos_embedding: Field | None = None,
                   nbr_map: NeighborhoodMap | None = None,
                   pos_mode: str = "every") -> Field:
    """Apply a stack of blocks.

    ``pos_mode="every"`` re-adds the positional embedding before each
    block's attention; ``"first"`` adds it only before the first block.
    """
    if pos_mode not in ("every", "first"):
        raise ValueError("pos_mode must be 'every' or 'first'")
    out = field
    for i, params in enumerate(blocks):
        pos = pos_embedding if (pos_mode == "every" or i == 0) else None
        out = block_forward(out, params, pos, nbr_map)
    return out


_TENSOR_NAMES = ("w_q", "w_k", "w_v", "w_o", "mlp_w1", "mlp_b1", "mlp_w2",
                 "mlp_b2")


def write_sprm(params: BlockParams, path) -> None:
    """Write block parameters in the SPRM/1 format (JSON header + f64 blob)."""
    header = {
        "magic": SPRM_MAGIC,
        "version": SPRM_VERSION,
        "embed": params.embed_dim,
        "heads": params.heads,
        "eps": params.eps,
        "mode": params.mode,
        "theta_cutoff": params.theta_cutoff,
        "tensors": [{"name": n, "shape": list(getattr(params, n).shape)}
                    for n in _TENSOR_NAMES],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for n in _TENSOR_NAMES:
            fh.write(np.ascontiguousarray(getattr(params, n),
                                          dtype="<f8").tobytes())


def read_sprm(path) -> BlockParams:
    """Read block parameters written by :func:`write_sprm`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"bad SPRM header: {exc}") from exc
        if header.get("magic") != SPRM_MAGIC:
            raise MalformedFileError("not an SPRM file")
        if header.get("version") != SPRM_VERSION:
            raise MalformedFileError(
                f"unsupported SPRM version {header.get('version')}")
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise MalformedFileError("SPRM payload truncated")
            tensors[spec["name"]] = np.frombuffer(raw,
                                                  dtype="<f8").reshape(shape)
    return BlockParams(heads=int(header["heads"]), eps=float(header["eps"]),
                       mode=header["mode"],
                       theta_cutoff=header["theta_cutoff"],
                       **{n: tensors[n].astype(np.float64)
                          for n in _TENSOR_NAMES})
