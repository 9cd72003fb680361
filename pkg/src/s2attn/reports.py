"""Equivariance, gradient-check, and scaling reports.

These runners back the CLI subcommands and the acceptance suite.  All of
them are deterministic given the seed and the thread count.
"""

from __future__ import annotations

import time

import numpy as np

from . import backends
from ._threads import get_num_threads, set_num_threads
from .attention import AttentionConfig, s2_attention_forward
from .field import Field, random_field
from .geometry import Rotation
from .grid import build_equiangular_grid, build_gaussian_grid
from .harmonics import random_bandlimited_field
from .interpolate import rotate_field
from .neighborhood import (build_neighborhood, default_theta_cutoff,
                           neighborhood_attention_backward,
                           neighborhood_attention_forward)
from .oracles import finite_difference_grad

MODE_GLOBAL = "global"
MODE_LOCAL = "local"


def _build_grid(family, nlat, nlon=None):
    nlon = 2 * nlat if nlon is None else nlon
    if family == "equiangular":
        return build_equiangular_grid(nlat, nlon)
    return build_gaussian_grid(nlat, nlon)


def resolve_cutoff(cutoff, nlat) -> float:
    """Map the CLI 'auto' cutoff to the area-matched default."""
    if cutoff in (None, "auto"):
        return default_theta_cutoff(nlat)
    return float(cutoff)


def weighted_rel_l2(a: Field, b: Field) -> float:
    """Quadrature-weighted relative L2 distance ||a - b|| / ||b||."""
    w = a.grid.weights2d
    diff = np.einsum("bchw,hw->", (a.values - b.values) ** 2, w)
    ref = np.einsum("bchw,hw->", b.values ** 2, w)
    return float(np.sqrt(diff / ref))


def _sample_rotations(num, seed, azimuthal_only, nlon, rng=None):
    rng = np.random.default_rng(seed) if rng is None else rng
    rotations = []
    for _ in range(num):
        if azimuthal_only:
            j = int(rng.integers(1, nlon))
            rotations.append(Rotation.about_z(2.0 * np.pi * j / nlon))
        else:
            rotations.append(Rotation.random(rng))
    return rotations


def equivariance_sweep(nlats, num_rotations=8, seed=0, mode=MODE_GLOBAL,
                       cutoff="auto", family="gaussian", lmax=None,
                       d=4, e=4, azimuthal_only=False):
    """Rotation-equivariance errors across a resolution sweep.

    The band-limited test fields are synthesized from one fixed set of
    harmonic coefficients (band limit ``lmax``, defaulting to a quarter of
    the coarsest resolution), so every grid in the sweep samples the same
    underlying functions and the measured error isolates discretization.
    Rotations are drawn once and reused at every resolution, except in
    ``azimuthal_only`` mode, where grid-aligned column rotations are drawn
    per resolution.

    Returns (rows, means): per-rotation rows of (nlat, index, error) and the
    per-resolution mean errors in sweep order.
    """
    nlats = list(nlats)
    if lmax is None:
        lmax = max(1, min(nlats) // 4)
    if not azimuthal_only:
        rotations = _sample_rotations(num_rotations, seed, False, 0)

    rows = []
    means = []
    for nlat in nlats:
        grid = _build_grid(family, nlat)
        if azimuthal_only:
            rotations = _sample_rotations(num_rotations, seed, True, grid.nlon)
        q = random_bandlimited_field(grid, lmax, channels=d, rng=seed + 1)
        k = random_bandlimited_field(grid, lmax, channels=d, rng=seed + 2)
        v = random_bandlimited_field(grid, lmax, channels=e, rng=seed + 3)
        config = AttentionConfig(head_dim=d)
        if mode == MODE_LOCAL:
            nbr_map = build_neighborhood(grid, resolve_cutoff(cutoff, nlat))
            base = neighborhood_attention_forward(q, k, v, nbr_map, config)
        else:
            nbr_map = None
            base = s2_attention_forward(q, k, v, config)

        errors = []
        for idx, rot in enumerate(rotations):
            qr = rotate_field(q, rot)
            kr = rotate_field(k, rot)
            vr = rotate_field(v, rot)
            if mode == MODE_LOCAL:
                attn_rot = neighborhood_attention_forward(qr, kr, vr, nbr_map,
                                                          config)
            else:
                attn_rot = s2_attention_forward(qr, kr, vr, config)
            err = weighted_rel_l2(attn_rot, rotate_field(base, rot))
            errors.append(err)
            rows.append((nlat, idx, err))
        means.append(float(np.mean(errors)))
    return rows, means


def monotone_decreasing(means, floor=1e-12) -> bool:
    """Strict decrease across the sweep; values at the noise floor pass."""
    if all(m <= floor for m in means):
        return True
    return all(b < a for a, b in zip(means, means[1:]))


def run_gradcheck(nlat=6, nlon=12, d=3, e=2, cutoff=1.0, seed=0, trials=20,
                  step=1e-5, family="gaussian", tolerance=1e-6):
    """Compare analytic neighborhood-attention gradients to central differences.

    Each trial draws fresh unit-scale q, k, v, dy, scalarizes the output as
    sum(dy * forward), and checks dq, dk, dv against
    :func:`oracles.finite_difference_grad`.  Returns a JSON-ready verdict.
    """
    grid = _build_grid(family, nlat, nlon)
    nbr_map = build_neighborhood(grid, resolve_cutoff(cutoff, nlat))
    config = AttentionConfig(head_dim=d)
    rng = np.random.default_rng(seed)

    def forward_values(qv, kv, vv):
        qf = Field(qv, grid)
        kf = Field(kv, grid)
        vf = Field(vv, grid)
        return neighborhood_attention_forward(qf, kf, vf, nbr_map,
                                              config).values

    per_trial = []
    worst = {"dq": 0.0, "dk": 0.0, "dv": 0.0}
    for _ in range(trials):
        qv = rng.standard_normal((1, d, nlat, nlon))
        kv = rng.standard_normal((1, d, nlat, nlon))
        vv = rng.standard_normal((1, e, nlat, nlon))
        dyv = rng.standard_normal((1, e, nlat, nlon))
        dq, dk, dv = neighborhood_attention_backward(
            Field(qv, grid), Field(kv, grid), Field(vv, grid),
            Field(dyv, grid), nbr_map, config)

        num = {
            "dq": finite_difference_grad(
                lambda x: float(np.sum(dyv * forward_values(x, kv, vv))),
                qv, step),
            "dk": finite_difference_grad(
                lambda x: float(np.sum(dyv * forward_values(qv, x, vv))),
                kv, step),
            "dv": finite_difference_grad(
                lambda x: float(np.sum(dyv * forward_values(qv, kv, x))),
                vv, step),
        }
        analytic = {"dq": dq.values, "dk": dk.values, "dv": dv.values}
        errs = {}
        for name in ("dq", "dk", "dv"):
            ref = np.max(np.abs(num[name]))
            diff = np.max(np.abs(analytic[name] - num[name]))
            errs[name] = float(diff / max(ref, 1e-30))
            worst[name] = max(worst[name], errs[name])
        per_trial.append(errs)

    # linearity in the upstream gradient: dy = 0 must give exact zeros
    zq, zk, zv = neighborhood_attention_backward(
        Field(rng.standard_normal((1, d, nlat, nlon)), grid),
        Field(rng.standard_normal((1, d, nlat, nlon)), grid),
        Field(rng.standard_normal((1, e, nlat, nlon)), grid),
        Field(np.zeros((1, e, nlat, nlon)), grid), nbr_map, config)
    zero_dy_exact = (not zq.values.any() and not zk.values.any()
                     and not zv.values.any())

    max_rel_error = max(worst.values())
    return {
        "pass": bool(max_rel_error <= tolerance and zero_dy_exact),
        "max_rel_error": max_rel_error,
        "per_input_max": worst,
        "zero_dy_exact": zero_dy_exact,
        "tolerance": tolerance,
        "trials": trials,
        "step": step,
        "grid": {"family": family, "nlat": nlat, "nlon": nlon},
        "cutoff": resolve_cutoff(cutoff, nlat),
        "d": d,
        "e": e,
        "seed": seed,
    }


def fit_loglog_slope(npoints, seconds) -> float:
    """Least-squares slope of log(time) against log(problem size)."""
    return float(np.polyfit(np.log(np.asarray(npoints, dtype=float)),
                            np.log(np.asarray(seconds, dtype=float)), 1)[0])


def run_bench(nlats=(32, 64, 128), cutoff="auto", repeat=3, d=8, e=8,
              modes=(MODE_GLOBAL, MODE_LOCAL), backend_names=None,
              family="gaussian", seed=0):
    """Time attention forwards over a resolution sweep.

    Neighborhood maps are built outside the timed region.  Reports the
    median of ``repeat`` timed calls per configuration and the fitted
    log-log slope of time against point count per (mode, backend).
    Returns (samples, slopes) where each sample is a dict of one timing row.
    """
    if backend_names is None:
        backend_names = [backends.active_name()]
    nlats = list(nlats)
    samples = []
    slopes = []
    previous = backends.active_name()
    try:
        for mode in modes:
            for backend_name in backend_names:
                backends.set_active(backend_name)
                sizes = []
                medians = []
                for nlat in nlats:
                    grid = _build_grid(family, nlat)
                    rng = np.random.default_rng(seed)
                    q = random_field(grid, channels=d, rng=rng)
                    k = random_field(grid, channels=d, rng=rng)
                    v = random_field(grid, channels=e, rng=rng)
                    config = AttentionConfig(head_dim=d)
                    if mode == MODE_LOCAL:
                        nbr_map = build_neighborhood(
                            grid, resolve_cutoff(cutoff, nlat))
                        run = lambda: neighborhood_attention_forward(
                            q, k, v, nbr_map, config)
                        avg_neighbors = nbr_map.num_edges / nbr_map.nlat
                    else:
                        run = lambda: s2_attention_forward(q, k, v, config)
                        avg_neighbors = float(grid.npoints)
                    run()  # warmup outside the timed repeats
                    times = []
                    for _ in range(repeat):
                        t0 = time.perf_counter()
                        run()
                        times.append(time.perf_counter() - t0)
                    med = float(np.median(times))
                    sizes.append(grid.npoints)
                    medians.append(med)
                    samples.append({
                        "mode": mode, "backend": backend_name, "nlat": nlat,
                        "nlon": grid.nlon, "npoints": grid.npoints,
                        "avg_neighbors": avg_neighbors, "seconds": med,
                    })
                slopes.append({"mode": mode, "backend": backend_name,
                               "slope": fit_loglog_slope(sizes, medians)})
    finally:
        backends.set_active(previous)
    return samples, slopes
