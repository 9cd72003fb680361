"""Command-line surface: grids, attention, and verification reports.

Exit codes: 0 success, 2 usage error, 3 equivariance monotonicity failure,
4 gradient-check failure, 5 data mismatch between input files.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import backends, reports
from ._threads import set_num_threads
from .attention import AttentionConfig, s2_attention_forward
from .field import MalformedFileError, read_sfld, write_sfld
from .grid import FOUR_PI, build_equiangular_grid, build_gaussian_grid
from .neighborhood import build_neighborhood, neighborhood_attention_forward

EXIT_MONOTONICITY = 3
EXIT_GRADCHECK = 4
EXIT_MISMATCH = 5


def _fmt(x) -> str:
    return f"{x:.17g}"


def _parse_sweep(text):
    try:
        values = [int(part) for part in text.split(",") if part]
    except ValueError:
        raise click.UsageError(f"bad sweep {text!r}; expected e.g. 32,64,128")
    if not values:
        raise click.UsageError("sweep must list at least one resolution")
    return values


def _parse_cutoff(text):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise click.UsageError(f"bad cutoff {text!r}; expected 'auto' or "
                               "radians")
    if not 0.0 < value <= np.pi:
        raise click.UsageError("cutoff must lie in (0, pi]")
    return value


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


@click.group()
@click.option("--threads", type=int, default=None,
              help="Worker-pool size for the compiled kernels "
                   "(default: machine parallelism).")
@click.option("--backend", type=click.Choice(backends.available()),
              default=None, help="Kernel backend to use.")
def main(threads, backend):
    """Spherical attention toolkit."""
    if threads is not None:
        if threads < 1:
            raise click.UsageError("--threads must be >= 1")
        set_num_threads(threads)
    if backend is not None:
        backends.set_active(backend)


@main.command("grid")
@click.option("--family", type=click.Choice(["equiangular", "gaussian"]),
              required=True)
@click.option("--nlat", type=int, required=True)
@click.option("--nlon", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write grid metadata as JSON.")
def cmd_grid(family, nlat, nlon, out):
    """Build a grid and report its quadrature fidelity."""
    try:
        if family == "equiangular":
            grid = build_equiangular_grid(nlat, nlon)
        else:
            grid = build_gaussian_grid(nlat, nlon)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    total = grid.total_weight()
    deviation = abs(total - FOUR_PI)
    if out is not None:
        payload = {
            "family": grid.family,
            "nlat": grid.nlat,
            "nlon": grid.nlon,
            "colatitudes": grid.colatitudes.tolist(),
            "longitudes": grid.longitudes.tolist(),
            "row_weights": grid.row_weights.tolist(),
            "total_weight": total,
            "four_pi_abs_deviation": deviation,
        }
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    click.echo(f"sum_weights={_fmt(total)} "
               f"abs_dev_from_4pi={_fmt(deviation)} "
               f"rel_dev_from_4pi={_fmt(deviation / FOUR_PI)}")


@main.command("equivariance")
@click.option("--nlat-sweep", default="32,64,128", show_default=True)
@click.option("--rotations", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["global", "local"]),
              default="global", show_default=True)
@click.option("--cutoff", default="auto", show_default=True,
              help="'auto' (area-matched 7x7 window) or radians.")
@click.option("--family", type=click.Choice(["equiangular", "gaussian"]),
              default="gaussian", show_default=True)
@click.option("--lmax", type=int, default=None,
              help="Band limit of the test fields "
                   "(default: coarsest nlat / 4).")
@click.option("--azimuthal-only", is_flag=True,
              help="Use grid-aligned longitude rotations (exact symmetry).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def cmd_equivariance(ctx, nlat_sweep, rotations, seed, mode, cutoff, family,
                     lmax, azimuthal_only, out):
    """Measure rotation equivariance across a resolution sweep.

    Exits with code 3 if the mean error fails to decrease strictly across
    the sweep (the report is still written).  Grid-aligned azimuthal
    rotations sit at the noise floor, where any value <= 1e-12 passes.
    """
    sweep = _parse_sweep(nlat_sweep)
    rows, means = reports.equivariance_sweep(
        sweep, num_rotations=rotations, seed=seed, mode=mode,
        cutoff=_parse_cutoff(cutoff), family=family, lmax=lmax,
        azimuthal_only=azimuthal_only)
    lines = ["nlat,rotation,rel_l2_error"]
    for nlat, idx, err in rows:
        lines.append(f"{nlat},{idx},{_fmt(err)}")
    for nlat, mean in zip(sweep, means):
        lines.append(f"{nlat},mean,{_fmt(mean)}")
    ok = reports.monotone_decreasing(means)
    lines.append(f"monotone_decrease,,{'pass' if ok else 'fail'}")
    _write_text(out, "\n".join(lines) + "\n")
    if not ok:
        ctx.exit(EXIT_MONOTONICITY)


@main.command("gradcheck")
@click.option("--nlat", type=int, default=6, show_default=True)
@click.option("--nlon", type=int, default=12, show_default=True)
@click.option("--d", "d", type=int, default=3, show_default=True)
@click.option("--e", "e", type=int, default=2, show_default=True)
@click.option("--cutoff", default="1.0", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--step", type=float, default=1e-5, show_default=True)
@click.option("--family", type=click.Choice(["equiangular", "gaussian"]),
              default="gaussian", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def cmd_gradcheck(ctx, nlat, nlon, d, e, cutoff, seed, trials, step, family,
                  out):
    """Verify analytic attention gradients against finite differences.

    Exits with code 4 when the maximum relative error exceeds 1e-6.
    """
    verdict = reports.run_gradcheck(
        nlat=nlat, nlon=nlon, d=d, e=e, cutoff=_parse_cutoff(cutoff),
        seed=seed, trials=trials, step=step, family=family)
    _write_text(out, json.dumps(verdict, indent=2) + "\n")
    if not verdict["pass"]:
        ctx.exit(EXIT_GRADCHECK)


@main.command("bench")
@click.option("--nlat-sweep", default="32,64,128", show_default=True)
@click.option("--cutoff", default="auto", show_default=True)
@click.option("--repeat", type=int, default=3, show_default=True)
@click.option("--d", "d", type=int, default=8, show_default=True)
@click.option("--e", "e", type=int, default=8, show_default=True)
@click.option("--mode", type=click.Choice(["global", "local", "both"]),
              default="both", show_default=True)
@click.option("--compare-backends", is_flag=True,
              help="Time every available backend, not just the active one.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_bench(nlat_sweep, cutoff, repeat, d, e, mode, compare_backends, out):
    """Time attention forwards and fit log-log complexity slopes."""
    modes = ["global", "local"] if mode == "both" else [mode]
    names = backends.available() if compare_backends else None
    samples, slopes = reports.run_bench(
        nlats=_parse_sweep(nlat_sweep), cutoff=_parse_cutoff(cutoff),
        repeat=repeat, d=d, e=e, modes=modes, backend_names=names)
    lines = ["kind,mode,backend,nlat,nlon,npoints,avg_neighbors,seconds,slope"]
    for s in samples:
        lines.append(
            f"sample,{s['mode']},{s['backend']},{s['nlat']},{s['nlon']},"
            f"{s['npoints']},{_fmt(s['avg_neighbors'])},"
            f"{_fmt(s['seconds'])},")
    for s in slopes:
        lines.append(
            f"slope,{s['mode']},{s['backend']},,,,,,{_fmt(s['slope'])}")
    _write_text(out, "\n".join(lines) + "\n")


@main.command("attn")
@click.option("--q", "q_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--k", "k_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--v", "v_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--grid", "grid_spec", default=None,
              help="Expected grid as FAMILY:NLAT:NLON; mismatches exit 5.")
@click.option("--mode", type=click.Choice(["global", "local"]),
              default="global", show_default=True)
@click.option("--cutoff", default="auto", show_default=True)
@click.option("--heads", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_context
def cmd_attn(ctx, q_path, k_path, v_path, grid_spec, mode, cutoff, heads,
             out):
    """Run spherical attention on SFLD fields and write the SFLD output."""
    try:
        q = read_sfld(q_path)
        k = read_sfld(k_path)
        v = read_sfld(v_path)
    except MalformedFileError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(2)
    grid = q.grid
    for name, f in (("k", k), ("v", v)):
        if (f.grid.family, f.grid.nlat, f.grid.nlon) != (
                grid.family, grid.nlat, grid.nlon):
            click.echo(f"error: {name} grid does not match q grid", err=True)
            ctx.exit(EXIT_MISMATCH)
    if grid_spec is not None:
        parts = grid_spec.split(":")
        if len(parts) != 3:
            raise click.UsageError("--grid must look like gaussian:16:32")
        family, nlat_s, nlon_s = parts
        if (family, nlat_s, nlon_s) != (grid.family, str(grid.nlat),
                                        str(grid.nlon)):
            click.echo("error: inputs do not match the requested grid",
                       err=True)
            ctx.exit(EXIT_MISMATCH)
    if q.channels % heads != 0 or v.channels % heads != 0:
        click.echo("error: channel counts not divisible by --heads", err=True)
        ctx.exit(EXIT_MISMATCH)
    config = AttentionConfig(head_dim=q.channels // heads, heads=heads)
    try:
        if mode == "local":
            nbr_map = build_neighborhood(
                grid, reports.resolve_cutoff(_parse_cutoff(cutoff), grid.nlat))
            result = neighborhood_attention_forward(q, k, v, nbr_map, config)
        else:
            result = s2_attention_forward(q, k, v, config)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_MISMATCH)
    write_sfld(result, out)


if __name__ == "__main__":
    main()
