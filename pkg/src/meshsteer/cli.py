"""Command line entry points: batch deformation, experiments, services."""

from __future__ import annotations

import sys

import click
import numpy as np

from .mesh import (
    DisplacementField,
    extract_surface,
    load_tet_mesh,
    read_displacement_field,
    write_displacement_field,
)
from .operators import SolveConfig
from .surface import HandleSpec, SurfaceAction, compute_handle_displacement
from .volume import (
    ElasticParams,
    apply_deformation_step,
    make_schedule,
    partition,
)


def _parse_tags(text: str) -> frozenset:
    if not text:
        return frozenset()
    return frozenset(int(t) for t in text.split(","))


def _parse_triple(text: str) -> tuple:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise click.BadParameter("expected three comma-separated numbers")
    return tuple(parts)


@click.command()
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option(
    "--action",
    "kind",
    required=True,
    type=click.Choice(["translate", "scale-by-direction", "scale-by-normals"]),
)
@click.option("--handles", default="", help="comma-separated handle feature tags")
@click.option("--fixed", default="", help="comma-separated fixed feature tags")
@click.option("--vector", default="0,0,0", help="translation vector x,y,z")
@click.option("--scale", default="1,1,1", help="per-axis scale factors sx,sy,sz")
@click.option("--offset", default=0.0, type=float, help="normal offset distance")
@click.option("--order", default=2, type=click.IntRange(1, 3), help="harmonic order")
@click.option("--out", "out_path", required=True, type=click.Path())
def deform(mesh_path, kind, handles, fixed, vector, scale, offset, order, out_path):
    """Compute a handle-action surface displacement field."""
    mesh = load_tet_mesh(mesh_path)
    surface = extract_surface(mesh)
    spec = HandleSpec(_parse_tags(handles), _parse_tags(fixed), order)
    action = SurfaceAction(
        kind,
        vector=_parse_triple(vector),
        scale=_parse_triple(scale),
        offset=offset,
    )
    fld = compute_handle_displacement(surface, spec, action)
    write_displacement_field(out_path, fld)
    click.echo(f"wrote {fld.vertex_count} displacements to {out_path}")


@click.command(name="deform-volume")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--disp", "disp_path", required=True, type=click.Path(exists=True))
@click.option(
    "--method",
    default="elasticity",
    type=click.Choice(["elasticity", "harmonic"]),
)
@click.option("--steps", default=1, type=click.IntRange(min=1))
@click.option("--parts", default=1, type=click.IntRange(min=1))
@click.option("--chi", default=1.0, type=float, help="stiffening exponent")
@click.option("--nu", default=0.3, type=float, help="Poisson ratio")
@click.option("--quality-report", "report_path", default=None, type=click.Path())
def deform_volume(mesh_path, disp_path, method, steps, parts, chi, nu, report_path):
    """Propagate a surface displacement through the volume on a schedule."""
    mesh = load_tet_mesh(mesh_path)
    surface = extract_surface(mesh)
    fld = read_displacement_field(disp_path)
    if fld.vertex_count != surface.num_vertices:
        raise click.ClickException(
            f"field has {fld.vertex_count} vertices, surface has "
            f"{surface.num_vertices}"
        )
    pmesh = partition(mesh, parts)
    params = ElasticParams(stiffening_exponent=chi, poisson_ratio=nu)
    offset = np.zeros((surface.num_vertices, 3))
    rows = []
    for step, target in enumerate(make_schedule(fld, steps), start=1):
        stats = apply_deformation_step(
            pmesh, offset, target, surface, method, params, SolveConfig()
        )
        offset = target.values.copy()
        rows.append(f"{step},{stats.as_row()}")
        click.echo(f"step {step}/{steps}: {stats.as_row()}")
    if report_path:
        with open(report_path, "w") as fh:
            fh.write("step,mean,min,max,inverted\n")
            for row in rows:
                fh.write(row + "\n")
        click.echo(f"wrote quality report to {report_path}")


@click.command(name="steer-server")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--parts", default=1, type=click.IntRange(min=1))
@click.option("--port", default=None, type=int)
@click.option("--cadence", default=10, type=click.IntRange(min=1))
@click.option(
    "--method",
    default="elasticity",
    type=click.Choice(["elasticity", "harmonic"]),
)
@click.option("--schedule-default", default=1, type=click.IntRange(min=1))
@click.option("--snapshot-every", default=0, type=click.IntRange(min=0))
@click.option("--snapshot-dir", default=".", type=click.Path())
@click.option("--chi", default=1.0, type=float)
@click.option("--nu", default=0.3, type=float)
@click.option("--max-steps", default=0, type=click.IntRange(min=0))
def steer_server(
    mesh_path,
    parts,
    port,
    cadence,
    method,
    schedule_default,
    snapshot_every,
    snapshot_dir,
    chi,
    nu,
    max_steps,
):
    """Run one steering session over TCP."""
    from .protocol import DEFAULT_PORT
    from .server import ServerConfig, SteeringServer

    config = ServerConfig(
        mesh_path=mesh_path,
        parts=parts,
        port=DEFAULT_PORT if port is None else port,
        cadence=cadence,
        snapshot_every=snapshot_every,
        snapshot_dir=snapshot_dir,
        method=method,
        default_schedule=schedule_default,
        elastic=ElasticParams(stiffening_exponent=chi, poisson_ratio=nu),
        max_steps=max_steps,
    )
    server = SteeringServer(config)
    bound = server.listen()
    click.echo(f"listening on port {bound}")
    sys.exit(server.run())


@click.command(name="steer-bridge")
@click.option("--server", "server_addr", required=True, help="host:port")
@click.option("--ui-port", required=True, type=int)
@click.option("--export", "export_path", default=None, type=click.Path())
@click.option("--assets", "asset_dir", default=None, type=click.Path(exists=True))
@click.option(
    "--method",
    default="elasticity",
    type=click.Choice(["elasticity", "harmonic"]),
)
def steer_bridge(server_addr, ui_port, export_path, asset_dir, method):
    """Connect to a steering server and serve the UI protocol."""
    from .bridge import run_bridge

    host, _, port = server_addr.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter("server address must be host:port")
    sys.exit(
        run_bridge(
            (host, int(port)),
            ui_port,
            export_path=export_path,
            asset_dir=asset_dir,
            method=method,
        )
    )
