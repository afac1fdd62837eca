"""Volume mesh deformation: harmonic maps and stiffened linear elasticity.

Assembly is partition-aware: each part assembles its local elements and
contributions are summed into one global system solved in a single
address space. Deformation scheduling splits a surface displacement into
absolute interpolated targets applied incrementally on the current
(already-deformed) mesh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import (
    DisplacementField,
    MeshError,
    QualityStats,
    SurfaceMesh,
    TetMesh,
    boundary_face_set,
    normalized_quality_stats,
)
from .operators import DirichletSet, SolveConfig, apply_dirichlet, solve


@dataclass(frozen=True)
class ElasticParams:
    stiffening_exponent: float = 1.0  # chi; 0 disables Jacobian stiffening
    poisson_ratio: float = 0.3

    def __post_init__(self):
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("Poisson ratio must be in (-1, 0.5)")
        if self.stiffening_exponent < 0:
            raise ValueError("stiffening exponent must be >= 0")


@dataclass(frozen=True)
class DeformationOrder:
    """A committed surface deformation plus its schedule."""

    field: DisplacementField  # over surface vertices
    schedule_steps: int = 1
    steps_between: int = 0
    method: str = "elasticity"  # elasticity | harmonic

    def __post_init__(self):
        if self.schedule_steps < 1:
            raise ValueError("schedule must have at least one step")
        if self.steps_between < 0:
            raise ValueError("steps between deformations must be >= 0")
        if self.method not in ("elasticity", "harmonic"):
            raise ValueError(f"unknown deformation method {self.method!r}")


@dataclass
class Part:
    tet_ids: np.ndarray  # global tet indices
    local_tets: np.ndarray  # (m_p, 4) local vertex indices
    to_global: np.ndarray  # local vertex -> global vertex

    def local_mesh(self, vertices: np.ndarray) -> TetMesh:
        faces = np.array(
            sorted(boundary_face_set(self.local_tets)), dtype=np.int64
        ).reshape(-1, 3)
        return TetMesh(
            vertices[self.to_global],
            self.local_tets,
            faces,
            np.zeros(len(faces), dtype=np.int64),
        )


@dataclass
class PartitionedMesh:
    """A tet mesh split into contiguous centroid-sweep blocks.

    ``current`` is the mutable deformed coordinate array; ``base`` keeps
    the original mesh for quality normalization.
    """

    base: TetMesh
    parts: list
    part_of: np.ndarray
    current: np.ndarray = None

    def __post_init__(self):
        if self.current is None:
            self.current = self.base.vertices.copy()

    @property
    def nparts(self) -> int:
        return len(self.parts)

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.base.boundary_faces)

    def deformed_mesh(self) -> TetMesh:
        return self.base.with_vertices(self.current)

    def quality_vs_base(self) -> QualityStats:
        return normalized_quality_stats(self.deformed_mesh(), self.base)


def partition(mesh: TetMesh, nparts: int) -> PartitionedMesh:
    """Sorted-centroid sweep along the longest box axis, near-equal blocks."""
    if nparts < 1:
        raise MeshError("nparts must be >= 1")
    if nparts > mesh.num_tets:
        raise MeshError("more parts than tets")
    centroids = mesh.vertices[mesh.tets].mean(axis=1)
    axis = int(np.argmax(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)))
    order = np.argsort(centroids[:, axis], kind="stable")
    blocks = np.array_split(order, nparts)
    part_of = np.empty(mesh.num_tets, dtype=np.int64)
    parts = []
    for pid, block in enumerate(blocks):
        block = np.sort(block)
        part_of[block] = pid
        gtets = mesh.tets[block]
        to_global = np.unique(gtets)
        local = np.searchsorted(to_global, gtets)
        parts.append(Part(block, local, to_global))
    return PartitionedMesh(mesh, parts, part_of)


# ---------------------------------------------------------------------------
# assembly


def _gather_triplets(pmesh, vertices, per_part):
    rows_l, cols_l, vals_l = [], [], []
    for part in pmesh.parts:
        r, c, v = per_part(part)
        rows_l.append(r)
        cols_l.append(c)
        vals_l.append(v)
    return (
        np.concatenate(rows_l),
        np.concatenate(cols_l),
        np.concatenate(vals_l),
    )


def assemble_volume_laplacian(pmesh: PartitionedMesh, vertices=None) -> sp.csr_matrix:
    vertices = pmesh.current if vertices is None else vertices

    def per_part(part):
        r, c, v = kernels.tet_stiffness_triplets(
            np.ascontiguousarray(vertices[part.to_global]), part.local_tets
        )
        return part.to_global[r], part.to_global[c], v

    n = len(vertices)
    rows, cols, vals = _gather_triplets(pmesh, vertices, per_part)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_elastic(
    pmesh: PartitionedMesh, params: ElasticParams, vertices=None
) -> sp.csr_matrix:
    vertices = pmesh.current if vertices is None else vertices
    vols = kernels.tet_volumes(vertices, pmesh.base.tets)
    if (vols <= 0).any():
        bad = int(np.argmin(vols))
        raise MeshError(f"inverted element {bad} in elasticity assembly")
    youngs = (vols.mean() / vols) ** params.stiffening_exponent

    def per_part(part):
        r, c, v = kernels.elastic_stiffness_triplets(
            np.ascontiguousarray(vertices[part.to_global]),
            part.local_tets,
            np.ascontiguousarray(youngs[part.tet_ids]),
            params.poisson_ratio,
        )
        gdof = 3 * part.to_global[r // 3] + r % 3
        gdof_c = 3 * part.to_global[c // 3] + c % 3
        return gdof, gdof_c, v

    n = 3 * len(vertices)
    rows, cols, vals = _gather_triplets(pmesh, vertices, per_part)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def _surface_bc(pmesh, surface: SurfaceMesh, bc: DisplacementField):
    if bc.vertex_count != surface.num_vertices:
        raise MeshError("boundary field length does not match surface")
    vol_idx = surface.volume_vertex_of
    missing = np.setdiff1d(pmesh.boundary_vertices(), vol_idx)
    if missing.size:
        raise MeshError("boundary condition does not cover all boundary vertices")
    return vol_idx, bc.values


def deform_harmonic(
    pmesh: PartitionedMesh,
    surface: SurfaceMesh,
    bc: DisplacementField,
    config: SolveConfig = SolveConfig(),
    timings: dict | None = None,
) -> DisplacementField:
    """Harmonic map: three decoupled scalar Laplace solves."""
    vol_idx, values = _surface_bc(pmesh, surface, bc)
    t0 = time.perf_counter()
    A = assemble_volume_laplacian(pmesh)
    t1 = time.perf_counter()
    n = len(pmesh.current)
    out = np.empty((n, 3))
    for axis in range(3):
        sys, rhs = apply_dirichlet(
            A, np.zeros(n), DirichletSet(vol_idx, values[:, axis])
        )
        out[:, axis] = solve(sys, rhs, config)
    if timings is not None:
        timings["assembly"] = t1 - t0
        timings["solve"] = time.perf_counter() - t1
    out[vol_idx] = values
    return DisplacementField(out)


def deform_elastic(
    pmesh: PartitionedMesh,
    surface: SurfaceMesh,
    bc: DisplacementField,
    params: ElasticParams = ElasticParams(),
    config: SolveConfig = SolveConfig(),
    timings: dict | None = None,
) -> DisplacementField:
    """Jacobian-stiffened linear elasticity, one coupled 3n solve."""
    vol_idx, values = _surface_bc(pmesh, surface, bc)
    t0 = time.perf_counter()
    A = assemble_elastic(pmesh, params)
    t1 = time.perf_counter()
    n = len(pmesh.current)
    dofs = (3 * vol_idx[:, None] + np.arange(3)).ravel()
    sys, rhs = apply_dirichlet(
        A, np.zeros(3 * n), DirichletSet(dofs, values.ravel())
    )
    x = solve(sys, rhs, config)
    if timings is not None:
        timings["assembly"] = t1 - t0
        timings["solve"] = time.perf_counter() - t1
    out = x.reshape(n, 3)
    out[vol_idx] = values
    return DisplacementField(out)


# ---------------------------------------------------------------------------
# scheduling


def make_schedule(
    d: DisplacementField, n: int, base: np.ndarray | None = None
) -> list[DisplacementField]:
    """n absolute targets base + (i/n)(d - base), the final one bitwise d.

    ``base`` is the offset already applied when the order arrives; by
    default the schedule interpolates from rest.
    """
    if n < 1:
        raise ValueError("schedule must have at least one step")
    if base is None:
        targets = [DisplacementField(d.values * (i / n)) for i in range(1, n)]
    else:
        delta = d.values - base
        targets = [DisplacementField(base + delta * (i / n)) for i in range(1, n)]
    targets.append(d)
    return targets


def apply_deformation_step(
    pmesh: PartitionedMesh,
    current_surface_offset: np.ndarray,
    target: DisplacementField,
    surface: SurfaceMesh,
    method: str = "elasticity",
    params: ElasticParams = ElasticParams(),
    config: SolveConfig = SolveConfig(),
    timings: dict | None = None,
) -> QualityStats:
    """Advance the mesh to one absolute target; mutates ``pmesh.current``.

    The incremental boundary condition is target minus the offset already
    applied; inversion is reported in the returned stats, never fatal.
    """
    inc = target.values - current_surface_offset
    if np.any(inc):
        bc = DisplacementField(inc)
        if method == "harmonic":
            disp = deform_harmonic(pmesh, surface, bc, config, timings)
        elif method == "elasticity":
            disp = deform_elastic(pmesh, surface, bc, params, config, timings)
        else:
            raise ValueError(f"unknown deformation method {method!r}")
        pmesh.current = pmesh.current + disp.values
        # stamp the boundary absolutely so incremental rounding never
        # drifts the surface off its scheduled target
        vol_idx = surface.volume_vertex_of
        pmesh.current[vol_idx] = pmesh.base.vertices[vol_idx] + target.values
    return pmesh.quality_vs_base()
