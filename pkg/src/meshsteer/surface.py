"""Handle-based polyharmonic surface deformation and feature detection.

The three direct actions (translate, scale-by-direction, scale-by-normals)
prescribe Dirichlet displacement on handle/fixed feature vertices; free
vertices follow the k-harmonic extension under row-replacement
constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import DisplacementField, MeshError, SurfaceMesh
from .operators import (
    DirichletSet,
    SolveConfig,
    apply_dirichlet,
    lumped_mass,
    polyharmonic_operator,
    solve,
    surface_cotan_laplacian,
)


@dataclass(frozen=True)
class HandleSpec:
    handle_features: frozenset
    fixed_features: frozenset
    order: int = 2  # harmonic order k

    def __post_init__(self):
        handles = frozenset(int(t) for t in self.handle_features)
        fixed = frozenset(int(t) for t in self.fixed_features)
        if handles & fixed:
            raise ValueError("handle and fixed feature sets overlap")
        if not handles and not fixed:
            raise ValueError("handle and fixed feature sets are both empty")
        if self.order not in (1, 2, 3):
            raise ValueError("harmonic order must be 1, 2 or 3")
        object.__setattr__(self, "handle_features", handles)
        object.__setattr__(self, "fixed_features", fixed)


@dataclass(frozen=True)
class SurfaceAction:
    """One of the three direct actions.

    translate: ``vector`` is the translation.
    scale-by-direction: ``scale`` is a per-axis factor triple, applied
    about the handle centroid.
    scale-by-normals: ``offset`` is the signed normal offset distance.
    """

    kind: str
    vector: tuple = (0.0, 0.0, 0.0)
    scale: tuple = (1.0, 1.0, 1.0)
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("translate", "scale-by-direction", "scale-by-normals"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if not np.isfinite(self.vector).all() or not np.isfinite(self.scale).all():
            raise ValueError("non-finite action parameter")
        if not np.isfinite(self.offset):
            raise ValueError("non-finite action parameter")


def detect_features(
    surface: SurfaceMesh, dihedral_threshold_deg: float
) -> SurfaceMesh:
    """Retag triangles into regions bounded by sharp edges.

    An edge is sharp when its dihedral deviation from flat exceeds the
    threshold. Region tags are consecutive from 0, ordered by each
    region's lowest triangle index.
    """
    if not 0.0 < dihedral_threshold_deg < 180.0:
        raise ValueError("dihedral threshold must be in (0, 180) degrees")
    tris = surface.triangles
    v = surface.vertices[tris]
    normals = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    norms = np.linalg.norm(normals, axis=1)
    if (norms == 0).any():
        raise MeshError("degenerate triangle in feature detection")
    normals /= norms[:, None]

    edges = {}
    for t in range(len(tris)):
        for k in range(3):
            e = (tris[t, k], tris[t, (k + 1) % 3])
            edges.setdefault((min(e), max(e)), []).append(t)

    parent = np.arange(len(tris))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    cos_thresh = np.cos(np.radians(dihedral_threshold_deg))
    for owners in edges.values():
        if len(owners) != 2:
            continue
        a, b = owners
        if np.dot(normals[a], normals[b]) >= cos_thresh:
            parent[find(a)] = find(b)

    roots = np.array([find(t) for t in range(len(tris))])
    order = {}
    tags = np.empty(len(tris), dtype=np.int64)
    for t in range(len(tris)):
        r = roots[t]
        if r not in order:
            order[r] = len(order)
        tags[t] = order[r]
    return SurfaceMesh(
        surface.vertices, surface.triangles, tags, surface.volume_vertex_of
    )


def _dirichlet_values(
    surface: SurfaceMesh, spec: HandleSpec, action: SurfaceAction
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(constrained indices, prescribed (c, 3) values, handle indices)."""
    handle_idx = (
        surface.feature_vertices(spec.handle_features)
        if spec.handle_features
        else np.empty(0, dtype=np.int64)
    )
    fixed_idx = (
        surface.feature_vertices(spec.fixed_features)
        if spec.fixed_features
        else np.empty(0, dtype=np.int64)
    )
    fixed_idx = np.setdiff1d(fixed_idx, handle_idx)  # handles win on shared rims

    if action.kind == "translate":
        hvals = np.tile(np.asarray(action.vector, dtype=np.float64), (len(handle_idx), 1))
    elif action.kind == "scale-by-direction":
        x = surface.vertices[handle_idx]
        areas = kernels.triangle_areas(surface.vertices, surface.triangles)
        weights = np.zeros(surface.num_vertices)
        for k in range(3):
            np.add.at(weights, surface.triangles[:, k], areas / 3.0)
        w = weights[handle_idx]
        centroid = (x * w[:, None]).sum(axis=0) / w.sum()
        rel = x - centroid
        hvals = rel * np.asarray(action.scale, dtype=np.float64) - rel
    else:  # scale-by-normals
        normals = surface.vertex_normals()[handle_idx]
        hvals = action.offset * normals

    idx = np.concatenate([handle_idx, fixed_idx])
    vals = np.vstack([hvals, np.zeros((len(fixed_idx), 3))])
    return idx, vals, handle_idx


def compute_handle_displacement(
    surface: SurfaceMesh,
    spec: HandleSpec,
    action: SurfaceAction,
    config: SolveConfig = SolveConfig(),
) -> DisplacementField:
    """Polyharmonic extension of the action's Dirichlet data.

    Vertices of unlisted features are free and solve B_k d = 0 per
    coordinate with row-replacement constraints.
    """
    idx, vals, _ = _dirichlet_values(surface, spec, action)
    n = surface.num_vertices
    out = np.zeros((n, 3))
    out[idx] = vals
    if len(idx) == n:
        return DisplacementField(out)
    if len(np.setdiff1d(np.arange(n), idx)) and len(idx) == 0:
        raise MeshError("free vertices present but no constrained features")

    L = surface_cotan_laplacian(surface)
    M = lumped_mass(surface)
    Bk = polyharmonic_operator(L, M, spec.order)
    for axis in range(3):
        bc = DirichletSet(idx, vals[:, axis])
        A, b = apply_dirichlet(Bk, np.zeros(n), bc)
        out[:, axis] = solve(A, b, config)
    out[idx] = vals  # exact on constrained vertices
    return DisplacementField(out)


def smoothness_report(
    surface: SurfaceMesh, fld: DisplacementField, spec: HandleSpec
) -> dict[str, float]:
    """Discrete tangency proxy per constrained region.

    For each of the handle and fixed regions, reports the max norm of the
    displacement jump across edges from constrained vertices into the
    first free ring. Empty when there are no free vertices.
    """
    idx, _, handle_idx = _dirichlet_values(
        surface, spec, SurfaceAction("translate")
    )
    constrained = np.zeros(surface.num_vertices, dtype=bool)
    constrained[idx] = True
    if constrained.all():
        return {}
    is_handle = np.zeros(surface.num_vertices, dtype=bool)
    is_handle[handle_idx] = True

    report = {"handle": 0.0, "fixed": 0.0}
    tris = surface.triangles
    for k in range(3):
        a, b = tris[:, k], tris[:, (k + 1) % 3]
        for c, f in ((a, b), (b, a)):
            cross = constrained[c] & ~constrained[f]
            if not cross.any():
                continue
            jump = np.linalg.norm(
                fld.values[f[cross]] - fld.values[c[cross]], axis=1
            )
            hmask = is_handle[c[cross]]
            if hmask.any():
                report["handle"] = max(report["handle"], float(jump[hmask].max()))
            if (~hmask).any():
                report["fixed"] = max(report["fixed"], float(jump[~hmask].max()))
    return report
