"""Structured tetrahedral mesh generators for channels and cylinders.

Both generators emit strictly positive-volume tets and geometric boundary
tags. Hexes are split with the 6-tet corner-to-corner pattern (globally
conforming by translation invariance); prisms are split with the
smallest-global-index diagonal rule, which makes neighboring prisms agree
on every shared quad face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import MeshError, TetMesh, boundary_face_set

# The 6 tets of the corner-to-corner (Kuhn) hex split, one per axis
# permutation on the path from corner (0,0,0) to (1,1,1).
_AXIS_PERMS = [
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
]


@dataclass(frozen=True)
class BoundaryLayerSpec:
    """Geometric grading toward the top (+z) face of a box channel."""

    layers: int
    extent: float
    ratio: float = 0.85

    def __post_init__(self):
        if self.layers < 1:
            raise MeshError("boundary layer count must be >= 1")
        if not 0.0 < self.ratio <= 1.0:
            raise MeshError("grading ratio must be in (0, 1]")
        if self.extent <= 0.0:
            raise MeshError("boundary layer extent must be positive")

    def thicknesses(self) -> np.ndarray:
        """Layer thicknesses from the interior toward the face (decreasing)."""
        r, n = self.ratio, self.layers
        if r == 1.0:
            first = self.extent / n
        else:
            first = self.extent * (1.0 - r) / (1.0 - r**n)
        return first * r ** np.arange(n)


def _fix_orientation(vertices, tets):
    """Swap two vertices of any negative tet; face sets are unaffected."""
    vols = kernels.tet_volumes(vertices, tets)
    flip = vols < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return tets


def _tag_box_faces(vertices, faces, lo, hi):
    """Tag faces 0..5 for x-/x+/y-/y+/z-/z+ by coordinate planes."""
    tags = np.full(len(faces), -1, dtype=np.int64)
    fv = vertices[faces]
    for axis in range(3):
        span = hi[axis] - lo[axis]
        on_lo = np.abs(fv[:, :, axis] - lo[axis]).max(axis=1) < 1e-12 * span
        on_hi = np.abs(fv[:, :, axis] - hi[axis]).max(axis=1) < 1e-12 * span
        tags[on_lo] = 2 * axis
        tags[on_hi] = 2 * axis + 1
    if (tags < 0).any():
        raise MeshError("box boundary face not on any coordinate plane")
    return tags


def generate_box_channel(
    nx: int,
    ny: int,
    nz: int,
    dims=(1.0, 1.0, 1.0),
    grading: BoundaryLayerSpec | None = None,
) -> TetMesh:
    """Structured box split into 6 tets per hex, 6 boundary tags.

    With ``grading``, the top ``grading.layers`` z-cells form a boundary
    layer of geometrically decreasing thickness toward the +z face;
    ``nz`` must exceed the layer count.
    """
    if nx < 1 or ny < 1 or nz < 1:
        raise MeshError("cell counts must be >= 1")
    dims = np.asarray(dims, dtype=np.float64)
    if (dims <= 0).any():
        raise MeshError("box dimensions must be positive")
    xs = np.linspace(0.0, dims[0], nx + 1)
    ys = np.linspace(0.0, dims[1], ny + 1)
    if grading is None:
        zs = np.linspace(0.0, dims[2], nz + 1)
    else:
        if nz <= grading.layers:
            raise MeshError("nz must exceed the graded layer count")
        if grading.extent >= dims[2]:
            raise MeshError("boundary layer extent exceeds box height")
        core = np.linspace(0.0, dims[2] - grading.extent, nz - grading.layers + 1)
        graded = (dims[2] - grading.extent) + np.concatenate(
            [np.cumsum(grading.thicknesses())]
        )
        graded[-1] = dims[2]  # close the box exactly
        zs = np.concatenate([core, graded])

    nvx, nvy, nvz = nx + 1, ny + 1, nz + 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * nvy + j) * nvz + k

    i, j, k = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corner = np.stack([i, j, k], axis=1)  # (cells, 3)
    tets = np.empty((len(i) * 6, 4), dtype=np.int64)
    unit = np.eye(3, dtype=np.int64)
    for p, perm in enumerate(_AXIS_PERMS):
        a = corner
        b = a + unit[perm[0]]
        c = b + unit[perm[1]]
        d = c + unit[perm[2]]
        for slot, pt in enumerate((a, b, c, d)):
            tets[p::6, slot] = vid(pt[:, 0], pt[:, 1], pt[:, 2])
    tets = _fix_orientation(vertices, tets)

    faces = np.array(sorted(boundary_face_set(tets)), dtype=np.int64)
    tags = _tag_box_faces(vertices, faces, np.zeros(3), dims)
    return TetMesh(vertices, tets, faces, tags).validate()


# ---------------------------------------------------------------------------
# cylinder

CAP_LOW = 0
CAP_HIGH = 1
WALL_FIXED = 2
WALL_SHEAR = 3


def _disk(radial: int, circumferential: int, radius: float):
    """Center-fan disk triangulation; outer ring lies exactly at ``radius``."""
    theta = 2.0 * np.pi * np.arange(circumferential) / circumferential
    pts = [np.zeros((1, 2))]
    for ring in range(1, radial + 1):
        r = radius * ring / radial
        pts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    pts = np.vstack(pts)

    def rid(ring, j):
        return 1 + (ring - 1) * circumferential + j % circumferential

    tris = []
    for j in range(circumferential):
        tris.append((0, rid(1, j), rid(1, j + 1)))
    for ring in range(1, radial):
        for j in range(circumferential):
            a, b = rid(ring, j), rid(ring, j + 1)
            c, d = rid(ring + 1, j + 1), rid(ring + 1, j)
            # split the quad (a, b, c, d) through its smallest index
            if min(a, c) < min(b, d):
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    outer = set(rid(radial, j) for j in range(circumferential))
    return pts, np.array(tris, dtype=np.int64), outer


_PRISM_ROTATIONS = [
    (0, 1, 2, 3, 4, 5),
    (1, 2, 0, 4, 5, 3),
    (2, 0, 1, 5, 3, 4),
    (3, 5, 4, 0, 2, 1),
    (4, 3, 5, 1, 0, 2),
    (5, 4, 3, 2, 1, 0),
]


def _split_prism(ids):
    """3 tets of a prism, diagonals through smallest global indices."""
    rot = min(
        _PRISM_ROTATIONS, key=lambda r: ids[r[0]]
    )
    p = [ids[r] for r in rot]
    if min(p[1], p[5]) < min(p[2], p[4]):
        return [
            (p[0], p[1], p[2], p[5]),
            (p[0], p[1], p[5], p[4]),
            (p[0], p[4], p[5], p[3]),
        ]
    return [
        (p[0], p[1], p[2], p[4]),
        (p[0], p[4], p[2], p[5]),
        (p[0], p[4], p[5], p[3]),
    ]


def generate_cylinder(
    radial: int,
    circumferential: int,
    axial: int,
    radius: float = 0.15,
    length: float = 1.25,
) -> TetMesh:
    """Body-fitted structured cylinder, axis along z, centered at origin.

    Boundary tags: 0/1 the low/high caps, 2 the wall below the axial
    midplane (fixed region), 3 the wall above it (shear region).
    """
    if radial < 1 or circumferential < 3 or axial < 1:
        raise MeshError("invalid cylinder counts")
    disk, tris, _ = _disk(radial, circumferential, radius)
    nd = len(disk)
    zs = np.linspace(-length / 2.0, length / 2.0, axial + 1)
    vertices = np.empty((nd * (axial + 1), 3))
    for k, z in enumerate(zs):
        vertices[k * nd : (k + 1) * nd, :2] = disk
        vertices[k * nd : (k + 1) * nd, 2] = z

    tets = []
    for k in range(axial):
        lo, hi = k * nd, (k + 1) * nd
        for a, b, c in tris:
            tets.extend(
                _split_prism(
                    np.array([lo + a, lo + b, lo + c, hi + a, hi + b, hi + c])
                )
            )
    tets = _fix_orientation(vertices, np.array(tets, dtype=np.int64))

    faces = np.array(sorted(boundary_face_set(tets)), dtype=np.int64)
    fz = vertices[faces][:, :, 2]
    tags = np.full(len(faces), -1, dtype=np.int64)
    eps = 1e-12 * length
    tags[np.abs(fz - zs[0]).max(axis=1) < eps] = CAP_LOW
    tags[np.abs(fz - zs[-1]).max(axis=1) < eps] = CAP_HIGH
    wall = tags < 0
    tags[wall & (fz.mean(axis=1) <= 0.0)] = WALL_FIXED
    tags[wall & (fz.mean(axis=1) > 0.0)] = WALL_SHEAR
    return TetMesh(vertices, tets, faces, tags).validate()
