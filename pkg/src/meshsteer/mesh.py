"""Mesh data model, file I/O, surface extraction and element quality.

Arrays are the currency: vertex coordinates are float64 (n, 3), tet
connectivity int64 (m, 4). All containers are treated as immutable after
construction; operations return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

# Outward-oriented faces of a positively oriented tet (a, b, c, d).
TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int64)

FLOAT_FMT = "%.17g"


class MeshError(Exception):
    """Malformed or invalid mesh data."""


class ParseError(MeshError):
    """Unreadable mesh or field file."""


def _as_vertices(vertices) -> np.ndarray:
    v = np.ascontiguousarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 3:
        raise MeshError("vertices must be (n, 3)")
    if not np.isfinite(v).all():
        raise MeshError("non-finite vertex coordinate")
    return v


@dataclass(frozen=True)
class TetMesh:
    """Tetrahedral volume mesh with tagged boundary faces."""

    vertices: np.ndarray  # (n, 3) float64
    tets: np.ndarray  # (m, 4) int64
    boundary_faces: np.ndarray  # (b, 3) int64
    boundary_tags: np.ndarray  # (b,) int64
    part_of: np.ndarray | None = None  # (m,) int64, optional partition ids

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_vertices(self.vertices))
        object.__setattr__(
            self, "tets", np.ascontiguousarray(self.tets, dtype=np.int64)
        )
        object.__setattr__(
            self,
            "boundary_faces",
            np.ascontiguousarray(self.boundary_faces, dtype=np.int64).reshape(-1, 3),
        )
        object.__setattr__(
            self,
            "boundary_tags",
            np.ascontiguousarray(self.boundary_tags, dtype=np.int64).ravel(),
        )

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_tets(self) -> int:
        return len(self.tets)

    def validate(self) -> "TetMesh":
        if self.tets.size and (
            self.tets.min() < 0 or self.tets.max() >= self.num_vertices
        ):
            raise MeshError("dangling tet vertex index")
        vols = kernels.tet_volumes(self.vertices, self.tets)
        if (vols <= 0).any():
            bad = int(np.argmin(vols))
            raise MeshError(f"tet {bad} has non-positive volume {vols[bad]:g}")
        computed = boundary_face_set(self.tets)
        given = {tuple(sorted(f)) for f in self.boundary_faces}
        if given != computed:
            raise MeshError("boundary faces do not match faces incident to one tet")
        if len(given) != len(self.boundary_faces):
            raise MeshError("duplicate boundary face")
        return self

    def with_vertices(self, vertices) -> "TetMesh":
        return TetMesh(
            vertices, self.tets, self.boundary_faces, self.boundary_tags, self.part_of
        )


@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated boundary with per-triangle feature tags.

    ``volume_vertex_of`` maps surface vertex -> parent volume vertex; for
    standalone surfaces it is the identity.
    """

    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (t, 3) int64
    feature: np.ndarray  # (t,) int64
    volume_vertex_of: np.ndarray  # (n,) int64

    def __post_init__(self):
        object.__setattr__(self, "vertices", _as_vertices(self.vertices))
        object.__setattr__(
            self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64)
        )
        object.__setattr__(
            self, "feature", np.ascontiguousarray(self.feature, dtype=np.int64).ravel()
        )
        object.__setattr__(
            self,
            "volume_vertex_of",
            np.ascontiguousarray(self.volume_vertex_of, dtype=np.int64).ravel(),
        )

    @classmethod
    def standalone(cls, vertices, triangles, feature=None) -> "SurfaceMesh":
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if feature is None:
            feature = np.zeros(len(triangles), dtype=np.int64)
        return cls(vertices, triangles, feature, np.arange(len(vertices)))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def with_vertices(self, vertices) -> "SurfaceMesh":
        return SurfaceMesh(
            vertices, self.triangles, self.feature, self.volume_vertex_of
        )

    def feature_vertices(self, tags) -> np.ndarray:
        """Surface-vertex indices incident to any triangle tagged in ``tags``."""
        tags = set(int(t) for t in tags)
        missing = tags - set(np.unique(self.feature).tolist())
        if missing:
            raise MeshError(f"feature tag(s) not present: {sorted(missing)}")
        mask = np.isin(self.feature, list(tags))
        return np.unique(self.triangles[mask])

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted per-vertex normals (unit length)."""
        v = self.vertices[self.triangles]
        fn = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])  # 2*area*unit normal
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.triangles[:, k], fn)
        norms = np.linalg.norm(out, axis=1)
        norms[norms == 0] = 1.0
        return out / norms[:, None]


@dataclass(frozen=True)
class DisplacementField:
    """Per-vertex displacement vectors."""

    values: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(v).all():
            raise MeshError("non-finite displacement value")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n: int) -> "DisplacementField":
        return cls(np.zeros((n, 3)))

    @property
    def vertex_count(self) -> int:
        return len(self.values)

    def __add__(self, other: "DisplacementField") -> "DisplacementField":
        return DisplacementField(self.values + other.values)


@dataclass(frozen=True)
class QualityStats:
    mean: float
    min: float
    max: float
    inverted_count: int
    degenerate_count: int = 0

    def as_row(self) -> str:
        return f"{self.mean:.6f},{self.min:.6f},{self.max:.6f},{self.inverted_count}"


# ---------------------------------------------------------------------------
# quality metrics


def scaled_jacobian(tet_points) -> tuple[float, bool]:
    """Scaled Jacobian of a single tet given its 4 corner points.

    Returns (value, degenerate). Degenerate tets (a zero-length corner
    edge) score 0 with the flag set.
    """
    pts = np.asarray(tet_points, dtype=np.float64).reshape(4, 3)
    sj, deg = kernels.scaled_jacobians(pts, np.arange(4, dtype=np.int64)[None, :])
    return float(sj[0]), bool(deg[0])


def mesh_scaled_jacobians(mesh: TetMesh) -> np.ndarray:
    sj, _ = kernels.scaled_jacobians(mesh.vertices, mesh.tets)
    return sj


def normalized_quality_stats(deformed: TetMesh, baseline: TetMesh) -> QualityStats:
    """Per-element scaled Jacobian of ``deformed`` normalized by ``baseline``."""
    if deformed.tets.shape != baseline.tets.shape or not np.array_equal(
        deformed.tets, baseline.tets
    ):
        raise MeshError("connectivity mismatch between deformed and baseline mesh")
    sj_d, deg_d = kernels.scaled_jacobians(deformed.vertices, deformed.tets)
    sj_b, deg_b = kernels.scaled_jacobians(baseline.vertices, baseline.tets)
    if deg_b.any() or (sj_b == 0).any():
        raise MeshError("baseline mesh contains a degenerate element")
    nj = sj_d / sj_b
    return QualityStats(
        mean=float(nj.mean()),
        min=float(nj.min()),
        max=float(nj.max()),
        inverted_count=int((nj < 0).sum()),
        degenerate_count=int(deg_d.sum()),
    )


# ---------------------------------------------------------------------------
# surface extraction


def boundary_face_set(tets: np.ndarray) -> set[tuple[int, int, int]]:
    """Sorted vertex triples of faces incident to exactly one tet."""
    faces = np.sort(tets[:, TET_FACES].reshape(-1, 3), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    return {tuple(int(i) for i in f) for f in uniq[counts == 1]}


def extract_surface(mesh: TetMesh) -> SurfaceMesh:
    """All faces incident to exactly one tet, outward oriented and tagged.

    Feature tags are copied from ``mesh.boundary_faces``; surface vertices
    are renumbered compactly with ``volume_vertex_of`` recording the map
    back to volume indices.
    """
    faces = mesh.tets[:, TET_FACES].reshape(-1, 3)  # outward per owning tet
    key = np.sort(faces, axis=1)
    uniq, inverse, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    on_boundary = counts[inverse] == 1
    oriented = faces[on_boundary]

    tag_of = {
        tuple(sorted(int(i) for i in f)): int(t)
        for f, t in zip(mesh.boundary_faces, mesh.boundary_tags)
    }
    tags = np.array(
        [tag_of[tuple(int(i) for i in sorted(f))] for f in oriented], dtype=np.int64
    )

    vol_ids = np.unique(oriented)
    local_of = np.full(mesh.num_vertices, -1, dtype=np.int64)
    local_of[vol_ids] = np.arange(len(vol_ids))
    return SurfaceMesh(
        vertices=mesh.vertices[vol_ids],
        triangles=local_of[oriented],
        feature=tags,
        volume_vertex_of=vol_ids,
    )


# ---------------------------------------------------------------------------
# file I/O (tetmesh-v1 / dispfield-v1, see README)


def load_tet_mesh(path) -> TetMesh:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "tetmesh v1":
        raise ParseError(f"{path}: expected 'tetmesh v1' header")
    try:
        nv, nt, nb = (int(x) for x in lines[1].split())
        body = lines[2:]
        if len(body) != nv + nt + nb:
            raise ParseError(
                f"{path}: expected {nv + nt + nb} record lines, got {len(body)}"
            )
        vertices = np.array(
            [[float(x) for x in ln.split()] for ln in body[:nv]]
        ).reshape(nv, 3)
        tets = np.array(
            [[int(x) for x in ln.split()] for ln in body[nv : nv + nt]],
            dtype=np.int64,
        ).reshape(nt, 4)
        braw = [
            [int(x) for x in ln.split()] for ln in body[nv + nt : nv + nt + nb]
        ]
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if nb:
        barr = np.array(braw, dtype=np.int64).reshape(nb, 4)
        bfaces, btags = barr[:, :3], barr[:, 3]
    else:
        bfaces = np.array(sorted(boundary_face_set(tets)), dtype=np.int64).reshape(
            -1, 3
        )
        btags = np.zeros(len(bfaces), dtype=np.int64)
    return TetMesh(vertices, tets, bfaces, btags).validate()


def save_tet_mesh(mesh: TetMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("tetmesh v1\n")
        fh.write(
            f"{mesh.num_vertices} {mesh.num_tets} {len(mesh.boundary_faces)}\n"
        )
        for v in mesh.vertices:
            fh.write(" ".join(FLOAT_FMT % x for x in v) + "\n")
        for t in mesh.tets:
            fh.write(" ".join(str(i) for i in t) + "\n")
        for f, tag in zip(mesh.boundary_faces, mesh.boundary_tags):
            fh.write(f"{f[0]} {f[1]} {f[2]} {tag}\n")


def write_displacement_field(path, fld: DisplacementField) -> None:
    with open(path, "w") as fh:
        fh.write(f"dispfield v1 {fld.vertex_count}\n")
        for row in fld.values:
            fh.write(" ".join(FLOAT_FMT % x for x in row) + "\n")


def read_displacement_field(path) -> DisplacementField:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("dispfield v1"):
        raise ParseError(f"{path}: expected 'dispfield v1 <n>' header")
    try:
        n = int(lines[0].split()[2])
        values = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if len(values) != n:
        raise ParseError(f"{path}: header count {n} != {len(values)} value lines")
    if values.size and values.shape[1] != 3:
        raise ParseError(f"{path}: expected 3 components per line")
    return DisplacementField(values.reshape(n, 3))


def export_surface_obj(surface: SurfaceMesh, path) -> None:
    """Wavefront-style export, one group per feature tag, 1-based indices."""
    if surface.num_vertices == 0 or len(surface.triangles) == 0:
        raise MeshError("refusing to export an empty surface")
    with open(path, "w") as fh:
        for v in surface.vertices:
            fh.write("v " + " ".join(FLOAT_FMT % x for x in v) + "\n")
        for tag in np.unique(surface.feature):
            fh.write(f"g feature_{tag}\n")
            for tri in surface.triangles[surface.feature == tag]:
                fh.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")
