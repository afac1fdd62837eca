import numpy as np
import pytest

from meshsteer.generators import generate_box_channel, generate_cylinder
from meshsteer.mesh import SurfaceMesh, TetMesh, boundary_face_set, extract_surface


def tet_mesh_from_tets(vertices, tets):
    tets = np.array(tets, dtype=np.int64)
    v = np.asarray(vertices)[tets]
    vols = np.einsum(
        "ij,ij->i", v[:, 1] - v[:, 0], np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0])
    )
    tets[vols < 0] = tets[vols < 0][:, [0, 2, 1, 3]]
    faces = np.array(sorted(boundary_face_set(tets)), dtype=np.int64)
    return TetMesh(vertices, tets, faces, np.zeros(len(faces), dtype=np.int64))


@pytest.fixture(scope="session")
def five_tet_cube():
    """Unit cube split into five tets, vertex i at its binary coordinates."""
    verts = np.array(
        [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)],
        dtype=np.float64,
    )
    tets = np.array(
        [
            (1, 2, 4, 7),
            (0, 1, 2, 4),
            (1, 2, 3, 7),
            (1, 4, 5, 7),
            (2, 4, 6, 7),
        ],
        dtype=np.int64,
    )
    return tet_mesh_from_tets(verts, tets).validate()


@pytest.fixture(scope="session")
def small_channel():
    return generate_box_channel(8, 5, 5, (1.0, 0.5, 0.5))


@pytest.fixture(scope="session")
def small_cylinder():
    return generate_cylinder(3, 16, 20)


@pytest.fixture(scope="session")
def torus_surface():
    major, minor, nu, nv = 1.0, 0.3, 48, 18
    u = np.arange(nu) * 2 * np.pi / nu
    v = np.arange(nv) * 2 * np.pi / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.stack(
        [
            (major + minor * np.cos(vv)) * np.cos(uu),
            (major + minor * np.cos(vv)) * np.sin(uu),
            minor * np.sin(vv),
        ],
        axis=-1,
    ).reshape(-1, 3)

    def vid(i, j):
        return (i % nu) * nv + (j % nv)

    tris = []
    for i in range(nu):
        for j in range(nv):
            tris.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)])
            tris.append([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return SurfaceMesh.standalone(pts, np.array(tris, dtype=np.int64))


def _capsule_distance(p, a, b, r):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1) - r


@pytest.fixture(scope="session")
def y_surface():
    """Closed marching-cubes surface of a Y-shaped union of three capsules."""
    measure = pytest.importorskip("skimage.measure")
    stem_lo, fork = np.array([0.0, 0.0, -1.0]), np.array([0.0, 0.0, 0.0])
    tip_r = np.array([0.7, 0.0, 0.8])
    tip_l = np.array([-0.7, 0.0, 0.8])
    n = 56
    grid = np.linspace(-1.4, 1.4, n)
    pts = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
    d = np.minimum(
        _capsule_distance(pts, stem_lo, fork, 0.22),
        np.minimum(
            _capsule_distance(pts, fork, tip_r, 0.18),
            _capsule_distance(pts, fork, tip_l, 0.18),
        ),
    )
    spacing = (grid[1] - grid[0],) * 3
    verts, faces, _, _ = measure.marching_cubes(
        d.reshape(n, n, n), level=0.0, spacing=spacing
    )
    return SurfaceMesh.standalone(verts + grid[0], faces.astype(np.int64))


@pytest.fixture(scope="session")
def tube_surface(small_cylinder):
    return extract_surface(small_cylinder)
