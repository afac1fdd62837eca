"""Write a Y-branched tube tet mesh by tetrahedralizing a voxelized
capsule union (stem plus two branches)."""

import itertools
import sys

import numpy as np

from meshsteer.mesh import TetMesh, boundary_face_set, save_tet_mesh


def capsule_sdf(p, a, b, r):
    a, b = np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1) - r


def y_sdf(p):
    return np.minimum.reduce(
        [
            capsule_sdf(p, (0, 0, -1.0), (0, 0, 0), 0.22),
            capsule_sdf(p, (0, 0, 0), (0.7, 0, 0.8), 0.18),
            capsule_sdf(p, (0, 0, 0), (-0.7, 0, 0.8), 0.18),
        ]
    )


def build(n=26):
    xs = np.linspace(-1.2, 1.2, n + 1)
    cx = (xs[:-1] + xs[1:]) / 2
    centers = np.stack(
        np.meshgrid(cx, cx, cx, indexing="ij"), axis=-1
    ).reshape(-1, 3)
    inside = (y_sdf(centers) < 0).reshape(n, n, n)

    vid = -np.ones((n + 1, n + 1, n + 1), dtype=np.int64)
    verts: list = []
    tets: list = []

    def vertex(i, j, k):
        if vid[i, j, k] < 0:
            vid[i, j, k] = len(verts)
            verts.append((xs[i], xs[j], xs[k]))
        return vid[i, j, k]

    # six-tet split of each inside voxel: one tet per monotone corner path
    for i, j, k in np.argwhere(inside):
        for perm in itertools.permutations(range(3)):
            pos = np.zeros(3, dtype=np.int64)
            chain = [(0, 0, 0)]
            for axis in perm:
                pos = pos.copy()
                pos[axis] += 1
                chain.append(tuple(pos))
            tets.append([vertex(i + a, j + b, k + c) for a, b, c in chain])

    verts = np.array(verts, dtype=np.float64)
    tets = np.array(tets, dtype=np.int64)
    v0 = verts[tets[:, 0]]
    det = np.linalg.det(
        np.stack(
            [verts[tets[:, 1]] - v0, verts[tets[:, 2]] - v0, verts[tets[:, 3]] - v0],
            axis=1,
        )
    )
    swap = det < 0
    fixed = tets.copy()
    fixed[swap, 1], fixed[swap, 2] = tets[swap, 2], tets[swap, 1]
    faces = np.array(sorted(boundary_face_set(fixed)), dtype=np.int64).reshape(-1, 3)
    # feature tags: stem foot is the inlet (0), branch tips the outlet (1)
    fz = verts[faces].mean(axis=1)[:, 2]
    tags = np.full(len(faces), 2, dtype=np.int64)
    tags[fz < -0.95] = 0
    tags[fz > 0.85] = 1
    return TetMesh(verts, fixed, faces, tags)


save_tet_mesh(build(), sys.argv[1])
