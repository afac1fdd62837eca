"""Pure-numpy implementations of the per-element kernels.

These are the reference implementations; the compiled extension in
``_core.pyx`` mirrors them exactly and is preferred at import time when
available. Everything here is vectorized over elements.
"""

import numpy as np

COMPILED = False


def tet_volumes(vertices, tets):
    """Signed volumes of each tetrahedron (positive for right-handed order)."""
    v = vertices[tets]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    e3 = v[:, 3] - v[:, 0]
    return np.einsum("ij,ij->i", np.cross(e1, e2), e3) / 6.0


def scaled_jacobians(vertices, tets):
    """Scaled Jacobian of each tet, corner-0 convention.

    Returns (sj, degenerate) where degenerate marks elements with a
    zero-length edge at corner 0; those score 0.
    """
    v = vertices[tets]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    e3 = v[:, 3] - v[:, 0]
    det = np.einsum("ij,ij->i", np.cross(e1, e2), e3)
    norms = (
        np.linalg.norm(e1, axis=1)
        * np.linalg.norm(e2, axis=1)
        * np.linalg.norm(e3, axis=1)
    )
    degenerate = norms == 0.0
    sj = np.zeros(len(tets))
    np.divide(det, norms, out=sj, where=~degenerate)
    return sj, degenerate


def _tet_gradients(vertices, tets):
    """Gradients of the four linear shape functions per tet, (m, 4, 3)."""
    v = vertices[tets]
    e = v[:, 1:] - v[:, :1]  # (m, 3, 3) rows e1,e2,e3
    vol6 = np.linalg.det(e)
    inv = np.linalg.inv(e)  # columns are grad phi_1..3 up to transpose
    g = np.empty((len(tets), 4, 3))
    g[:, 1:] = np.transpose(inv, (0, 2, 1))
    g[:, 0] = -g[:, 1:].sum(axis=1)
    return g, vol6 / 6.0


def tet_stiffness_triplets(vertices, tets):
    """COO triplets of the P1 Galerkin stiffness matrix for -Laplace on tets."""
    g, vol = _tet_gradients(vertices, tets)
    ke = np.einsum("mik,mjk,m->mij", g, g, vol)  # (m, 4, 4)
    m = len(tets)
    rows = np.repeat(tets, 4, axis=1).reshape(m, 4, 4)
    cols = np.tile(tets, (1, 4)).reshape(m, 4, 4)
    return rows.ravel(), cols.ravel(), ke.ravel()


def elastic_stiffness_triplets(vertices, tets, youngs, nu):
    """COO triplets of the linear-tet isotropic elasticity stiffness.

    DOF layout is interleaved: dof(vertex v, axis a) = 3 v + a.
    ``youngs`` is the per-element modulus.
    """
    g, vol = _tet_gradients(vertices, tets)
    lam = youngs * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)) * vol
    mu = youngs / (2.0 * (1.0 + nu)) * vol
    # K[ai, bj] = lam ga_i gb_j + mu (delta_ij ga.gb + ga_j gb_i)
    ke = np.einsum("m,mai,mbj->maibj", lam, g, g)
    ke += np.einsum("m,maj,mbi->maibj", mu, g, g)
    gagb = np.einsum("mak,mbk->mab", g, g)
    idx = np.arange(3)
    ke[:, :, idx, :, idx] += np.einsum("m,mab->abm", mu, gagb).transpose(2, 0, 1)
    m = len(tets)
    dofs = (3 * tets[:, :, None] + np.arange(3)).reshape(m, 12)
    rows = np.repeat(dofs, 12, axis=1).reshape(m, 12, 12)
    cols = np.tile(dofs, (1, 12)).reshape(m, 12, 12)
    return rows.ravel(), cols.ravel(), ke.reshape(m, 12, 12).ravel()


def triangle_areas(vertices, triangles):
    v = vertices[triangles]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    return 0.5 * np.linalg.norm(n, axis=1)


def cotan_triplets(vertices, triangles):
    """COO triplets of the cotangent Laplace-Beltrami operator.

    Off-diagonals are (cot a + cot b)/2 (positive for Delaunay-like
    meshes), diagonal is minus the row sum. Raises on zero-area triangles.
    """
    v = vertices[triangles]
    rows_l = []
    cols_l = []
    vals_l = []
    areas2 = np.linalg.norm(
        np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
    )
    bad = np.flatnonzero(areas2 == 0.0)
    if bad.size:
        raise ValueError(f"degenerate (zero-area) triangle at index {bad[0]}")
    for corner in range(3):
        a = triangles[:, corner]
        b = triangles[:, (corner + 1) % 3]
        c = triangles[:, (corner + 2) % 3]
        u = vertices[b] - vertices[a]
        w = vertices[c] - vertices[a]
        cot = 0.5 * np.einsum("ij,ij->i", u, w) / areas2
        rows_l += [b, c, b, c]
        cols_l += [c, b, b, c]
        vals_l += [cot, cot, -cot, -cot]
    return np.concatenate(rows_l), np.concatenate(cols_l), np.concatenate(vals_l)
