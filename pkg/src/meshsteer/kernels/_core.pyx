# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-element kernels. Mirrors ``_fallback`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

COMPILED = True


def tet_volumes(double[:, ::1] vertices, long[:, ::1] tets):
    cdef Py_ssize_t m = tets.shape[0], t, k
    cdef double[3] e1, e2, e3
    cdef double[3] cx
    out = np.empty(m)
    cdef double[::1] o = out
    for t in range(m):
        for k in range(3):
            e1[k] = vertices[tets[t, 1], k] - vertices[tets[t, 0], k]
            e2[k] = vertices[tets[t, 2], k] - vertices[tets[t, 0], k]
            e3[k] = vertices[tets[t, 3], k] - vertices[tets[t, 0], k]
        cx[0] = e1[1] * e2[2] - e1[2] * e2[1]
        cx[1] = e1[2] * e2[0] - e1[0] * e2[2]
        cx[2] = e1[0] * e2[1] - e1[1] * e2[0]
        o[t] = (cx[0] * e3[0] + cx[1] * e3[1] + cx[2] * e3[2]) / 6.0
    return out


def scaled_jacobians(double[:, ::1] vertices, long[:, ::1] tets):
    cdef Py_ssize_t m = tets.shape[0], t, k
    cdef double[3] e1, e2, e3
    cdef double det, n1, n2, n3, norms
    sj = np.zeros(m)
    degenerate = np.zeros(m, dtype=bool)
    cdef double[::1] s = sj
    cdef cnp.uint8_t[::1] d = degenerate.view(np.uint8)
    for t in range(m):
        for k in range(3):
            e1[k] = vertices[tets[t, 1], k] - vertices[tets[t, 0], k]
            e2[k] = vertices[tets[t, 2], k] - vertices[tets[t, 0], k]
            e3[k] = vertices[tets[t, 3], k] - vertices[tets[t, 0], k]
        det = (
            (e1[1] * e2[2] - e1[2] * e2[1]) * e3[0]
            + (e1[2] * e2[0] - e1[0] * e2[2]) * e3[1]
            + (e1[0] * e2[1] - e1[1] * e2[0]) * e3[2]
        )
        n1 = sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2)
        n2 = sqrt(e2[0] ** 2 + e2[1] ** 2 + e2[2] ** 2)
        n3 = sqrt(e3[0] ** 2 + e3[1] ** 2 + e3[2] ** 2)
        norms = n1 * n2 * n3
        if norms == 0.0:
            d[t] = 1
        else:
            s[t] = det / norms
    return sj, degenerate


cdef inline double _gradients(
    double[:, ::1] vertices, long[:, ::1] tets, Py_ssize_t t, double[4][3] g
):
    """Fill shape-function gradients for tet t, return its volume."""
    cdef double[3][3] e
    cdef double[3][3] inv
    cdef double det
    cdef Py_ssize_t i, k
    for i in range(3):
        for k in range(3):
            e[i][k] = vertices[tets[t, i + 1], k] - vertices[tets[t, 0], k]
    det = (
        e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
        - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
        + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
    )
    inv[0][0] = (e[1][1] * e[2][2] - e[1][2] * e[2][1]) / det
    inv[0][1] = (e[0][2] * e[2][1] - e[0][1] * e[2][2]) / det
    inv[0][2] = (e[0][1] * e[1][2] - e[0][2] * e[1][1]) / det
    inv[1][0] = (e[1][2] * e[2][0] - e[1][0] * e[2][2]) / det
    inv[1][1] = (e[0][0] * e[2][2] - e[0][2] * e[2][0]) / det
    inv[1][2] = (e[0][2] * e[1][0] - e[0][0] * e[1][2]) / det
    inv[2][0] = (e[1][0] * e[2][1] - e[1][1] * e[2][0]) / det
    inv[2][1] = (e[0][1] * e[2][0] - e[0][0] * e[2][1]) / det
    inv[2][2] = (e[0][0] * e[1][1] - e[0][1] * e[1][0]) / det
    # rows of g are gradients; g[1+i] is row i of inv^T, i.e. column i of inv
    for i in range(3):
        for k in range(3):
            g[i + 1][k] = inv[k][i]
    for k in range(3):
        g[0][k] = -(g[1][k] + g[2][k] + g[3][k])
    return det / 6.0


def tet_stiffness_triplets(double[:, ::1] vertices, long[:, ::1] tets):
    cdef Py_ssize_t m = tets.shape[0], t, a, b, k, p = 0
    cdef double[4][3] g
    cdef double vol, acc
    rows = np.empty(16 * m, dtype=np.int64)
    cols = np.empty(16 * m, dtype=np.int64)
    vals = np.empty(16 * m)
    cdef long[::1] r = rows
    cdef long[::1] c = cols
    cdef double[::1] v = vals
    for t in range(m):
        vol = _gradients(vertices, tets, t, g)
        for a in range(4):
            for b in range(4):
                acc = 0.0
                for k in range(3):
                    acc += g[a][k] * g[b][k]
                r[p] = tets[t, a]
                c[p] = tets[t, b]
                v[p] = acc * vol
                p += 1
    return rows, cols, vals


def elastic_stiffness_triplets(
    double[:, ::1] vertices, long[:, ::1] tets, double[::1] youngs, double nu
):
    cdef Py_ssize_t m = tets.shape[0], t, a, b, i, j, k, p = 0
    cdef double[4][3] g
    cdef double vol, lam, mu, dot, val
    rows = np.empty(144 * m, dtype=np.int64)
    cols = np.empty(144 * m, dtype=np.int64)
    vals = np.empty(144 * m)
    cdef long[::1] r = rows
    cdef long[::1] c = cols
    cdef double[::1] v = vals
    for t in range(m):
        vol = _gradients(vertices, tets, t, g)
        lam = youngs[t] * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)) * vol
        mu = youngs[t] / (2.0 * (1.0 + nu)) * vol
        for a in range(4):
            for b in range(4):
                dot = 0.0
                for k in range(3):
                    dot += g[a][k] * g[b][k]
                for i in range(3):
                    for j in range(3):
                        val = lam * g[a][i] * g[b][j] + mu * g[a][j] * g[b][i]
                        if i == j:
                            val += mu * dot
                        r[p] = 3 * tets[t, a] + i
                        c[p] = 3 * tets[t, b] + j
                        v[p] = val
                        p += 1
    return rows, cols, vals


def triangle_areas(double[:, ::1] vertices, long[:, ::1] triangles):
    cdef Py_ssize_t m = triangles.shape[0], t, k
    cdef double[3] u, w, cx
    out = np.empty(m)
    cdef double[::1] o = out
    for t in range(m):
        for k in range(3):
            u[k] = vertices[triangles[t, 1], k] - vertices[triangles[t, 0], k]
            w[k] = vertices[triangles[t, 2], k] - vertices[triangles[t, 0], k]
        cx[0] = u[1] * w[2] - u[2] * w[1]
        cx[1] = u[2] * w[0] - u[0] * w[2]
        cx[2] = u[0] * w[1] - u[1] * w[0]
        o[t] = 0.5 * sqrt(cx[0] ** 2 + cx[1] ** 2 + cx[2] ** 2)
    return out


def cotan_triplets(double[:, ::1] vertices, long[:, ::1] triangles):
    cdef Py_ssize_t m = triangles.shape[0], t, corner, k, p = 0
    cdef long a, b, cc
    cdef double[3] u, w, cx
    cdef double area2, cot
    rows = np.empty(12 * m, dtype=np.int64)
    cols = np.empty(12 * m, dtype=np.int64)
    vals = np.empty(12 * m)
    cdef long[::1] r = rows
    cdef long[::1] c = cols
    cdef double[::1] v = vals
    for t in range(m):
        for k in range(3):
            u[k] = vertices[triangles[t, 1], k] - vertices[triangles[t, 0], k]
            w[k] = vertices[triangles[t, 2], k] - vertices[triangles[t, 0], k]
        cx[0] = u[1] * w[2] - u[2] * w[1]
        cx[1] = u[2] * w[0] - u[0] * w[2]
        cx[2] = u[0] * w[1] - u[1] * w[0]
        area2 = sqrt(cx[0] ** 2 + cx[1] ** 2 + cx[2] ** 2)
        if area2 == 0.0:
            raise ValueError(f"degenerate (zero-area) triangle at index {t}")
        for corner in range(3):
            a = triangles[t, corner]
            b = triangles[t, (corner + 1) % 3]
            cc = triangles[t, (corner + 2) % 3]
            for k in range(3):
                u[k] = vertices[b, k] - vertices[a, k]
                w[k] = vertices[cc, k] - vertices[a, k]
            cot = 0.5 * (u[0] * w[0] + u[1] * w[1] + u[2] * w[2]) / area2
            r[p] = b; c[p] = cc; v[p] = cot; p += 1
            r[p] = cc; c[p] = b; v[p] = cot; p += 1
            r[p] = b; c[p] = b; v[p] = -cot; p += 1
            r[p] = cc; c[p] = cc; v[p] = -cot; p += 1
    return rows, cols, vals
