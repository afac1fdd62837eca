"""Curve-skeleton generation, curve-biharmonic manipulation and skinning.

Skeleton generation contracts a copy of the surface with an implicit
Laplacian smoothing flow, clusters the collapsed vertices into joints,
and links joints spanned by surface edges. Manipulation solves
Bc d = 0 with Bc = Lc Mc^-1 Lc, identity rows on boundary/constrained
joints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import kernels
from .mesh import DisplacementField, MeshError, SurfaceMesh
from .operators import SolveError


class SkeletonError(Exception):
    """Skeletonization failure (non-manifold input or divergence)."""


@dataclass(frozen=True)
class SkeletonParams:
    contraction_weight: float | None = None  # None: 1/(10 sqrt(mean ring area))
    weight_growth: float = 2.0
    attraction_weight: float = 1.0
    max_iterations: int = 30
    area_ratio: float = 1e-4
    collapse_factor: float = 2.0  # times mean contracted edge length


@dataclass(frozen=True)
class JointConstraint:
    joint: int
    displacement: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not np.isfinite(self.displacement).all():
            raise ValueError("non-finite joint displacement")


@dataclass(frozen=True)
class CurveSkeleton:
    """Polyline joint/bone graph with curve decomposition and surface binding.

    ``curves`` are maximal chains of joint indices between joints of
    degree != 2; closed loops repeat their first joint at the end.
    """

    joints: np.ndarray  # (j, 3)
    bones: np.ndarray  # (b, 2)
    curves: tuple  # tuple of tuples of joint indices
    bind: np.ndarray  # (nv,) joint index per surface vertex

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_joints, dtype=np.int64)
        for a, b in self.bones:
            deg[a] += 1
            deg[b] += 1
        return deg

    def boundary_joints(self) -> np.ndarray:
        """Joints with other than two neighbors."""
        return np.flatnonzero(self.degrees() != 2)

    def neighbors_along_curves(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_joints)]
        for a, b in self.bones:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        return nbrs


# ---------------------------------------------------------------------------
# generation


def _check_manifold(surface: SurfaceMesh) -> None:
    edges = {}
    for tri in surface.triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    bad = [e for e, c in edges.items() if c != 2]
    if bad:
        raise SkeletonError(
            f"surface is not a closed manifold: edge {bad[0]} has {edges[bad[0]]} triangles"
        )


def _clamped_cotan_stiffness(x: np.ndarray, tris: np.ndarray) -> sp.csr_matrix:
    """Positive-semidefinite cotangent stiffness tolerant of sliver triangles.

    Unlike the strict operator assembly this never raises: near-degenerate
    corners get their cotangent clamped so the contraction flow keeps
    making progress on meshes with collapsed or needle triangles.
    """
    n = len(x)
    rows_l, cols_l, vals_l = [], [], []
    for k in range(3):
        o = tris[:, k]
        i = tris[:, (k + 1) % 3]
        j = tris[:, (k + 2) % 3]
        e1 = x[i] - x[o]
        e2 = x[j] - x[o]
        dots = np.einsum("ij,ij->i", e1, e2)
        crossn = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = dots / np.maximum(crossn, 1e-12)
        np.clip(cot, -1e4, 1e4, out=cot)
        w = 0.5 * cot
        rows_l.extend((i, j))
        cols_l.extend((j, i))
        vals_l.extend((w, w))
    rows = np.concatenate(rows_l)
    cols = np.concatenate(cols_l)
    vals = np.concatenate(vals_l)
    L = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    L.sum_duplicates()
    K = sp.diags(np.asarray(L.sum(axis=1)).ravel()) - L
    return sp.csr_matrix(K)


def _contract(surface: SurfaceMesh, params: SkeletonParams) -> np.ndarray:
    """Iterative implicit contraction of a copy of the surface."""
    x = surface.vertices.copy()
    tris = surface.triangles
    n = len(x)
    area0 = kernels.triangle_areas(x, tris).sum()
    ring = np.zeros(n)
    areas = kernels.triangle_areas(x, tris)
    for k in range(3):
        np.add.at(ring, tris[:, k], areas)
    wl = params.contraction_weight or 1.0 / (10.0 * np.sqrt(ring.mean()))
    wh = params.attraction_weight

    for it in range(params.max_iterations):
        K = _clamped_cotan_stiffness(x, tris)
        A = (wl * K + wh * sp.identity(n)).tocsc()
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SkeletonError(f"contraction solve failed at iteration {it}: {exc}")
        x_new = np.column_stack([lu.solve(wh * x[:, k]) for k in range(3)])
        if not np.isfinite(x_new).all():
            raise SkeletonError(f"contraction diverged (NaN) at iteration {it}")
        x = x_new
        area = kernels.triangle_areas(x, tris).sum()
        if area < params.area_ratio * area0:
            break
        wl *= params.weight_growth
    return x


def _cluster(x: np.ndarray, tris: np.ndarray, radius: float):
    """Greedy radius clustering of contracted vertices, in index order."""
    n = len(x)
    tree = cKDTree(x)
    cluster = np.full(n, -1, dtype=np.int64)
    centers = []
    for v in range(n):
        if cluster[v] >= 0:
            continue
        members = [m for m in tree.query_ball_point(x[v], radius) if cluster[m] < 0]
        cid = len(centers)
        cluster[members] = cid
        centers.append(x[members].mean(axis=0))
    return cluster, np.array(centers)


def _joint_graph(cluster: np.ndarray, centers: np.ndarray, tris: np.ndarray):
    """Bones between clusters spanned by a surface edge, shortcut-pruned."""
    bones = set()
    for k in range(3):
        a = cluster[tris[:, k]]
        b = cluster[tris[:, (k + 1) % 3]]
        for i, j in zip(a, b):
            if i != j:
                bones.add((min(int(i), int(j)), max(int(i), int(j))))
    # drop the longest edge of every bone triangle (clustering shortcuts)
    adj: dict[int, set[int]] = {}
    for i, j in bones:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    for i, j in sorted(bones):
        common = adj.get(i, set()) & adj.get(j, set())
        for k in sorted(common):
            sides = sorted(
                [
                    (np.linalg.norm(centers[a] - centers[b]), (min(a, b), max(a, b)))
                    for a, b in ((i, j), (i, k), (j, k))
                ]
            )
            longest = sides[-1][1]
            if longest in bones:
                bones.discard(longest)
                adj[longest[0]].discard(longest[1])
                adj[longest[1]].discard(longest[0])
    return np.array(sorted(bones), dtype=np.int64).reshape(-1, 2)


def _decompose_curves(num_joints: int, bones: np.ndarray) -> tuple:
    """Maximal chains between joints of degree != 2; loops close on themselves."""
    nbrs: list[list[int]] = [[] for _ in range(num_joints)]
    for a, b in bones:
        nbrs[a].append(int(b))
        nbrs[b].append(int(a))
    deg = np.array([len(v) for v in nbrs])
    visited = set()
    curves = []

    def walk(start, nxt):
        chain = [start, nxt]
        visited.add((min(start, nxt), max(start, nxt)))
        while deg[chain[-1]] == 2 and chain[-1] != chain[0]:
            a, b = nbrs[chain[-1]]
            nxt2 = b if a == chain[-2] else a
            visited.add((min(chain[-1], nxt2), max(chain[-1], nxt2)))
            chain.append(nxt2)
        return chain

    for j in range(num_joints):
        if deg[j] == 2:
            continue
        for nxt in sorted(nbrs[j]):
            if (min(j, nxt), max(j, nxt)) in visited:
                continue
            curves.append(tuple(walk(j, nxt)))
    # remaining bones belong to pure cycles (every joint degree 2)
    for j in range(num_joints):
        if deg[j] != 2:
            continue
        nxt = [b for b in nbrs[j] if (min(j, b), max(j, b)) not in visited]
        if nxt:
            curves.append(tuple(walk(j, sorted(nxt)[0])))
    return tuple(curves)


def skeletonize(
    surface: SurfaceMesh, params: SkeletonParams = SkeletonParams()
) -> CurveSkeleton:
    """Contract, cluster and link the surface into a curve skeleton."""
    _check_manifold(surface)
    x = _contract(surface, params)
    edge_a = surface.triangles[:, [0, 1, 2]].ravel()
    edge_b = surface.triangles[:, [1, 2, 0]].ravel()
    mean_edge = np.linalg.norm(x[edge_a] - x[edge_b], axis=1).mean()
    radius = params.collapse_factor * mean_edge
    cluster, centers = _cluster(x, surface.triangles, radius)
    if (cluster < 0).any():  # Euclidean fallback for lost vertices
        lost = np.flatnonzero(cluster < 0)
        _, nearest = cKDTree(centers).query(x[lost])
        cluster[lost] = nearest
    bones = _joint_graph(cluster, centers, surface.triangles)
    curves = _decompose_curves(len(centers), bones)
    return CurveSkeleton(centers, bones, curves, cluster)


# ---------------------------------------------------------------------------
# curve operators


def _chain_neighbors(skel: CurveSkeleton) -> list[list[int]]:
    nbrs: list[list[int]] = [[] for _ in range(skel.num_joints)]
    for a, b in skel.bones:
        nbrs[a].append(int(b))
        nbrs[b].append(int(a))
    return nbrs


def curve_laplacian(skel: CurveSkeleton) -> sp.csr_matrix:
    """Inverse-distance stencil on chain-interior joints; zero boundary rows."""
    nbrs = _chain_neighbors(skel)
    deg = skel.degrees()
    rows, cols, vals = [], [], []
    for i in range(skel.num_joints):
        if deg[i] != 2:
            continue
        diag = 0.0
        for j in nbrs[i]:
            d = np.linalg.norm(skel.joints[i] - skel.joints[j])
            if d == 0.0:
                raise SkeletonError(f"coincident adjacent joints {i} and {j}")
            rows.append(i)
            cols.append(j)
            vals.append(1.0 / d)
            diag -= 1.0 / d
        rows.append(i)
        cols.append(i)
        vals.append(diag)
    return sp.coo_matrix(
        (vals, (rows, cols)), shape=(skel.num_joints,) * 2
    ).tocsr()


def curve_mass(skel: CurveSkeleton) -> sp.csr_matrix:
    """Half-distance lumped mass; boundary joints get mass one."""
    nbrs = _chain_neighbors(skel)
    deg = skel.degrees()
    diag = np.ones(skel.num_joints)
    for i in range(skel.num_joints):
        if deg[i] != 2:
            continue
        d = [np.linalg.norm(skel.joints[i] - skel.joints[j]) for j in nbrs[i]]
        if min(d) == 0.0:
            raise SkeletonError(f"zero-length bone at joint {i}")
        diag[i] = sum(d) / 2.0
    return sp.diags(diag).tocsr()


def curve_biharmonic(skel: CurveSkeleton) -> sp.csr_matrix:
    Lc = curve_laplacian(skel)
    Mc = curve_mass(skel)
    return sp.csr_matrix(Lc @ sp.diags(1.0 / Mc.diagonal()) @ Lc)


def solve_skeleton_deformation(
    skel: CurveSkeleton, constraints: list[JointConstraint]
) -> np.ndarray:
    """Per-joint displacements from curve-biharmonic extension.

    Boundary joints and constrained joints get identity rows; curves not
    touched by any constraint are pinned to zero wholesale.
    """
    n = skel.num_joints
    for c in constraints:
        if not 0 <= c.joint < n:
            raise SkeletonError(f"constraint on nonexistent joint {c.joint}")
    prescribed = np.zeros((n, 3))
    constrained = np.zeros(n, dtype=bool)
    for c in constraints:
        constrained[c.joint] = True
        prescribed[c.joint] = c.displacement

    active = np.zeros(n, dtype=bool)
    for curve in skel.curves:
        if any(constrained[j] for j in curve):
            for j in curve:
                active[j] = True

    pinned = np.zeros(n, dtype=bool)
    pinned[skel.boundary_joints()] = True
    pinned |= ~active
    pinned |= constrained

    Bc = sp.lil_matrix(curve_biharmonic(skel))
    for i in np.flatnonzero(pinned):
        Bc.rows[i] = [i]
        Bc.data[i] = [1.0]
    A = Bc.tocsc()
    out = np.empty((n, 3))
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolveError(f"singular skeleton system: {exc}")
    for axis in range(3):
        rhs = np.where(pinned & constrained, prescribed[:, axis], 0.0)
        rhs[pinned & ~constrained] = 0.0
        out[:, axis] = lu.solve(rhs)
    if not np.isfinite(out).all():
        raise SolveError("singular skeleton system")
    out[constrained] = prescribed[constrained]
    return out


def apply_skeleton_to_surface(
    surface: SurfaceMesh, skel: CurveSkeleton, joint_displacements: np.ndarray
) -> DisplacementField:
    """Nearest-joint skinning: each vertex moves with its bound joint."""
    disp = np.asarray(joint_displacements, dtype=np.float64)
    if disp.shape != (skel.num_joints, 3):
        raise SkeletonError("joint displacement list does not match joint count")
    if len(skel.bind) != surface.num_vertices:
        raise SkeletonError("skeleton binding does not match surface vertex count")
    return DisplacementField(disp[skel.bind])


# ---------------------------------------------------------------------------
# file format


def save_skeleton(skel: CurveSkeleton, path) -> None:
    with open(path, "w") as fh:
        fh.write("skeleton v1\n")
        fh.write(f"{skel.num_joints} {len(skel.bones)}\n")
        for j in skel.joints:
            fh.write(" ".join("%.17g" % x for x in j) + "\n")
        for a, b in skel.bones:
            fh.write(f"{a} {b}\n")
        for j in skel.bind:
            fh.write(f"{j}\n")


def load_skeleton(path) -> CurveSkeleton:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "skeleton v1":
        raise SkeletonError(f"{path}: expected 'skeleton v1' header")
    nj, nb = (int(x) for x in lines[1].split())
    joints = np.array(
        [[float(x) for x in ln.split()] for ln in lines[2 : 2 + nj]]
    ).reshape(nj, 3)
    bones = np.array(
        [[int(x) for x in ln.split()] for ln in lines[2 + nj : 2 + nj + nb]],
        dtype=np.int64,
    ).reshape(nb, 2)
    bind = np.array([int(ln) for ln in lines[2 + nj + nb :]], dtype=np.int64)
    curves = _decompose_curves(nj, bones)
    return CurveSkeleton(joints, bones, curves, bind)
