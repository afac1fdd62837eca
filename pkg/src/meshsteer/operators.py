"""Discrete operators and the shared constrained linear-solve contract.

Sparse matrices are scipy CSR throughout. Sign conventions: the surface
cotangent operator has positive off-diagonals and zero row sums (negative
semidefinite quadratic form); the volume operator is the Galerkin
stiffness of -Laplace (positive semidefinite), whose single-tet corner
entry on the unit right tet is 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .mesh import MeshError, SurfaceMesh, TetMesh


class SolveError(Exception):
    """Singular system or iteration failure."""


@dataclass(frozen=True)
class DirichletSet:
    """Constrained vertex indices with one prescribed scalar each."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64).ravel()
        vals = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if len(idx) != len(vals):
            raise ValueError("index/value length mismatch")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("duplicate constraint index")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SolveConfig:
    method: str = "direct"  # direct | conjugate-gradient
    tolerance: float = 1e-10
    max_iterations: int | None = None  # default 10 n

    def __post_init__(self):
        if self.method not in ("direct", "conjugate-gradient"):
            raise ValueError(f"unknown solve method {self.method!r}")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def _finalize(n, rows, cols, vals, drop_tol=0.0) -> sp.csr_matrix:
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    if drop_tol:
        mat.data[np.abs(mat.data) < drop_tol] = 0.0
    mat.eliminate_zeros()
    return mat


def surface_cotan_laplacian(surface: SurfaceMesh) -> sp.csr_matrix:
    """Cotangent Laplace-Beltrami operator; raises on zero-area triangles."""
    rows, cols, vals = kernels.cotan_triplets(surface.vertices, surface.triangles)
    return _finalize(surface.num_vertices, rows, cols, vals)


def lumped_mass(surface: SurfaceMesh) -> sp.csr_matrix:
    """Barycentric lumped mass: one third of incident triangle area per vertex."""
    areas = kernels.triangle_areas(surface.vertices, surface.triangles)
    diag = np.zeros(surface.num_vertices)
    for k in range(3):
        np.add.at(diag, surface.triangles[:, k], areas / 3.0)
    if (diag <= 0).any():
        bad = int(np.argmin(diag))
        raise MeshError(f"vertex {bad} has a zero-area triangle star")
    return sp.diags(diag).tocsr()


def polyharmonic_operator(L: sp.spmatrix, M: sp.spmatrix, k: int) -> sp.csr_matrix:
    """L, L M^-1 L or L M^-1 L M^-1 L for k = 1, 2, 3."""
    if k not in (1, 2, 3):
        raise ValueError(f"harmonic order must be 1, 2 or 3, got {k}")
    L = sp.csr_matrix(L)
    if k == 1:
        return L
    minv = sp.diags(1.0 / M.diagonal())
    op = L
    for _ in range(k - 1):
        op = op @ minv @ L
    return sp.csr_matrix(op)


def volume_laplacian(mesh: TetMesh) -> sp.csr_matrix:
    """P1 Galerkin stiffness of -Laplace on tets (mimetic on simplices)."""
    vols = kernels.tet_volumes(mesh.vertices, mesh.tets)
    if (vols <= 0).any():
        bad = int(np.argmin(vols))
        raise MeshError(f"inverted or degenerate tet {bad} in Laplacian assembly")
    rows, cols, vals = kernels.tet_stiffness_triplets(mesh.vertices, mesh.tets)
    return _finalize(mesh.num_vertices, rows, cols, vals)


def apply_dirichlet(
    A: sp.spmatrix, rhs: np.ndarray, bc: DirichletSet
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row replacement: constrained rows become identity, rhs the values.

    Deliberately not symmetric elimination; unconstrained rows are
    untouched.
    """
    A = sp.csr_matrix(A, copy=True)
    rhs = np.array(rhs, dtype=np.float64, copy=True)
    n = A.shape[0]
    if len(bc.indices) and (bc.indices.min() < 0 or bc.indices.max() >= n):
        raise ValueError("constraint index out of range")
    if len(bc.indices) == 0:
        return A, rhs
    mask = np.zeros(n, dtype=bool)
    mask[bc.indices] = True
    keep = np.repeat(~mask, np.diff(A.indptr))
    A.data[~keep] = 0.0
    A.eliminate_zeros()
    ident = sp.coo_matrix(
        (np.ones(len(bc.indices)), (bc.indices, bc.indices)), shape=A.shape
    )
    A = (A + ident).tocsr()
    rhs[bc.indices] = bc.values
    return A, rhs


def solve(
    A: sp.spmatrix,
    b: np.ndarray,
    config: SolveConfig = SolveConfig(),
    symmetric: bool = False,
) -> np.ndarray:
    """Solve A x = b to the configured relative residual."""
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if config.method == "direct":
        with np.errstate(all="ignore"):
            x = spla.spsolve(A, b)
        if not np.isfinite(x).all():
            raise SolveError("direct solve produced non-finite values (singular?)")
        return x
    maxiter = config.max_iterations or 10 * n
    krylov = spla.cg if symmetric else spla.gmres
    x, info = krylov(A, b, rtol=config.tolerance, maxiter=maxiter)
    if info > 0:
        raise SolveError(f"iterative solve did not converge in {maxiter} iterations")
    if info < 0:
        raise SolveError("iterative solve failed")
    return x
