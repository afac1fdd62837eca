import numpy as np
import pytest
import scipy.sparse as sp

from meshsteer.mesh import MeshError, SurfaceMesh, extract_surface
from meshsteer.operators import (
    DirichletSet,
    SolveConfig,
    SolveError,
    apply_dirichlet,
    lumped_mass,
    polyharmonic_operator,
    solve,
    surface_cotan_laplacian,
    volume_laplacian,
)


@pytest.fixture(scope="module")
def right_triangle_surface():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    tris = np.array([[0, 1, 2]], dtype=np.int64)
    return SurfaceMesh.standalone(verts, tris)


class TestCotanLaplacian:
    def test_right_triangle_oracle(self, right_triangle_surface):
        # angles: 90 at v0, 45 at v1 and v2; w_12 = cot(90)/2 = 0,
        # w_01 = w_02 = cot(45)/2 = 1/2
        L = surface_cotan_laplacian(right_triangle_surface).toarray()
        expected = np.array(
            [[-1.0, 0.5, 0.5], [0.5, -0.5, 0.0], [0.5, 0.0, -0.5]]
        )
        np.testing.assert_allclose(L, expected, atol=1e-14)

    def test_row_sums_zero_on_closed_surface(self, tube_surface):
        L = surface_cotan_laplacian(tube_surface)
        np.testing.assert_allclose(np.asarray(L.sum(axis=1)).ravel(), 0.0, atol=1e-12)

    def test_symmetric(self, tube_surface):
        L = surface_cotan_laplacian(tube_surface)
        assert abs(L - L.T).max() < 1e-12

    def test_negative_semidefinite_form(self, tube_surface):
        rng = np.random.default_rng(1)
        L = surface_cotan_laplacian(tube_surface)
        for _ in range(5):
            x = rng.normal(size=tube_surface.num_vertices)
            assert x @ (L @ x) <= 1e-10

    def test_degenerate_triangle_raises(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
        surf = SurfaceMesh.standalone(verts, np.array([[0, 1, 2]], dtype=np.int64))
        with pytest.raises(ValueError):
            surface_cotan_laplacian(surf)


class TestLumpedMass:
    def test_right_triangle_masses(self, right_triangle_surface):
        M = lumped_mass(right_triangle_surface)
        np.testing.assert_allclose(M.diagonal(), 0.5 / 3.0, atol=1e-15)

    def test_total_mass_is_area(self, tube_surface):
        from meshsteer import kernels

        M = lumped_mass(tube_surface)
        total = kernels.triangle_areas(
            tube_surface.vertices, tube_surface.triangles
        ).sum()
        assert M.diagonal().sum() == pytest.approx(total, rel=1e-12)


class TestPolyharmonic:
    def test_orders(self, tube_surface):
        L = surface_cotan_laplacian(tube_surface)
        M = lumped_mass(tube_surface)
        minv = sp.diags(1.0 / M.diagonal())
        b1 = polyharmonic_operator(L, M, 1)
        b2 = polyharmonic_operator(L, M, 2)
        b3 = polyharmonic_operator(L, M, 3)
        assert abs(b1 - L).max() == 0.0
        assert abs(b2 - L @ minv @ L).max() < 1e-12
        assert abs(b3 - L @ minv @ L @ minv @ L).max() < 1e-12

    def test_bad_order(self, tube_surface):
        L = surface_cotan_laplacian(tube_surface)
        M = lumped_mass(tube_surface)
        with pytest.raises(ValueError):
            polyharmonic_operator(L, M, 4)

    def test_constants_in_nullspace(self, tube_surface):
        L = surface_cotan_laplacian(tube_surface)
        M = lumped_mass(tube_surface)
        ones = np.ones(tube_surface.num_vertices)
        # each extra M^-1 L application amplifies rounding by ~1/min(M)
        for k, atol in ((1, 1e-12), (2, 1e-9), (3, 1e-5)):
            Bk = polyharmonic_operator(L, M, k)
            np.testing.assert_allclose(Bk @ ones, 0.0, atol=atol)


class TestVolumeLaplacian:
    def test_unit_right_tet_corner_entry(self, five_tet_cube):
        from tests.conftest import tet_mesh_from_tets

        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        mesh = tet_mesh_from_tets(verts, np.array([[0, 1, 2, 3]]))
        K = volume_laplacian(mesh).toarray()
        assert K[0, 0] == pytest.approx(0.5, abs=1e-14)
        np.testing.assert_allclose(np.diag(K)[1:], 1.0 / 6.0, atol=1e-14)
        np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-14)

    def test_linear_precision(self, small_channel):
        K = volume_laplacian(small_channel)
        coeff = np.array([0.3, -1.2, 0.7])
        f = small_channel.vertices @ coeff + 2.0
        residual = K @ f
        interior = np.setdiff1d(
            np.arange(small_channel.num_vertices),
            np.unique(small_channel.boundary_faces),
        )
        np.testing.assert_allclose(residual[interior], 0.0, atol=1e-12)

    def test_positive_semidefinite_form(self, small_channel):
        rng = np.random.default_rng(2)
        K = volume_laplacian(small_channel)
        for _ in range(5):
            x = rng.normal(size=small_channel.num_vertices)
            assert x @ (K @ x) >= -1e-10

    def test_inverted_mesh_rejected(self, five_tet_cube):
        verts = five_tet_cube.vertices.copy()
        verts[:, 0] = -verts[:, 0]
        with pytest.raises(MeshError):
            volume_laplacian(five_tet_cube.with_vertices(verts))


class TestDirichlet:
    def test_row_replacement(self, small_channel):
        K = volume_laplacian(small_channel)
        n = K.shape[0]
        bc = DirichletSet(np.array([0, 5, 17]), np.array([1.0, -2.0, 0.25]))
        A, rhs = apply_dirichlet(K, np.zeros(n), bc)
        A = A.toarray()
        for i, v in zip([0, 5, 17], [1.0, -2.0, 0.25]):
            row = np.zeros(n)
            row[i] = 1.0
            np.testing.assert_allclose(A[i], row, atol=0)
            assert rhs[i] == v
        free = np.setdiff1d(np.arange(n), [0, 5, 17])
        np.testing.assert_allclose(A[free], K.toarray()[free], atol=0)

    def test_duplicate_index_rejected(self):
        with pytest.raises(ValueError):
            DirichletSet(np.array([1, 1]), np.array([0.0, 0.0]))

    def test_out_of_range_rejected(self, five_tet_cube):
        K = volume_laplacian(five_tet_cube)
        with pytest.raises(ValueError):
            apply_dirichlet(K, np.zeros(8), DirichletSet(np.array([8]), np.array([0.0])))

    def test_solution_hits_constraints(self, small_channel):
        K = volume_laplacian(small_channel)
        n = K.shape[0]
        boundary = np.unique(small_channel.boundary_faces)
        vals = small_channel.vertices[boundary, 0]
        A, rhs = apply_dirichlet(K, np.zeros(n), DirichletSet(boundary, vals))
        x = solve(A, rhs)
        np.testing.assert_allclose(x[boundary], vals, atol=1e-12)
        # harmonic extension of a linear function is that function
        np.testing.assert_allclose(x, small_channel.vertices[:, 0], atol=1e-10)


class TestSolve:
    def test_direct_singular_raises(self):
        A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(SolveError):
            solve(A, np.array([1.0, 0.0]))

    def test_iterative_agrees_with_direct(self, small_channel):
        K = volume_laplacian(small_channel)
        n = K.shape[0]
        boundary = np.unique(small_channel.boundary_faces)
        vals = np.sin(small_channel.vertices[boundary, 0] * 3.0)
        A, rhs = apply_dirichlet(K, np.zeros(n), DirichletSet(boundary, vals))
        xd = solve(A, rhs)
        xi = solve(A, rhs, SolveConfig(method="conjugate-gradient", tolerance=1e-12))
        np.testing.assert_allclose(xi, xd, atol=1e-7)

    def test_bad_method_rejected(self):
        with pytest.raises(ValueError):
            SolveConfig(method="cholesky")
