import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import eigsh

from surfwave import mesh, operators

from conftest import flat_grid, interior_vertices


def test_stiffness_row_sums(icosphere3, ops3):
    K = ops3.K
    row_sums = np.abs(np.asarray(K.sum(axis=1))).max()
    assert row_sums <= 1e-10 * np.abs(K.data).max()
    # symmetry and PSD spot check
    assert (K - K.T).nnz == 0 or np.abs((K - K.T).data).max() <= 1e-14
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(K.shape[0])
        assert u @ (K @ u) >= -1e-12


def test_flat_patch_linear_harmonic():
    grid, n = flat_grid(7)
    K = operators.assemble_stiffness(grid)
    u = grid.vertices[:, 0]  # linear function x
    residual = np.abs((K @ u)[interior_vertices(n)])
    assert residual.max() <= 1e-12


def test_sphere_rayleigh_quotient(icosphere4, ops4):
    z = icosphere4.vertices[:, 2]
    z = operators.project_zero_mean(z, ops4.mass)
    rq = (z @ (ops4.K @ z)) / (z @ (ops4.mass * z))
    assert abs(rq - 2.0) / 2.0 <= 0.02  # z is a lambda = 2 eigenfunction


def test_mass_matrix(icosphere3, ops3):
    total = icosphere3.triangle_areas().sum()
    assert abs(ops3.mass.sum() - total) <= 1e-12 * total
    assert abs(ops3.mass.sum() - 4 * np.pi) / (4 * np.pi) < 0.01
    assert np.all(ops3.mass > 0)
    M = operators.assemble_mass(icosphere3)
    assert np.array_equal(M.diagonal(), ops3.mass)


def test_mass_uniform_equilateral_grid():
    grid, n = flat_grid(7, equilateral=True)
    m = operators.vertex_mass(grid)
    interior = m[interior_vertices(n)]
    assert np.abs(interior - interior[0]).max() <= 1e-12 * interior[0]


def test_tangential_gradient_constant(icosphere3):
    grad = operators.tangential_gradient(icosphere3, np.full(icosphere3.num_vertices, 3.7))
    assert np.abs(grad).max() <= 1e-12


def test_tangential_gradient_linear_reproduction():
    grid, _ = flat_grid(6)
    grad = operators.tangential_gradient(grid, grid.vertices[:, 0])
    np.testing.assert_allclose(grad, np.tile([1.0, 0.0, 0.0], (grid.num_faces, 1)), atol=1e-12)


def test_galerkin_identity_random_fields(icosphere3, ops3):
    rng = np.random.default_rng(42)
    areas = icosphere3.triangle_areas()
    for _ in range(20):
        u = rng.standard_normal(icosphere3.num_vertices)
        grad = operators.tangential_gradient(icosphere3, u)
        lhs = float(areas @ np.einsum("ij,ij->i", grad, grad))
        rhs = float(u @ (ops3.K @ u))
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_lambda1_sphere(mode4):
    lam, vec = mode4
    assert abs(lam - 2.0) / 2.0 <= 0.02


def test_lambda1_radius_scaling():
    m = mesh.generate_icosphere((0, 0, 0), 2.0, 4)
    K = operators.assemble_stiffness(m)
    mass = operators.vertex_mass(m)
    lam, _ = operators.first_nonzero_eigenvalue(K, mass)
    assert abs(lam - 0.5) / 0.5 <= 0.02  # lambda scales as 1/r^2


def test_lambda1_positive_and_oracle(ops3, mode3, ops4, mode4):
    # independent oracle: scipy shift-invert eigensolver, two refinements
    for ops, (lam, vec) in ((ops3, mode3), (ops4, mode4)):
        assert lam > 0
        M = sparse.dia_array((ops.mass[None, :], [0]), shape=ops.K.shape).tocsc()
        vals = eigsh(ops.K.tocsc(), k=3, M=M, sigma=-1e-3, return_eigenvectors=False)
        oracle = np.sort(vals)[1]  # skip the constant mode
        assert abs(lam - oracle) <= 1e-6 * oracle
        # eigen-residual at the returned vector
        res = np.linalg.norm(ops.K @ vec - lam * (ops.mass * vec))
        assert res <= 1e-7 * lam * np.linalg.norm(ops.mass * vec)


def test_lambda1_spectral_convergence():
    errs = []
    for s in (3, 4, 5):
        m = mesh.generate_icosphere((0, 0, 0), 1.0, s)
        K = operators.assemble_stiffness(m)
        mass = operators.vertex_mass(m)
        lam, _ = operators.first_nonzero_eigenvalue(K, mass)
        errs.append(abs(lam - 2.0))
    assert errs[0] > errs[1] > errs[2]


def test_kernel_dimension_counts_components():
    # two disjoint icosahedra: kernel of K is 2-dimensional
    a = mesh.generate_icosphere((0, 0, 0), 1.0, 0)
    b = mesh.generate_icosphere((5, 0, 0), 1.0, 0)
    verts = np.vstack([a.vertices, b.vertices])
    tris = np.vstack([a.triangles, b.triangles + a.num_vertices])
    K = operators.assemble_stiffness(mesh.SurfaceMesh(verts, tris)).toarray()
    eigvals = np.linalg.eigvalsh(K)
    assert (np.abs(eigvals) < 1e-10).sum() == 2

    single = operators.assemble_stiffness(a).toarray()
    assert (np.abs(np.linalg.eigvalsh(single)) < 1e-10).sum() == 1


def test_eigensolver_failure_reported(ops3):
    with pytest.raises(operators.EigenSolveError):
        operators.first_nonzero_eigenvalue(ops3.K, ops3.mass, tol=1e-16, max_iter=1)


def test_project_zero_mean(ops3):
    n = len(ops3.mass)
    u = np.full(n, 5.0)
    np.testing.assert_allclose(operators.project_zero_mean(u, ops3.mass), 0.0, atol=1e-12)

    rng = np.random.default_rng(3)
    v = rng.standard_normal(n)
    v0 = operators.project_zero_mean(v, ops3.mass)
    assert abs(ops3.mass @ v0) <= 1e-12 * np.linalg.norm(v0)
    # idempotent to near machine precision
    v1 = operators.project_zero_mean(v0, ops3.mass)
    assert np.abs(v1 - v0).max() <= 1e-15 * (1 + np.abs(v0).max())


def test_discrete_poincare(ops4, mode4):
    lam, _ = mode4
    rng = np.random.default_rng(11)
    for _ in range(100):
        u = operators.project_zero_mean(rng.standard_normal(len(ops4.mass)), ops4.mass)
        lhs = u @ (ops4.mass * u)
        rhs = (u @ (ops4.K @ u)) / lam
        assert lhs <= rhs * (1.0 + 1e-7)


def test_build_operators_bundle(icosphere3):
    ops = operators.build_operators(icosphere3, compute_lambda1=True)
    assert abs(ops.lambda1 - 2.0) / 2.0 <= 0.02
    assert abs(ops.total_area - 4 * np.pi) / (4 * np.pi) < 0.01
    u = icosphere3.vertices[:, 2]
    grad = ops.face_gradient(u)
    areas = icosphere3.triangle_areas()
    assert abs(float(areas @ np.einsum("ij,ij->i", grad, grad)) - u @ (ops.K @ u)) <= 1e-10


def test_matrix_export(tmp_path, ops3):
    path = tmp_path / "K.txt"
    operators.export_matrix_coo(path, ops3.K)
    rows = [line.split() for line in path.read_text().splitlines()]
    # round trip a handful of entries
    K = ops3.K.tocoo()
    assert len(rows) == K.nnz
    r0, c0, v0 = int(rows[0][0]), int(rows[0][1]), float(rows[0][2])
    assert ops3.K[r0, c0] == v0
