"""Discrete surface calculus: stiffness/mass matrices, tangential gradients,
the zero-mean subspace, and the first Laplace-Beltrami eigenvalue.

The stiffness matrix K carries cotangent weights (negative weights from
obtuse triangles are kept, not clamped) and the mass matrix is barycentric
lumped, so u^T K u equals the integrated squared tangential gradient of the
piecewise-linear interpolant and trace(Mass) equals the surface area.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .mesh import SurfaceMesh


class EigenSolveError(RuntimeError):
    """Inverse iteration failed to converge."""


def assemble_stiffness(mesh: SurfaceMesh) -> sparse.csr_array:
    """Cotangent-weight stiffness matrix: K_uv = -(cot a + cot b)/2 on edges,
    diagonal the negated off-diagonal row sum. Symmetric PSD; constants span
    the kernel on a connected mesh."""
    tris = mesh.triangles
    p = mesh.vertices[tris]
    rows, cols, vals = [], [], []
    for corner in range(3):
        u = tris[:, (corner + 1) % 3]
        v = tris[:, (corner + 2) % 3]
        e1 = p[:, (corner + 1) % 3] - p[:, corner]
        e2 = p[:, (corner + 2) % 3] - p[:, corner]
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        cot = np.einsum("ij,ij->i", e1, e2) / cross
        w = -0.5 * cot
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite cotangent weight (degenerate triangle)")
    n = mesh.num_vertices
    K = sparse.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.setdiag(-np.asarray(K.sum(axis=1)).ravel())
    return K.tocsr()


def assemble_mass(mesh: SurfaceMesh) -> sparse.dia_array:
    """Barycentric lumped (diagonal) mass matrix; trace equals total area."""
    return sparse.dia_array(
        (vertex_mass(mesh)[None, :], [0]), shape=(mesh.num_vertices, mesh.num_vertices)
    )


def vertex_mass(mesh: SurfaceMesh) -> np.ndarray:
    """(V,) barycentric vertex areas (the mass-matrix diagonal)."""
    areas = mesh.triangle_areas()
    m = np.zeros(mesh.num_vertices)
    for corner in range(3):
        np.add.at(m, mesh.triangles[:, corner], areas / 3.0)
    return m


def tangential_gradient(mesh: SurfaceMesh, u) -> np.ndarray:
    """(F, 3) constant in-plane gradient of the linear interpolant of u.

    Satisfies the Galerkin identity sum_f area_f |grad u|_f^2 = u^T K u.
    """
    u = np.asarray(u, dtype=np.float64)
    tris = mesh.triangles
    p = mesh.vertices[tris]
    n = mesh.triangle_normals()
    areas = mesh.triangle_areas()
    grad = np.zeros((mesh.num_faces, 3))
    for corner in range(3):
        # edge opposite the corner, oriented with the winding
        opp = p[:, (corner + 2) % 3] - p[:, (corner + 1) % 3]
        grad += u[tris[:, corner], None] * np.cross(n, opp)
    return grad / (2.0 * areas[:, None])


def project_zero_mean(u, mass) -> np.ndarray:
    """Remove the area-weighted mean: the discrete zero-mean subspace."""
    w = _mass_diagonal(mass)
    u = np.asarray(u, dtype=np.float64)
    return u - (w @ u) / w.sum()


def _mass_diagonal(mass) -> np.ndarray:
    if sparse.issparse(mass):
        return np.asarray(mass.diagonal())
    return np.asarray(mass, dtype=np.float64)


class _GroundedSolver:
    """Direct solver for K y = b with b orthogonal to constants.

    Grounds vertex 0 (whose row is redundant for compatible right-hand
    sides), factorizes once, and returns the exact singular-system solution.
    """

    def __init__(self, K):
        n = K.shape[0]
        self._lu = splu(sparse.csc_matrix(K[1:, :][:, 1:]))
        self._n = n

    def solve(self, b):
        y = np.zeros(self._n)
        y[1:] = self._lu.solve(b[1:])
        return y


def first_nonzero_eigenvalue(
    K, mass, tol: float = 1e-8, max_iter: int = 200, seed: int = 0
):
    """Smallest nonzero generalized eigenvalue of K u = lambda Mass u.

    Shift-free inverse iteration on the mass-orthogonal complement of the
    constants (deflation by projection), converging when the relative
    eigen-residual ||K x - lambda Mass x|| / (lambda ||Mass x||) <= tol.

    Returns (lambda1, eigenvector) with the eigenvector mass-normalized.
    """
    w = _mass_diagonal(mass)
    solver = _GroundedSolver(sparse.csr_array(K))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(K.shape[0])

    def deflate(v):
        return v - (w @ v) / w.sum()

    x = deflate(x)
    x /= np.sqrt(x @ (w * x))
    lam = float(x @ (K @ x))
    for _ in range(max_iter):
        y = solver.solve(w * x)
        y = deflate(y)
        y /= np.sqrt(y @ (w * y))
        lam = float(y @ (K @ y))
        residual = np.linalg.norm(K @ y - lam * (w * y))
        if residual <= tol * lam * np.linalg.norm(w * y):
            return lam, y
        x = y
    raise EigenSolveError(
        f"inverse iteration did not reach residual {tol} in {max_iter} iterations"
    )


@dataclass
class DiscreteOperators:
    """Assembled operators for one mesh; immutable once built."""

    mesh: SurfaceMesh
    K: sparse.csr_array
    mass: np.ndarray  # diagonal entries
    lambda1: float = None

    @property
    def total_area(self) -> float:
        return float(self.mass.sum())

    def energy(self, u, v) -> tuple:
        """(kinetic, potential) = (v^T M v / 2, u^T K u / 2)."""
        return 0.5 * float(v @ (self.mass * v)), 0.5 * float(u @ (self.K @ u))

    def face_gradient(self, u) -> np.ndarray:
        """Per-face tangential gradient of the linear interpolant of u."""
        return tangential_gradient(self.mesh, u)


def build_operators(mesh: SurfaceMesh, compute_lambda1: bool = False) -> DiscreteOperators:
    """Assemble K and the mass diagonal (optionally also lambda1)."""
    K = assemble_stiffness(mesh)
    mass = vertex_mass(mesh)
    ops = DiscreteOperators(mesh=mesh, K=K, mass=mass)
    if compute_lambda1:
        ops.lambda1, _ = first_nonzero_eigenvalue(K, mass)
    return ops


def export_matrix_coo(path, A) -> None:
    """Write a sparse matrix as `row col value` text lines."""
    from .fileio import FLOAT_FMT

    coo = sparse.coo_array(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as f:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            f.write(f"{r} {c} {FLOAT_FMT % v}\n")
