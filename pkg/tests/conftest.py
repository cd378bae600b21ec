import numpy as np
import pytest

from surfwave import geometry, mesh, operators


@pytest.fixture(scope="session")
def icosphere3():
    return mesh.generate_icosphere((0.0, 0.0, 0.0), 1.0, 3)


@pytest.fixture(scope="session")
def icosphere4():
    return mesh.generate_icosphere((0.0, 0.0, 0.0), 1.0, 4)


@pytest.fixture(scope="session")
def torus64():
    return mesh.generate_torus((0.0, 0.0, 0.0), 2.0, 1.0, 64, 64)


@pytest.fixture(scope="session")
def ops3(icosphere3):
    return operators.build_operators(icosphere3)


@pytest.fixture(scope="session")
def ops4(icosphere4):
    return operators.build_operators(icosphere4)


@pytest.fixture(scope="session")
def mode3(ops3):
    lam, vec = operators.first_nonzero_eigenvalue(ops3.K, ops3.mass)
    return lam, vec


@pytest.fixture(scope="session")
def mode4(ops4):
    lam, vec = operators.first_nonzero_eigenvalue(ops4.K, ops4.mass)
    return lam, vec


@pytest.fixture(scope="session")
def sphere4_geometry(icosphere4):
    normals, areas = geometry.vertex_normals_and_areas(icosphere4)
    curv = geometry.shape_operator(icosphere4, normals)
    return normals, areas, curv


@pytest.fixture(scope="session")
def sphere3_decomp_curv(icosphere3):
    normals, _ = geometry.vertex_normals_and_areas(icosphere3)
    curv = geometry.shape_operator(icosphere3, normals)
    decomp = geometry.classify_visibility(icosphere3, normals, (0.0, 0.0, -2.0))
    return decomp, curv


def flat_grid(n=6, equilateral=False):
    """Open planar triangulated patch of the unit square (test helper)."""
    xs = np.linspace(0.0, 1.0, n)
    ys = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    if equilateral:
        X = X + 0.5 * (np.arange(n) / (n - 1))[None, :]
        Y = Y * (np.sqrt(3.0) / 2.0)
    verts = np.stack([X.ravel(), Y.ravel(), np.zeros(n * n)], axis=1)
    tris = []
    for i in range(n - 1):
        for j in range(n - 1):
            a, b, c, d = i * n + j, (i + 1) * n + j, (i + 1) * n + j + 1, i * n + j + 1
            tris += [(a, b, c), (a, c, d)]
    return mesh.SurfaceMesh(verts, np.array(tris)), n


def interior_vertices(n):
    idx = []
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            idx.append(i * n + j)
    return np.array(idx)


def cube_mesh(n=8):
    """Closed subdivided cube surface; face interiors are flat (test helper)."""
    key_to_id = {}
    verts = []

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in key_to_id:
            key_to_id[key] = len(verts)
            verts.append(p)
        return key_to_id[key]

    tris = []
    grid = np.linspace(-1.0, 1.0, n + 1)
    for axis in range(3):
        for sign in (-1.0, 1.0):
            for i in range(n):
                for j in range(n):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[axis] = sign
                        p[(axis + 1) % 3] = grid[i + di]
                        p[(axis + 2) % 3] = grid[j + dj]
                        corners.append(vid(p))
                    a, b, c, d = corners
                    tris += [(a, b, c), (a, c, d)]
    return mesh.orient(mesh.SurfaceMesh(np.array(verts), np.array(tris))), n


def klein_bottle(nu=8, nv=8):
    """Combinatorial Klein bottle (closed, non-orientable; test helper)."""
    def vid(i, j):
        i = i % nu
        if j == nv:
            return ((nu - i) % nu) * nv
        return i * nv + j

    phi = 2.0 * np.pi * np.arange(nu) / nu
    verts = []
    for i in range(nu):
        for j in range(nv):
            verts.append((np.cos(phi[i]), np.sin(phi[i]), float(j)))
    tris = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    return mesh.SurfaceMesh(np.array(verts), np.array(tris))
