"""Closed oriented triangle meshes: loading, generation, validation.

A :class:`SurfaceMesh` is an indexed triangle mesh (vertex array + ordered
index triples) standing in for a compact embedded surface without boundary.
Loaders and generators only hand out meshes that pass
:func:`validate_closed_manifold`; the class itself accepts raw arrays so that
the validator can be exercised on broken inputs.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .fileio import FLOAT_FMT

# Triangles with area below this fraction of the mean blow up the cotangent
# weights downstream; loaders reject them outright.
DEGENERATE_AREA_RATIO = 1e-12

MAX_ICOSPHERE_SUBDIVISIONS = 8


class MeshError(ValueError):
    """Raised for unparseable files and meshes violating closedness,
    manifoldness or orientability."""


class SurfaceMesh:
    """Indexed triangle mesh of a surface embedded in 3-space.

    Parameters
    ----------
    vertices : array_like
        (V, 3) float coordinates.
    triangles : array_like
        (F, 3) integer vertex indices; winding carries orientation.

    Derived edge and adjacency tables are computed once and cached. The mesh
    is immutable after construction; all arrays are set read-only.
    """

    def __init__(self, vertices, triangles):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be an (V, 3) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must be an (F, 3) array")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2]):
            raise MeshError("triangle with repeated vertex")
        self.vertices = v
        self.triangles = t
        # directed edges (3F, 2) and the undirected unique edge table
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        undirected = np.sort(directed, axis=1)
        self.edges, self._edge_counts = np.unique(undirected, axis=0, return_counts=True)
        self._directed_edges = directed
        for arr in (self.vertices, self.triangles, self.edges, self._edge_counts):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.triangles)

    @property
    def euler_characteristic(self) -> int:
        return self.num_vertices - self.num_edges + self.num_faces

    def triangle_areas(self) -> np.ndarray:
        """(F,) areas of all triangles."""
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def triangle_normals(self) -> np.ndarray:
        """(F, 3) unit normals following the winding."""
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        norms = np.linalg.norm(cross, axis=1)
        if np.any(norms == 0.0):
            raise MeshError("degenerate triangle (zero area)")
        return cross / norms[:, None]

    def edge_lengths(self) -> np.ndarray:
        """(E,) lengths of the undirected edges."""
        return np.linalg.norm(
            self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]], axis=1
        )

    def signed_volume(self) -> float:
        """Enclosed volume by the divergence theorem; positive iff the
        winding normals point outward."""
        p = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2]))) / 6.0

    def vertex_triangle_adjacency(self):
        """Lists (vertex -> incident triangle indices), built on demand."""
        adj = [[] for _ in range(self.num_vertices)]
        for f, tri in enumerate(self.triangles):
            for v in tri:
                adj[v].append(f)
        return adj

    def vertex_neighbors(self):
        """Lists (vertex -> adjacent vertex indices) from the edge table."""
        nbrs = [[] for _ in range(self.num_vertices)]
        for a, b in self.edges:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        return nbrs

    def is_closed(self) -> bool:
        """True iff every edge is shared by exactly two triangles."""
        return bool(np.all(self._edge_counts == 2))

    def is_oriented(self) -> bool:
        """True iff windings are globally consistent: every shared edge is
        traversed in opposite directions by its two triangles."""
        d = self._directed_edges
        # consistent orientation <=> no directed edge repeats
        return len(np.unique(d, axis=0)) == len(d)


@dataclass(frozen=True)
class ValidationReport:
    V: int
    E: int
    F: int
    chi: int
    is_closed: bool
    is_oriented: bool
    min_area_ratio: float

    def ok(self) -> bool:
        return self.is_closed and self.is_oriented and self.min_area_ratio > DEGENERATE_AREA_RATIO


def validate_closed_manifold(mesh: SurfaceMesh) -> ValidationReport:
    """Compute counts and closedness/orientedness flags; never raises."""
    areas = mesh.triangle_areas()
    mean = float(areas.mean()) if len(areas) else 0.0
    ratio = float(areas.min() / mean) if mean > 0 else 0.0
    return ValidationReport(
        V=mesh.num_vertices,
        E=mesh.num_edges,
        F=mesh.num_faces,
        chi=mesh.euler_characteristic,
        is_closed=mesh.is_closed(),
        is_oriented=mesh.is_oriented(),
        min_area_ratio=ratio,
    )


def _check_topology(mesh: SurfaceMesh) -> SurfaceMesh:
    """Enforce the closedness/manifoldness/degeneracy invariants."""
    counts = mesh._edge_counts
    if np.any(counts > 2):
        raise MeshError("non-manifold edge (shared by more than 2 faces)")
    if np.any(counts < 2):
        raise MeshError("open surface (boundary edge found)")
    areas = mesh.triangle_areas()
    if areas.min() <= DEGENERATE_AREA_RATIO * areas.mean():
        raise MeshError("degenerate triangle (area below threshold)")
    return mesh


def orient(mesh: SurfaceMesh) -> SurfaceMesh:
    """Repair windings by BFS flip propagation from triangle 0, then flip
    each connected component so its signed volume is positive (exterior
    normals).

    Raises MeshError if no consistent orientation exists (non-orientable).
    """
    tris = np.array(mesh.triangles)
    # face adjacency through shared undirected edges
    edge_to_faces = {}
    for f, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_to_faces.setdefault(key, []).append(f)

    def directed_edges(tri):
        return ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0]))

    visited = np.zeros(len(tris), dtype=bool)
    component = np.zeros(len(tris), dtype=np.int64)
    n_comp = 0
    for seed in range(len(tris)):
        if visited[seed]:
            continue
        visited[seed] = True
        component[seed] = n_comp
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            for a, b in directed_edges(tris[f]):
                key = (min(a, b), max(a, b))
                for g in edge_to_faces[key]:
                    if g == f:
                        continue
                    # g shares edge {a, b}: traversal direction decides the flip
                    inconsistent = (a, b) in directed_edges(tris[g])
                    if visited[g]:
                        if inconsistent:
                            raise MeshError(
                                "inconsistent orientation not repairable by winding flips"
                            )
                        continue
                    if inconsistent:
                        tris[g] = tris[g][::-1]
                    visited[g] = True
                    component[g] = n_comp
                    queue.append(g)
        n_comp += 1

    p = mesh.vertices[tris]
    volumes = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0
    for comp in range(n_comp):
        mask = component == comp
        if volumes[mask].sum() < 0:
            tris[mask] = tris[mask][:, ::-1]
    return SurfaceMesh(mesh.vertices, tris)


# ---------------------------------------------------------------------------
# file formats


def load_mesh(path, format=None) -> SurfaceMesh:
    """Load an OFF or OBJ file as a validated closed oriented mesh.

    The format is inferred from the extension unless given explicitly.
    Vertex order is preserved from the file; windings may be flipped by the
    orientation repair.
    """
    path = str(path)
    if format is None:
        lowered = path.lower()
        if lowered.endswith(".off"):
            format = "off"
        elif lowered.endswith(".obj"):
            format = "obj"
        else:
            raise MeshError(f"cannot infer mesh format from {path!r}")
    if format == "off":
        vertices, triangles = _parse_off(path)
    elif format == "obj":
        vertices, triangles = _parse_obj(path)
    else:
        raise MeshError(f"unsupported mesh format {format!r}")
    mesh = SurfaceMesh(vertices, triangles)
    return orient(_check_topology(mesh))


def _content_lines(path):
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def _parse_off(path):
    lines = _content_lines(path)
    try:
        header = next(lines)
    except StopIteration:
        raise MeshError("empty OFF file") from None
    if header != "OFF":
        raise MeshError("missing OFF header")
    try:
        counts = next(lines).split()
        nv, nf = int(counts[0]), int(counts[1])
        vertices = []
        for _ in range(nv):
            parts = next(lines).split()
            if len(parts) != 3:
                raise MeshError("OFF vertex line must have 3 coordinates")
            vertices.append([float(x) for x in parts])
        triangles = []
        for _ in range(nf):
            parts = next(lines).split()
            if int(parts[0]) != 3 or len(parts) != 4:
                raise MeshError("OFF face line must be '3 i j k'")
            triangles.append([int(x) for x in parts[1:4]])
    except MeshError:
        raise
    except (StopIteration, ValueError, IndexError) as exc:
        raise MeshError(f"OFF parse failure: {exc}") from exc
    return np.array(vertices), np.array(triangles)


def _parse_obj(path):
    vertices = []
    triangles = []
    for line in _content_lines(path):
        parts = line.split()
        if parts[0] == "v":
            if len(parts) != 4:
                raise MeshError("OBJ vertex line must be 'v x y z'")
            try:
                vertices.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise MeshError(f"OBJ parse failure: {exc}") from exc
        elif parts[0] == "f":
            if len(parts) != 4:
                raise MeshError("only triangular OBJ faces are supported")
            idx = []
            for token in parts[1:]:
                if "/" in token:
                    raise MeshError("OBJ texture/normal indices are not supported")
                try:
                    i = int(token)
                except ValueError as exc:
                    raise MeshError(f"OBJ parse failure: {exc}") from exc
                if i <= 0:
                    raise MeshError("OBJ negative or zero indices are not supported")
                idx.append(i - 1)
            triangles.append(idx)
        else:
            raise MeshError(f"unsupported OBJ keyword {parts[0]!r}")
    if not vertices or not triangles:
        raise MeshError("OBJ file contains no mesh")
    return np.array(vertices), np.array(triangles)


def save_off(mesh: SurfaceMesh, path) -> None:
    """Write an ASCII OFF file; coordinates round-trip bit-exactly."""
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{mesh.num_vertices} {mesh.num_faces} {mesh.num_edges}\n")
        for x, y, z in mesh.vertices:
            f.write(f"{FLOAT_FMT % x} {FLOAT_FMT % y} {FLOAT_FMT % z}\n")
        for i, j, k in mesh.triangles:
            f.write(f"3 {i} {j} {k}\n")


# ---------------------------------------------------------------------------
# generators

# vertices of the icosahedron built on three golden-ratio rectangles
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICOSA_VERTICES = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)
_ICOSA_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def generate_icosphere(center, radius: float, subdivisions: int) -> SurfaceMesh:
    """Icosahedron subdivided `subdivisions` times and projected to the
    sphere of the given center and radius; F = 20 * 4**subdivisions."""
    if radius <= 0:
        raise MeshError("radius must be positive")
    if not 0 <= subdivisions <= MAX_ICOSPHERE_SUBDIVISIONS:
        raise MeshError(f"subdivisions must be in [0, {MAX_ICOSPHERE_SUBDIVISIONS}]")
    center = np.asarray(center, dtype=np.float64)

    verts = [v / np.linalg.norm(v) for v in _ICOSA_VERTICES]
    faces = [tuple(f) for f in _ICOSA_FACES]
    for _ in range(subdivisions):
        midpoint_cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint_cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        new_faces = []
        for i, j, k in faces:
            ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = new_faces

    vertices = center + radius * np.array(verts)
    return orient(_check_topology(SurfaceMesh(vertices, np.array(faces))))


def generate_torus(center, R: float, r: float, nu: int, nv: int) -> SurfaceMesh:
    """Structured torus grid: ring radius R, tube radius r, nu x nv vertices,
    V = nu*nv, F = 2*nu*nv, Euler characteristic 0."""
    if R <= 0 or r <= 0:
        raise MeshError("torus radii must be positive")
    if r >= R:
        raise MeshError("r >= R (self-intersecting torus rejected)")
    if nu < 8 or nv < 8:
        raise MeshError("nu and nv must be at least 8")
    center = np.asarray(center, dtype=np.float64)

    phi = 2.0 * np.pi * np.arange(nu) / nu        # around the ring
    theta = 2.0 * np.pi * np.arange(nv) / nv      # around the tube
    P, T = np.meshgrid(phi, theta, indexing="ij")
    ring = R + r * np.cos(T)
    vertices = np.stack(
        [ring * np.cos(P), ring * np.sin(P), r * np.sin(T)], axis=-1
    ).reshape(-1, 3) + center

    def vid(i, j):
        return (i % nu) * nv + (j % nv)

    faces = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    return orient(_check_topology(SurfaceMesh(vertices, np.array(faces))))
