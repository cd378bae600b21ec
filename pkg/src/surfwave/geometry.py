"""Embedded differential geometry of the surface and the damping layout.

Computes per-vertex normals/areas, the shape operator and principal
curvatures, the observer-visibility partition of the surface, curvature
admissibility of candidate undamped patches, geodesic distance fields, the
C1 cut-off profile, and the damping coefficient field.

Sign convention: the shape operator is B = -dN for the outward Gauss map N,
so the unit sphere with exterior normals has k1 = k2 = H = -1. Admissibility
tests (H <= 0) use this convention throughout.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .mesh import SurfaceMesh


class GeometryError(ValueError):
    """Raised for degenerate geometry or invalid damping layouts."""


# ---------------------------------------------------------------------------
# normals, areas


def vertex_normals_and_areas(mesh: SurfaceMesh):
    """Unit vertex normals and barycentric vertex areas.

    Face normals are averaged with the edge-product weights
    sin(corner angle) / (|e1| |e2|), which reproduce the exact normal for
    vertices on a sphere and stay within the corner-angle weighting family.

    Returns
    -------
    normals : (V, 3) float array, unit rows
    areas : (V,) float array, one third of the incident triangle areas;
        sums to the total surface area.
    """
    tris = mesh.triangles
    p = mesh.vertices[tris]
    face_n = mesh.triangle_normals()
    face_a = mesh.triangle_areas()

    normals = np.zeros((mesh.num_vertices, 3))
    areas = np.zeros(mesh.num_vertices)
    for corner in range(3):
        e1 = p[:, (corner + 1) % 3] - p[:, corner]
        e2 = p[:, (corner + 2) % 3] - p[:, corner]
        w = np.linalg.norm(np.cross(e1, e2), axis=1) / (
            np.einsum("ij,ij->i", e1, e1) * np.einsum("ij,ij->i", e2, e2)
        )
        np.add.at(normals, tris[:, corner], w[:, None] * face_n)
        np.add.at(areas, tris[:, corner], face_a / 3.0)

    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms <= 0.0):
        raise GeometryError("zero-norm vertex normal (degenerate vertex star)")
    return normals / norms[:, None], areas


# ---------------------------------------------------------------------------
# shape operator and curvature


@dataclass
class CurvatureField:
    """Per-vertex shape operator data under the B = -dN convention.

    k1 <= k2 are the principal curvatures, H = (k1 + k2)/2, dir1/dir2 the
    principal directions (unit tangent vectors), norm_B the surface-wide
    sup of max(|k1|, |k2|).
    """

    normal: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    H: np.ndarray
    dir1: np.ndarray
    dir2: np.ndarray
    norm_B: float

    def gap(self) -> np.ndarray:
        """|k1 - k2| per vertex."""
        return np.abs(self.k1 - self.k2)


def _tangent_basis(normals):
    """Orthonormal (t1, t2) spanning each tangent plane."""
    n = normals
    # seed axis: the coordinate direction least aligned with the normal
    seed = np.zeros_like(n)
    seed[np.arange(len(n)), np.argmin(np.abs(n), axis=1)] = 1.0
    t1 = np.cross(n, seed)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n, t1)
    return t1, t2


def shape_operator(mesh: SurfaceMesh, normals) -> CurvatureField:
    """Per-vertex shape operator fit from normal variation over the 1-ring.

    For each incident edge the tangent-plane displacement is matched against
    the normal difference in least squares, giving dN; the returned operator
    is the symmetrized negative, B = -dN. Raises GeometryError when the fit
    is rank deficient at some vertex.
    """
    V = mesh.num_vertices
    t1, t2 = _tangent_basis(normals)

    # both directions of every undirected edge
    ij = np.concatenate([mesh.edges, mesh.edges[:, ::-1]])
    i, j = ij[:, 0], ij[:, 1]
    e = mesh.vertices[j] - mesh.vertices[i]
    dn = normals[j] - normals[i]
    a1 = np.einsum("ij,ij->i", e, t1[i])
    a2 = np.einsum("ij,ij->i", e, t2[i])
    b1 = np.einsum("ij,ij->i", dn, t1[i])
    b2 = np.einsum("ij,ij->i", dn, t2[i])

    AtA = np.zeros((V, 2, 2))
    AtB = np.zeros((V, 2, 2))
    np.add.at(AtA, (i, 0, 0), a1 * a1)
    np.add.at(AtA, (i, 0, 1), a1 * a2)
    np.add.at(AtA, (i, 1, 1), a2 * a2)
    AtA[:, 1, 0] = AtA[:, 0, 1]
    np.add.at(AtB, (i, 0, 0), a1 * b1)
    np.add.at(AtB, (i, 0, 1), a1 * b2)
    np.add.at(AtB, (i, 1, 0), a2 * b1)
    np.add.at(AtB, (i, 1, 1), a2 * b2)

    det = AtA[:, 0, 0] * AtA[:, 1, 1] - AtA[:, 0, 1] ** 2
    scale = (AtA[:, 0, 0] + AtA[:, 1, 1]) ** 2
    if np.any(det <= 1e-12 * scale):
        bad = int(np.argmax(det <= 1e-12 * scale))
        raise GeometryError(f"rank-deficient shape fit at vertex {bad}")

    S = np.swapaxes(np.linalg.solve(AtA, AtB), 1, 2)  # S a = b in the tangent basis
    B = -0.5 * (S + np.swapaxes(S, 1, 2))

    p, q, r = B[:, 0, 0], B[:, 0, 1], B[:, 1, 1]
    mean = 0.5 * (p + r)
    disc = np.sqrt((0.5 * (p - r)) ** 2 + q**2)
    k1 = mean - disc
    k2 = mean + disc

    # eigenvector of the larger eigenvalue; umbilic points get the basis
    w1 = np.stack([q, k2 - p], axis=1)
    w2 = np.stack([k2 - r, q], axis=1)
    pick = np.linalg.norm(w1, axis=1) >= np.linalg.norm(w2, axis=1)
    w = np.where(pick[:, None], w1, w2)
    wnorm = np.linalg.norm(w, axis=1)
    umbilic = wnorm <= 1e-14 * (1.0 + np.abs(k2))
    w[umbilic] = (1.0, 0.0)
    w /= np.linalg.norm(w, axis=1)[:, None]

    dir2 = w[:, 0, None] * t1 + w[:, 1, None] * t2
    dir1 = np.cross(normals, dir2)
    return CurvatureField(
        normal=np.array(normals),
        k1=k1,
        k2=k2,
        H=0.5 * (k1 + k2),
        dir1=dir1,
        dir2=dir2,
        norm_B=float(np.maximum(np.abs(k1), np.abs(k2)).max()),
    )


# ---------------------------------------------------------------------------
# visibility partition


@dataclass
class RegionDecomposition:
    """Observer-based partition of the surface and the damped region.

    in_M1 marks vertices with m . nu > 0 for m(x) = x - x0 ("visible" side);
    M0 is the complement. `patches` (undamped candidate regions inside M0)
    and `mstar` (the damped region) start unset and are filled by patch
    selection and build_damping.
    """

    x0: np.ndarray
    in_M1: np.ndarray
    m_field: np.ndarray
    mT_field: np.ndarray
    m_dot_nu: np.ndarray
    R_max: float
    patches: list = field(default=None)
    mstar: np.ndarray = None

    @property
    def in_M0(self) -> np.ndarray:
        return ~self.in_M1


def classify_visibility(mesh: SurfaceMesh, normals, x0) -> RegionDecomposition:
    """Split vertices into M1 (m . nu > 0) and M0, with the field m = x - x0,
    its tangential part, and R = max |m|."""
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise GeometryError("observer x0 must be finite")
    m = mesh.vertices - x0
    mdn = np.einsum("ij,ij->i", m, normals)
    mT = m - mdn[:, None] * normals
    return RegionDecomposition(
        x0=x0,
        in_M1=mdn > 0.0,
        m_field=m,
        mT_field=mT,
        m_dot_nu=mdn,
        R_max=float(np.linalg.norm(m, axis=1).max()),
    )


def m0_patches(mesh: SurfaceMesh, decomp: RegionDecomposition, seeds=None) -> list:
    """Connected components of M0 as candidate undamped patches.

    With `seeds` (vertex indices) only the components containing a seed are
    returned; seeds must lie in M0. Without seeds every component of M0 is a
    patch ("all of M0").
    """
    in_m0 = decomp.in_M0
    nbrs = mesh.vertex_neighbors()
    comp = -np.ones(mesh.num_vertices, dtype=np.int64)
    n_comp = 0
    for start in np.flatnonzero(in_m0):
        if comp[start] >= 0:
            continue
        stack = [int(start)]
        comp[start] = n_comp
        while stack:
            v = stack.pop()
            for w in nbrs[v]:
                if in_m0[w] and comp[w] < 0:
                    comp[w] = n_comp
                    stack.append(w)
        n_comp += 1
    if seeds is None:
        keep = range(n_comp)
    else:
        keep = []
        for s in seeds:
            if not in_m0[s]:
                raise GeometryError(f"patch seed {s} is not in M0")
            c = int(comp[s])
            if c not in keep:
                keep.append(c)
    return [np.flatnonzero(comp == c) for c in keep]


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    H_max: float
    gap_max: float
    admissible: bool
    tol_H: float
    eps_umb: float


def check_admissible_patch(
    curv: CurvatureField, patch, eps_umb: float, tol_H=None
) -> AdmissibilityReport:
    """Test a vertex set for H <= 0 (within tol_H slack for discrete noise)
    and the eps-umbilicity bound |k1 - k2| < eps_umb."""
    patch = np.asarray(patch)
    if patch.size == 0:
        raise GeometryError("admissibility check on empty patch")
    if tol_H is None:
        tol_H = 1e-6 * curv.norm_B
    H_max = float(curv.H[patch].max())
    gap_max = float(curv.gap()[patch].max())
    return AdmissibilityReport(
        H_max=H_max,
        gap_max=gap_max,
        admissible=(H_max <= tol_H) and (gap_max < eps_umb),
        tol_H=float(tol_H),
        eps_umb=float(eps_umb),
    )


# ---------------------------------------------------------------------------
# distances and cut-off


def geodesic_distance(mesh: SurfaceMesh, source) -> np.ndarray:
    """Multi-source Dijkstra distance on the edge graph (an upper bound on
    the true geodesic distance); exactly 0 on the source set."""
    source = np.asarray(source)
    if source.dtype == bool:
        source = np.flatnonzero(source)
    if source.size == 0:
        raise GeometryError("geodesic source set is empty")
    nbrs = mesh.vertex_neighbors()
    lengths = mesh.edge_lengths()
    wadj = [[] for _ in range(mesh.num_vertices)]
    for (a, b), l in zip(mesh.edges, lengths):
        wadj[a].append((int(b), float(l)))
        wadj[b].append((int(a), float(l)))

    dist = np.full(mesh.num_vertices, np.inf)
    heap = []
    for s in source:
        dist[s] = 0.0
        heap.append((0.0, int(s)))
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for w, l in wadj[v]:
            nd = d + l
            if nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def cutoff_profile(x):
    """The C1 transition profile: 1 for x <= 0, a cubic on (0, 1/2) matching
    value/slope, (x - 1)^2 on [1/2, 1], 0 beyond 1. Nonincreasing."""
    x = np.asarray(x, dtype=np.float64)
    t = 2.0 * x
    cubic = t**3 - 1.75 * t**2 + 1.0
    quad = (x - 1.0) ** 2
    out = np.where(x <= 0.0, 1.0, np.where(x < 0.5, cubic, np.where(x <= 1.0, quad, 0.0)))
    return out if out.ndim else float(out)


def cutoff_profile_derivative(x):
    x = np.asarray(x, dtype=np.float64)
    t = 2.0 * x
    dcubic = 6.0 * t**2 - 7.0 * t
    dquad = 2.0 * (x - 1.0)
    out = np.where(x <= 0.0, 0.0, np.where(x < 0.5, dcubic, np.where(x <= 1.0, dquad, 0.0)))
    return out if out.ndim else float(out)


def cutoff_profile_bound(n: int = 100001) -> float:
    """max |profile'|^2 / profile over a dense grid of (0, 1); >= 4 since the
    quadratic branch gives exactly 4."""
    x = np.linspace(0.0, 1.0, n)[1:-1]
    eta = cutoff_profile(x)
    deta = cutoff_profile_derivative(x)
    mask = eta > 0.0
    return float((deta[mask] ** 2 / eta[mask]).max())


def build_cutoff(mesh: SurfaceMesh, m2, eps_tube: float, distance=None):
    """Per-vertex cut-off eta = profile(d(., M2)/eps_tube).

    eta is 1 on M2, 0 outside the eps_tube-neighborhood, in [0, 1] between.
    Returns (eta, M_bound) where M_bound makes the discrete gradient bound
    |grad eta|^2 / eta <= M_bound / eps_tube^2 hold per face (face-min eta,
    faces with positive minimum), combined with the 1-D profile bound.

    Requires eps_tube > 2 * max edge length so the transition is resolved.
    """
    from .operators import tangential_gradient

    max_edge = float(mesh.edge_lengths().max())
    if eps_tube <= 2.0 * max_edge:
        raise GeometryError(
            f"eps_tube {eps_tube} must exceed twice the max edge length {max_edge}"
        )
    if distance is None:
        distance = geodesic_distance(mesh, m2)
    eta = cutoff_profile(distance / eps_tube)

    grad = tangential_gradient(mesh, eta)
    grad_sq = np.einsum("ij,ij->i", grad, grad)
    face_min = eta[mesh.triangles].min(axis=1)
    pos = face_min > 0.0
    discrete = float((grad_sq[pos] / face_min[pos]).max() * eps_tube**2) if pos.any() else 0.0
    return eta, max(cutoff_profile_bound(), discrete)


# ---------------------------------------------------------------------------
# damping


@dataclass
class DampingProfile:
    """Damping coefficient a(x) with its cut-off and bound bookkeeping.

    a equals a_max on the closed eps_tube-neighborhood of M2 (that
    neighborhood is the damped region M*) and rolls off to 0 across a second
    eps_tube collar strictly inside the undamped patches.
    """

    a: np.ndarray
    a0: float
    a_inf: float
    eta: np.ndarray
    eps_tube: float
    M_bound: float


def build_damping(
    mesh: SurfaceMesh,
    decomp: RegionDecomposition,
    curv: CurvatureField,
    a0: float,
    eps_tube: float,
    a_max=None,
    eps_umb=None,
    tol_H=None,
    waive_admissibility: bool = False,
) -> DampingProfile:
    """Construct a(x) for the selected patches (decomp.patches).

    a(v) = a_max * profile(max(0, d(v, M2) - eps_tube) / eps_tube) with
    M2 the complement of the patch union, so a >= a0 holds on the damped
    region M* = {d <= eps_tube} (stored into decomp.mstar) and the double
    collar {d < 2 eps_tube} must fit inside the patch union.

    Each patch must pass check_admissible_patch unless waive_admissibility.
    """
    if a0 <= 0:
        raise GeometryError("a0 must be positive")
    if a_max is None:
        a_max = a0
    if a_max < a0:
        raise GeometryError("a_max must be at least a0")
    if decomp.patches is None:
        raise GeometryError("patches not selected (use [] for full damping)")

    patches = [np.asarray(p) for p in decomp.patches]
    if patches and not waive_admissibility:
        if eps_umb is None:
            raise GeometryError("eps_umb required to test patch admissibility")
        for idx, patch in enumerate(patches):
            report = check_admissible_patch(curv, patch, eps_umb, tol_H=tol_H)
            if not report.admissible:
                raise GeometryError(
                    f"patch {idx} not admissible: H_max={report.H_max:.6g}, "
                    f"gap_max={report.gap_max:.6g}"
                )

    m2 = np.ones(mesh.num_vertices, dtype=bool)
    for patch in patches:
        m2[patch] = False
    if not m2.any():
        raise GeometryError("patches cover the whole surface; nothing to damp")

    d = geodesic_distance(mesh, m2)
    eta, M_bound = build_cutoff(mesh, m2, eps_tube, distance=d)
    if patches:
        interior_depth = float(d[~m2].max())
        if interior_depth < 2.0 * eps_tube:
            raise GeometryError(
                "double collar does not fit inside the patch union: "
                f"max depth {interior_depth:.6g} < 2*eps_tube {2 * eps_tube:.6g}"
            )
    decomp.mstar = d <= eps_tube
    a = a_max * cutoff_profile(np.maximum(0.0, d - eps_tube) / eps_tube)
    return DampingProfile(
        a=a,
        a0=float(a0),
        a_inf=float(a.max()),
        eta=eta,
        eps_tube=float(eps_tube),
        M_bound=float(M_bound),
    )


# ---------------------------------------------------------------------------
# export


def export_fields_csv(path, curv: CurvatureField, decomp: RegionDecomposition, damp=None):
    """Write the per-vertex region/curvature fields (and damping when given)
    as CSV: vertex_id, k1, k2, H, in_M1, eta, a."""
    from .fileio import write_csv

    n = len(curv.k1)
    eta = damp.eta if damp is not None else np.ones(n)
    a = damp.a if damp is not None else np.zeros(n)
    write_csv(
        path,
        ["vertex_id", "k1", "k2", "H", "in_M1", "eta", "a"],
        [np.arange(n), curv.k1, curv.k2, curv.H, decomp.in_M1.astype(int), eta, a],
    )
