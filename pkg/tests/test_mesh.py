import numpy as np
import pytest

from surfwave import mesh
from surfwave.mesh import MeshError

from conftest import klein_bottle


def test_icosahedron_counts():
    ico = mesh.generate_icosphere((0, 0, 0), 1.0, 0)
    assert (ico.num_vertices, ico.num_edges, ico.num_faces) == (12, 30, 20)
    assert ico.euler_characteristic == 2


def test_off_icosahedron_roundtrip(tmp_path):
    ico = mesh.generate_icosphere((0.3, -0.2, 1.7), 0.9, 0)
    path = tmp_path / "ico.off"
    mesh.save_off(ico, path)
    loaded = mesh.load_mesh(path)
    assert (loaded.num_vertices, loaded.num_edges, loaded.num_faces) == (12, 30, 20)
    assert np.array_equal(loaded.vertices, ico.vertices)  # bit-exact
    assert np.array_equal(loaded.triangles, ico.triangles)


def test_off_torus_grid(tmp_path):
    torus = mesh.generate_torus((0, 0, 0), 2.0, 1.0, 16, 16)
    path = tmp_path / "torus.off"
    mesh.save_off(torus, path)
    loaded = mesh.load_mesh(path)
    assert loaded.euler_characteristic == 0


def test_obj_open_surface_rejected(tmp_path):
    path = tmp_path / "open.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(MeshError, match="open surface"):
        mesh.load_mesh(path)


def test_obj_loader_roundtrip(tmp_path):
    ico = mesh.generate_icosphere((0, 0, 0), 1.0, 1)
    lines = [f"v {x} {y} {z}" for x, y, z in ico.vertices]
    lines += [f"f {i+1} {j+1} {k+1}" for i, j, k in ico.triangles]
    path = tmp_path / "s.obj"
    path.write_text("\n".join(lines) + "\n")
    loaded = mesh.load_mesh(path)
    assert loaded.num_vertices == 42
    assert loaded.is_closed() and loaded.is_oriented()


@pytest.mark.parametrize(
    "content,match",
    [
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n", "texture/normal"),
        ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n", "negative"),
        ("vn 0 0 1\nv 0 0 0\n", "unsupported OBJ keyword"),
    ],
)
def test_obj_rejects_unsupported(tmp_path, content, match):
    path = tmp_path / "bad.obj"
    path.write_text(content)
    with pytest.raises(MeshError, match=match):
        mesh.load_mesh(path)


def test_off_parse_errors(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("NOT-OFF\n")
    with pytest.raises(MeshError, match="OFF header"):
        mesh.load_mesh(path)
    path.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n4 0 1 2 0\n")
    with pytest.raises(MeshError, match="3 i j k"):
        mesh.load_mesh(path)


def test_non_manifold_edge_rejected(tmp_path):
    content = (
        "OFF\n5 3 0\n"
        "0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n"
        "3 0 1 2\n3 0 1 3\n3 0 1 4\n"
    )
    path = tmp_path / "nm.off"
    path.write_text(content)
    with pytest.raises(MeshError, match="non-manifold"):
        mesh.load_mesh(path)


def test_degenerate_triangle_rejected(tmp_path):
    # collapse one icosahedron vertex onto another: still combinatorially
    # closed, but the triangles along the shared edge have zero area
    ico = mesh.generate_icosphere((0, 0, 0), 1.0, 0)
    verts = np.array(ico.vertices)
    nbr = int(ico.edges[np.argmax(ico.edges[:, 0] == 0), 1])
    verts[nbr] = verts[0]
    path = tmp_path / "deg.off"
    mesh.save_off(mesh.SurfaceMesh(verts, ico.triangles), path)
    with pytest.raises(MeshError, match="degenerate"):
        mesh.load_mesh(path)


def test_generate_icosphere_counts_and_area():
    s0 = mesh.generate_icosphere((0, 0, 0), 1.0, 0)
    assert (s0.num_vertices, s0.num_faces) == (12, 20)
    s2 = mesh.generate_icosphere((0, 0, 0), 1.0, 2)
    assert s2.num_faces == 320
    s3 = mesh.generate_icosphere((0, 0, 0), 2.0, 3)
    area = s3.triangle_areas().sum()
    assert abs(area - 16 * np.pi) / (16 * np.pi) < 0.01
    radii = np.linalg.norm(s3.vertices, axis=1)
    assert np.abs(radii - 2.0).max() < 1e-12 * 2.0


def test_icosphere_guards():
    with pytest.raises(MeshError, match="subdivisions"):
        mesh.generate_icosphere((0, 0, 0), 1.0, 9)
    with pytest.raises(MeshError, match="radius"):
        mesh.generate_icosphere((0, 0, 0), -1.0, 1)


def test_generate_torus_counts_and_area():
    t = mesh.generate_torus((0, 0, 0), 2.0, 1.0, 32, 32)
    assert (t.num_vertices, t.num_faces) == (1024, 2048)
    assert t.euler_characteristic == 0
    t2 = mesh.generate_torus((0, 0, 0), 2.0, 1.0, 64, 64)
    area = t2.triangle_areas().sum()
    assert abs(area - 8 * np.pi**2) / (8 * np.pi**2) < 0.01


def test_torus_guards():
    with pytest.raises(MeshError, match="r >= R"):
        mesh.generate_torus((0, 0, 0), 1.0, 1.0, 16, 16)
    with pytest.raises(MeshError, match="at least 8"):
        mesh.generate_torus((0, 0, 0), 2.0, 1.0, 4, 16)


def test_validate_reports():
    s1 = mesh.generate_icosphere((0, 0, 0), 1.0, 1)
    rep = mesh.validate_closed_manifold(s1)
    assert (rep.V, rep.E, rep.F, rep.chi) == (42, 120, 80, 2)
    assert rep.is_closed and rep.is_oriented and rep.ok()

    t = mesh.generate_torus((0, 0, 0), 2.0, 1.0, 16, 16)
    rep_t = mesh.validate_closed_manifold(t)
    assert rep_t.chi == 0 and rep_t.is_closed

    holed = mesh.SurfaceMesh(s1.vertices, s1.triangles[:-1])
    assert not mesh.validate_closed_manifold(holed).is_closed


@pytest.mark.parametrize("make", [
    lambda: mesh.generate_icosphere((0, 0, 0), 1.0, 2),
    lambda: mesh.generate_torus((0, 0, 0), 2.0, 0.5, 12, 9),
    lambda: mesh.generate_icosphere((1, 2, 3), 0.5, 3),
])
def test_generators_always_closed_oriented(make):
    rep = mesh.validate_closed_manifold(make())
    assert rep.is_closed and rep.is_oriented
    assert rep.min_area_ratio > mesh.DEGENERATE_AREA_RATIO


def test_icosphere_area_refinement_monotone():
    target = 4 * np.pi
    areas = [mesh.generate_icosphere((0, 0, 0), 1.0, s).triangle_areas().sum()
             for s in range(5)]
    assert np.all(np.diff(areas) > 0)  # nondecreasing toward 4 pi
    deficits = [target - a for a in areas]
    ratios = [deficits[i] / deficits[i + 1] for i in range(4)]
    for r in ratios:
        assert 3.0 < r < 5.0  # successive deficits shrink by about 4


def test_orientation_repair_flipped_faces():
    s1 = mesh.generate_icosphere((0, 0, 0), 1.0, 1)
    tris = np.array(s1.triangles)
    rng = np.random.default_rng(7)
    flip = rng.random(len(tris)) < 0.5
    tris[flip] = tris[flip][:, ::-1]
    scrambled = mesh.SurfaceMesh(s1.vertices, tris)
    assert not scrambled.is_oriented()
    repaired = mesh.orient(scrambled)
    assert repaired.is_oriented()
    assert repaired.signed_volume() > 0
    assert np.array_equal(repaired.vertices, s1.vertices)  # vertex order kept


def test_orientation_global_flip():
    s1 = mesh.generate_icosphere((0, 0, 0), 1.0, 1)
    inward = mesh.SurfaceMesh(s1.vertices, s1.triangles[:, ::-1])
    assert inward.signed_volume() < 0
    fixed = mesh.orient(inward)
    assert fixed.signed_volume() > 0


def test_orientation_per_component(tmp_path):
    # two spheres, one saved inside out: both must come back outward
    a = mesh.generate_icosphere((0, 0, 0), 1.0, 1)
    b = mesh.generate_icosphere((5, 0, 0), 1.0, 1)
    verts = np.vstack([a.vertices, b.vertices])
    tris = np.vstack([a.triangles, b.triangles[:, ::-1] + a.num_vertices])
    path = tmp_path / "two.off"
    mesh.save_off(mesh.SurfaceMesh(verts, tris), path)
    loaded = mesh.load_mesh(path)
    assert loaded.is_oriented()
    half = a.num_faces
    first = mesh.SurfaceMesh(loaded.vertices, loaded.triangles[:half])
    second = mesh.SurfaceMesh(loaded.vertices, loaded.triangles[half:])
    assert first.signed_volume() > 0
    assert second.signed_volume() > 0


def test_klein_bottle_not_orientable():
    kb = klein_bottle()
    assert kb.is_closed()  # every edge in exactly 2 faces
    with pytest.raises(MeshError, match="not repairable"):
        mesh.orient(kb)
