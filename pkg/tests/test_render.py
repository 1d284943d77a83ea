import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raster_oracle import oracle_coverage, random_mesh
from thermoface.posmap import FaceMesh, rotate_yaw
from thermoface.render import RenderError, rasterize, render_depth, render_mesh


def flat(verts, tris, z=0.0):
    v = np.array(verts, dtype=float)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.full(len(v), z)])
    return FaceMesh(v, tris)


def check_against_oracle(mesh, w, h):
    buf = rasterize(mesh, w, h)
    cover = oracle_coverage(mesh, w, h)
    for y in range(h):
        for x in range(w):
            if cover[y][x]:
                assert buf.triangle[y, x] in cover[y][x], (x, y)
            else:
                assert buf.triangle[y, x] == -1, (x, y)
    return buf, cover


def test_axis_aligned_triangle_exact_pixels():
    mesh = flat([[1, 1], [5, 1], [1, 5]], [[0, 1, 2]])
    buf, _ = check_against_oracle(mesh, 8, 8)
    lit = {(x, y) for y in range(8) for x in range(8) if buf.covered[y, x]}
    # Hypotenuse x + y = 6 is a right edge: excluded; top and left edges included.
    assert lit == {(x, y) for x in range(1, 6) for y in range(1, 6) if x + y < 6}


def test_shared_edge_drawn_once():
    mesh = flat([[0, 0], [6, 0], [0, 6], [6, 6]], [[0, 1, 2], [1, 3, 2]])
    buf, cover = check_against_oracle(mesh, 8, 8)
    assert all(len(cover[y][x]) <= 1 for y in range(8) for x in range(8))
    assert buf.covered.sum() == 36


def test_winding_does_not_matter():
    a = flat([[1, 1], [6, 2], [2, 7]], [[0, 1, 2]])
    b = flat([[1, 1], [6, 2], [2, 7]], [[0, 2, 1]])
    assert np.array_equal(rasterize(a, 9, 9).covered, rasterize(b, 9, 9).covered)


def test_nearer_triangle_wins():
    v = [[0, 0, 1], [8, 0, 1], [0, 8, 1], [0, 0, 3], [8, 0, 3], [0, 8, 3]]
    mesh = FaceMesh(v, [[3, 4, 5], [0, 1, 2]])
    buf = rasterize(mesh, 8, 8)
    assert (buf.triangle[buf.covered] == 0).all()
    assert np.allclose(buf.depth[buf.covered], 3.0)


def test_empty_mesh_is_black():
    mesh = FaceMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
    assert not render_mesh(mesh, 5, 4).data.any()
    assert not render_depth(mesh, 5, 4).data.any()


def test_zero_size_rejected():
    with pytest.raises(RenderError):
        render_mesh(flat([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]]), 0, 4)
    with pytest.raises(RenderError):
        render_depth(flat([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]]), 4, 0)


def test_shaded_flat_facing_camera_is_one():
    img = render_mesh(flat([[0, 0], [7, 0], [0, 7]], [[0, 1, 2]]), 8, 8)
    assert img.channels == 1
    assert set(np.unique(img.data)) == {0.0, 1.0}


def test_shaded_lambert_value():
    # Plane z = x tilted 45 degrees: |n . (0,0,1)| = cos 45.
    mesh = FaceMesh([[0, 0, 0], [6, 0, 6], [0, 6, 0]], [[0, 1, 2]])
    img = render_mesh(mesh, 8, 8).data[0]
    assert np.allclose(img[img > 0], np.sqrt(0.5))


def test_textured_interpolates_colours():
    mesh = FaceMesh([[0, 0, 0], [8, 0, 0], [0, 8, 0]], [[0, 1, 2]], colors=[[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    img = render_mesh(mesh, 9, 9, "textured").data
    assert np.allclose(img[:, 0, 0], [1, 0, 0])
    assert np.allclose(img[:, 0, 4], [0.5, 0.5, 0])
    assert np.allclose(img[:, 2, 2], [0.5, 0.25, 0.25])
    with pytest.raises(RenderError):
        render_mesh(flat([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]]), 3, 3, "textured")


def test_depth_flat_is_one():
    img = render_depth(flat([[0, 0], [5, 0], [0, 5]], [[0, 1, 2]], z=7.0), 6, 6).data[0]
    assert set(np.unique(img)) == {0.0, 1.0}


def test_depth_two_patches():
    v = [[0, 0, 1], [3, 0, 1], [0, 3, 1], [5, 0, 3], [9, 0, 3], [5, 4, 3]]
    mesh = FaceMesh(v, [[0, 1, 2], [3, 4, 5]])
    img = render_depth(mesh, 10, 5).data[0]
    assert img[0, 0] == 0.0 and img[0, 6] == 1.0


def test_coverage_matches_oracle_on_random_meshes(rng):
    for _ in range(60):
        ntri = int(rng.integers(1, 11))
        size = int(rng.integers(4, 33))
        mesh = random_mesh(rng, ntri, size, integer=bool(rng.random() < 0.7))
        buf, cover = check_against_oracle(mesh, size, size)


def test_coverage_matches_oracle_on_grid_meshes(rng):
    # Grid cells share edges and vertices, the hardest case for tie breaking.
    xs = np.arange(4) * 3.0
    yy, xx = np.meshgrid(xs, xs, indexing="ij")
    v = np.column_stack([xx.ravel(), yy.ravel(), rng.random(16)])
    tris = []
    for r in range(2):
        for c in range(2):
            a = r * 4 + c
            tris += [[a, a + 1, a + 4], [a + 1, a + 5, a + 4]]
    mesh = FaceMesh(v, tris[:10])
    _, cover = check_against_oracle(mesh, 12, 12)


def test_depth_invariant_under_z_translation(rng):
    mesh = random_mesh(rng, 8, 24)
    moved = FaceMesh(mesh.vertices + [0, 0, 123.25], mesh.triangles)
    a, b = render_depth(mesh, 24, 24).data, render_depth(moved, 24, 24).data
    assert np.array_equal(a > 0, b > 0)
    assert np.abs(a - b).max() < 1e-12


def test_depth_monotone_in_vertex_z():
    base = FaceMesh([[0, 0, 0], [10, 0, 2], [0, 10, 1], [10, 10, 4]], [[0, 1, 2], [1, 3, 2]])
    img0 = render_depth(base, 11, 11).data[0]
    raised = FaceMesh(base.vertices + np.array([[0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 1.5]]), base.triangles)
    img1 = render_depth(raised, 11, 11).data[0]
    # Normalised values are relative to the range, so check raw depth everywhere
    # and the normalised value at the raised corner.
    raw0, raw1 = rasterize(base, 11, 11).depth, rasterize(raised, 11, 11).depth
    assert (raw1[np.isfinite(raw0)] >= raw0[np.isfinite(raw0)]).all()
    assert img1[10, 10] >= img0[10, 10]


def test_yaw_zero_render_identical(rng):
    mesh = random_mesh(rng, 10, 32)
    colored = FaceMesh(mesh.vertices, mesh.triangles, rng.random((len(mesh.vertices), 3)))
    for mode in ("shaded", "textured"):
        assert np.array_equal(
            render_mesh(rotate_yaw(colored, 0.0), 32, 32, mode).data, render_mesh(colored, 32, 32, mode).data
        )


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), ntri=st.integers(1, 10), size=st.integers(2, 64))
def test_coverage_property(seed, ntri, size):
    check_against_oracle(random_mesh(np.random.default_rng(seed), ntri, size), size, size)
