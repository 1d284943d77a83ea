"""Reference coverage for the rasterizer: an exact per-pixel point-in-triangle test."""

import numpy as np

from thermoface.posmap import FaceMesh


def lex_positive(*terms):
    for t in terms:
        if t != 0:
            return t > 0
    return False


def oracle_coverage(mesh, w, h):
    """Per-pixel point-in-triangle test with ties broken by a symbolic nudge.

    A pixel centre p counts as inside when p + (e, e^2) is strictly inside
    for infinitesimal e > 0. That reproduces the top-left convention: points
    on left edges and on horizontal top edges belong to the triangle.
    Returns, per pixel, the set of covering triangle indices.
    """
    cover = [[set() for _ in range(w)] for _ in range(h)]
    v = mesh.vertices
    for t, tri in enumerate(mesh.triangles):
        a, b, c = (v[i][:2] for i in tri)
        area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area == 0:
            continue
        if area < 0:
            b, c = c, b
        for py in range(h):
            for px in range(w):
                ok = True
                for p, q in ((a, b), (b, c), (c, a)):
                    e0 = (q[0] - p[0]) * (py - p[1]) - (q[1] - p[1]) * (px - p[0])
                    # d/de of the edge function along the nudge (1, e).
                    e1 = -(q[1] - p[1])
                    e2 = q[0] - p[0]
                    ok &= lex_positive(e0, e1, e2)
                if ok:
                    cover[py][px].add(t)
    return cover


def random_mesh(rng, ntri, size, integer=True):
    """``ntri`` independent triangles around a ``size``-pixel canvas.

    Integer and half-integer vertices put pixel centres exactly on edges
    and corners, which is where tie-breaking matters.
    """
    nv = 3 * ntri
    if integer:
        xy = rng.integers(-2, size + 2, size=(nv, 2)).astype(float)
        if rng.random() < 0.5:
            xy += 0.5 * rng.integers(0, 2, size=xy.shape)
    else:
        xy = rng.random((nv, 2)) * size
    z = rng.random(nv) * 10
    return FaceMesh(np.column_stack([xy, z]), np.arange(nv).reshape(-1, 3))


def coverage_mismatches(mesh, buf, width, height):
    """Pixels where ``buf`` disagrees with the oracle (wrong owner or wrong coverage)."""
    cover = oracle_coverage(mesh, width, height)
    bad = []
    for y in range(height):
        for x in range(width):
            t = buf.triangle[y, x]
            if (cover[y][x] and t not in cover[y][x]) or (not cover[y][x] and t != -1):
                bad.append((x, y))
    return bad
