"""Orthographic z-buffer rasterizer for face meshes.

Pixel ``(col, row)`` is sampled at the point ``(col, row)``, the same
convention the position maps use. The projection drops ``z``; the z-buffer
keeps the largest ``z`` (nearest surface). Edges follow the top-left fill
rule, so a pixel on an edge shared by two triangles is drawn exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Image
from .posmap import FaceMesh

LIGHT = np.array([0.0, 0.0, 1.0])


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RasterBuffers:
    """Per-pixel results of rasterization.

    ``triangle`` is -1 where nothing was drawn; ``bary`` holds the barycentric
    weights of the winning triangle's three vertices.
    """

    depth: np.ndarray
    triangle: np.ndarray
    bary: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.triangle >= 0


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(ax, ay, bx, by) -> bool:
    # For the positive winding used here, top edges run in +x at constant y
    # and left edges run upwards (decreasing y).
    return (ay == by and bx > ax) or by < ay


def rasterize(mesh: FaceMesh, out_w: int, out_h: int) -> RasterBuffers:
    if out_w <= 0 or out_h <= 0:
        raise RenderError(f"output size must be positive, got {out_w}x{out_h}")
    depth = np.full((out_h, out_w), -np.inf)
    tri_id = np.full((out_h, out_w), -1, dtype=np.int64)
    bary = np.zeros((3, out_h, out_w))
    v = mesh.vertices
    for t, (i0, i1, i2) in enumerate(mesh.triangles):
        p = [v[i0], v[i1], v[i2]]
        order = [0, 1, 2]
        area = _edge(p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1])
        if area == 0:
            continue
        if area < 0:
            order = [0, 2, 1]
            area = -area
        q = [p[k] for k in order]
        xs = [q[0][0], q[1][0], q[2][0]]
        ys = [q[0][1], q[1][1], q[2][1]]
        x0 = max(int(np.ceil(min(xs))), 0)
        x1 = min(int(np.floor(max(xs))), out_w - 1)
        y0 = max(int(np.ceil(min(ys))), 0)
        y1 = min(int(np.floor(max(ys))), out_h - 1)
        if x0 > x1 or y0 > y1:
            continue
        py, px = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
        inside = np.ones(px.shape, dtype=bool)
        ws = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            w = _edge(xs[a], ys[a], xs[b], ys[b], px, py)
            if _is_top_left(xs[a], ys[a], xs[b], ys[b]):
                inside &= w >= 0
            else:
                inside &= w > 0
            ws.append(w / area)
        if not inside.any():
            continue
        zs = [q[0][2], q[1][2], q[2][2]]
        z = ws[0] * zs[0] + ws[1] * zs[1] + ws[2] * zs[2]
        region = depth[y0:y1 + 1, x0:x1 + 1]
        win = inside & (z > region)
        region[win] = z[win]
        tri_id[y0:y1 + 1, x0:x1 + 1][win] = t
        for k in range(3):
            bary[order[k], y0:y1 + 1, x0:x1 + 1][win] = ws[k][win]
    return RasterBuffers(depth, tri_id, bary)


def _normals(mesh: FaceMesh) -> np.ndarray:
    v = mesh.vertices
    t = mesh.triangles
    n = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(length > 0, length, 1.0)


def render_mesh(mesh: FaceMesh, out_w: int, out_h: int, mode: str = "shaded") -> Image:
    """Render ``mesh`` on a black canvas.

    ``shaded`` gives one channel of two-sided Lambertian shading from a light
    along +z; ``textured`` interpolates the vertex colours.
    """
    if mode not in ("shaded", "textured"):
        raise RenderError(f"unknown render mode {mode!r}")
    if mode == "textured" and mesh.colors is None:
        raise RenderError("textured rendering needs vertex colours")
    buf = rasterize(mesh, out_w, out_h)
    cov = buf.covered
    if mode == "shaded":
        out = np.zeros((1, out_h, out_w))
        if len(mesh.triangles):
            lambert = np.abs(_normals(mesh) @ LIGHT)
            out[0][cov] = lambert[buf.triangle[cov]]
        return Image(out)
    out = np.zeros((3, out_h, out_w))
    if cov.any():
        tris = mesh.triangles[buf.triangle[cov]]
        w = buf.bary[:, cov]
        col = sum(w[k][:, None] * mesh.colors[tris[:, k]] for k in range(3))
        out[:, cov] = np.clip(col.T, 0.0, 1.0)
    return Image(out)


def render_depth(mesh: FaceMesh, out_w: int, out_h: int) -> Image:
    """Nearest-surface depth, min-max normalised over covered pixels.

    Nearer surfaces are brighter; the background is 0. A mesh with a single
    depth value renders as 1.0 wherever it covers.
    """
    buf = rasterize(mesh, out_w, out_h)
    cov = buf.covered
    out = np.zeros((out_h, out_w))
    if cov.any():
        z = buf.depth[cov]
        lo, hi = z.min(), z.max()
        out[cov] = (z - lo) / (hi - lo) if hi > lo else 1.0
    return Image(out[None])
