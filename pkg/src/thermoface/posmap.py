"""UV position maps, face meshes, Wavefront OBJ and yaw poses.

A position map stores, for every UV texel, the 3-D face point it corresponds
to: ``x, y`` in source-image pixels (pixel centres at integer coordinates,
``y`` pointing down) and ``z`` in the same unit, larger meaning closer to
the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .image import Image

DEFAULT_RESOLUTION = 256
DEFAULT_POSES = (-30.0, -15.0, 0.0, 15.0, 30.0)


class MeshError(ValueError):
    pass


class ObjParseError(MeshError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class PositionMap:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise MeshError(f"position map must be (H, W, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MeshError("position map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True)
class WeightMask:
    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise MeshError(f"weight mask must be 2-D, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise MeshError("weight mask must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if t.size and np.any((t[:, 0] == t[:, 1]) & (t[:, 1] == t[:, 2])):
            raise MeshError("degenerate triangle with three identical indices")
        c = None
        if self.colors is not None:
            c = np.array(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(c) != len(v):
                raise MeshError("need one colour per vertex")
        for a in (v, t, c):
            if a is not None:
                a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "colors", c)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


@dataclass(frozen=True)
class Pose:
    yaw: float

    def __post_init__(self):
        if not -90.0 <= self.yaw <= 90.0:
            raise MeshError(f"yaw {self.yaw} outside [-90, 90]")


def mesh_from_posmap(pm: PositionMap, mask: WeightMask, threshold: float = 0.0) -> FaceMesh:
    """Mesh over the texels whose mask weight exceeds ``threshold``.

    Each UV cell with four valid corners contributes two triangles; vertices
    are numbered in row-major texel order.
    """
    if pm.resolution != mask.resolution:
        raise MeshError(f"position map {pm.resolution} and mask {mask.resolution} differ")
    valid = mask.data > threshold
    if not valid.any():
        raise MeshError("no texel passes the mask threshold; mesh would be empty")
    index = np.full(valid.shape, -1, dtype=np.int64)
    index[valid] = np.arange(int(valid.sum()))
    a, b = index[:-1, :-1], index[:-1, 1:]
    c, d = index[1:, :-1], index[1:, 1:]
    cell = (a >= 0) & (b >= 0) & (c >= 0) & (d >= 0)
    upper = np.stack([a[cell], b[cell], c[cell]], axis=1)
    lower = np.stack([b[cell], d[cell], c[cell]], axis=1)
    tris = np.stack([upper, lower], axis=1).reshape(-1, 3)
    return FaceMesh(pm.data[valid], tris)


def sample_bilinear(img: Image, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear samples at pixel coordinates, clamped to the image; ``(N, C)``."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0, img.width - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0, img.height - 1)
    x0 = np.minimum(np.floor(x).astype(int), img.width - 1)
    y0 = np.minimum(np.floor(y).astype(int), img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx, fy = x - x0, y - y0
    d = img.data
    top = d[:, y0, x0] * (1 - fx) + d[:, y0, x1] * fx
    bottom = d[:, y1, x0] * (1 - fx) + d[:, y1, x1] * fx
    return (top * (1 - fy) + bottom * fy).T


def texture_vertices(mesh: FaceMesh, src: Image) -> FaceMesh:
    """Colour each vertex by sampling ``src`` at its ``(x, y)``; gray is replicated."""
    colors = sample_bilinear(src, mesh.vertices[:, 0], mesh.vertices[:, 1])
    if colors.shape[1] == 1:
        colors = np.repeat(colors, 3, axis=1)
    return FaceMesh(mesh.vertices, mesh.triangles, colors)


def export_obj(mesh: FaceMesh) -> bytes:
    lines = []
    for i, v in enumerate(mesh.vertices):
        fields = [f"{x:.6f}" for x in v]
        if mesh.colors is not None:
            fields += [f"{x:.6f}" for x in mesh.colors[i]]
        lines.append("v " + " ".join(fields))
    for a, b, c in mesh.triangles + 1:
        lines.append(f"f {a} {b} {c}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _face_index(token: str, lineno: int) -> int:
    # Tolerate "v/vt/vn" references; only the vertex index is used.
    head = token.split("/")[0]
    try:
        return int(head)
    except ValueError:
        raise ObjParseError(lineno, f"bad face index {token!r}") from None


def import_obj(data: bytes | str) -> FaceMesh:
    """Parse the exporter's OBJ dialect; comments and blank lines are skipped."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    verts: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[tuple[int, int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) not in (3, 6):
                raise ObjParseError(lineno, f"vertex needs 3 or 6 numbers, got {len(rest)}")
            try:
                nums = [float(x) for x in rest]
            except ValueError:
                raise ObjParseError(lineno, "vertex has a non-numeric field") from None
            if not all(math.isfinite(x) for x in nums):
                raise ObjParseError(lineno, "vertex has a non-finite field")
            if len(nums) == 6:
                colors.append(nums[3:])
            elif colors:
                raise ObjParseError(lineno, "vertex without colour after coloured vertices")
            if colors and len(colors) != len(verts) + 1:
                raise ObjParseError(lineno, "coloured vertex after uncoloured vertices")
            verts.append(nums[:3])
        elif tag == "f":
            if len(rest) != 3:
                raise ObjParseError(lineno, f"only triangles are supported, got {len(rest)} indices")
            idx = [_face_index(t, lineno) for t in rest]
            faces.append((lineno, *idx))
        else:
            raise ObjParseError(lineno, f"unsupported directive {tag!r}")
    tris = []
    for lineno, *idx in faces:
        for i in idx:
            if not 1 <= i <= len(verts):
                raise ObjParseError(lineno, f"face index {i} out of range 1..{len(verts)}")
        if idx[0] == idx[1] == idx[2]:
            raise ObjParseError(lineno, "degenerate face")
        tris.append([i - 1 for i in idx])
    return FaceMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(colors) if colors else None,
    )


def rotate_yaw(mesh: FaceMesh, pose: Pose | float) -> FaceMesh:
    """Rotate about the vertical (image ``y``) axis through the centroid.

    Positive yaw moves the right side of the image away from the camera.
    """
    deg = pose.yaw if isinstance(pose, Pose) else float(pose)
    theta = math.radians(deg)
    c, s = math.cos(theta), math.sin(theta)
    d = mesh.vertices - mesh.centroid
    # Written as v + (R - I) d so that a zero rotation returns v bit for bit.
    out = mesh.vertices.copy()
    out[:, 0] += (c - 1.0) * d[:, 0] + s * d[:, 2]
    out[:, 2] += -s * d[:, 0] + (c - 1.0) * d[:, 2]
    return FaceMesh(out, mesh.triangles, mesh.colors)


def pose_set(yaws: Iterable[float] = DEFAULT_POSES) -> list[Pose]:
    return [Pose(float(y)) for y in yaws]
