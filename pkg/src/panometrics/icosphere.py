"""Subdivided icosahedral sphere meshes and vertex sampling on equirect grids.

The base icosahedron is oriented with its two apex vertices on the y axis
(the grid's pole axis) so that subdivided vertices spread evenly in latitude.
Each subdivision splits every triangle into four by inserting normalized edge
midpoints; midpoints are shared between the two faces meeting at an edge, so
vertex counts follow 10 * 4**order + 2.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .sphere import check_equirect_dims, spherical_to_pixel

MAX_ORDER = 8


@dataclass(frozen=True)
class IcoSphere:
    """Unit sphere triangulation. Arrays are read-only after construction."""

    order: int
    vertices: np.ndarray  # (N, 3) float64, unit length
    faces: np.ndarray  # (M, 3) int64 vertex indices


def _base_icosahedron() -> tuple[np.ndarray, np.ndarray]:
    """Icosahedron with poles at y = +-1 and two latitude rings of five."""
    lat = np.arctan(0.5)
    verts = [(0.0, 1.0, 0.0)]
    for k in range(5):
        lon = 2.0 * np.pi * k / 5.0
        verts.append((np.cos(lat) * np.sin(lon), np.sin(lat), np.cos(lat) * np.cos(lon)))
    for k in range(5):
        lon = 2.0 * np.pi * k / 5.0 + np.pi / 5.0
        verts.append((np.cos(lat) * np.sin(lon), -np.sin(lat), np.cos(lat) * np.cos(lon)))
    verts.append((0.0, -1.0, 0.0))

    faces = []
    for k in range(5):
        kn = (k + 1) % 5
        top, a, b = 0, 1 + k, 1 + kn
        c, d, bot = 6 + k, 6 + kn, 11
        faces.append((top, a, b))
        faces.append((a, c, b))
        faces.append((c, d, b))
        faces.append((bot, d, c))
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


def _subdivide(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One 4-way subdivision round with shared, renormalized edge midpoints."""
    edges = np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )
    edges = np.sort(edges, axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    mids = vertices[uniq[:, 0]] + vertices[uniq[:, 1]]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    mid_idx = len(vertices) + inverse.reshape(3, -1)  # rows: ab, bc, ca per face

    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    ab, bc, ca = mid_idx[0], mid_idx[1], mid_idx[2]
    new_faces = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=0,
    )
    return np.concatenate([vertices, mids], axis=0), new_faces


@functools.lru_cache(maxsize=None)
def build_icosphere(order: int = 6) -> IcoSphere:
    """Build (and cache) the icosphere of the given subdivision order.

    Args:
        order: number of subdivision rounds, 0 <= order <= 8. Order 0 is the
            bare icosahedron (12 vertices); order K has 10 * 4**K + 2.

    Raises:
        ValueError: if order is out of range.
    """
    if not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_ORDER:
        raise ValueError(f"icosphere order must be an int in [0, {MAX_ORDER}], got {order!r}")
    vertices, faces = _base_icosahedron()
    for _ in range(order):
        vertices, faces = _subdivide(vertices, faces)
    vertices.flags.writeable = False
    faces.flags.writeable = False
    return IcoSphere(order=int(order), vertices=vertices, faces=faces)


@functools.lru_cache(maxsize=32)
def _vertex_pixels(order: int, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest pixel (rows, cols) for every icosphere vertex on a given grid."""
    sphere = build_icosphere(order)
    x, y, z = sphere.vertices[:, 0], sphere.vertices[:, 1], sphere.vertices[:, 2]
    phi = np.arctan2(x, z)
    theta = np.arcsin(np.clip(y, -1.0, 1.0))
    u, v = spherical_to_pixel(phi, theta, width, height)
    cols = np.mod(np.rint(u).astype(np.int64), width)
    rows = np.clip(np.rint(v).astype(np.int64), 0, height - 1)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def project_to_pixels(sphere: IcoSphere, width: int, height: int):
    """Map each vertex to its nearest equirect pixel; returns (rows, cols)."""
    check_equirect_dims(width, height)
    return _vertex_pixels(sphere.order, width, height)


def sample_at_vertices(
    values: np.ndarray,
    sphere: IcoSphere,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Sample a grid at icosphere vertex positions (nearest-pixel).

    Vertices that land on masked-out pixels come back as NaN so callers can
    drop them without a separate validity array.
    """
    values = np.asarray(values)
    h, w = values.shape
    check_equirect_dims(w, h)
    rows, cols = project_to_pixels(sphere, w, h)
    out = values[rows, cols].astype(np.float64)
    if mask is not None:
        out = np.where(np.asarray(mask, dtype=bool)[rows, cols], out, np.nan)
    return out
