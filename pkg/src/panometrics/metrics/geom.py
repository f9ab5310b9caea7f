"""3D geometric metrics: lifted point clouds, surface normals, smoothness,
cloud-to-cloud and mesh-to-mesh distances.

Depth maps lift to 3D by scaling each pixel's unit view direction with its
depth. Normals come from central differences of neighboring lifted points and
are oriented toward the camera (a visible surface cannot face away from it).
Meshes triangulate the pixel grid, wrap across the longitude seam, and drop
triangles spanning depth discontinuities so that occlusion boundaries do not
grow phantom walls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from ..depthio import DepthPanorama
from ..sphere import direction_grid

ALPHA_THRESHOLDS_DEG = (11.25, 22.5, 30.0)
DISCONTINUITY_THRESHOLD = 0.1
M2M_SAMPLES = 10000
# Point-to-surface distances below this (meters) count as contact: exact
# self-distance then comes out identically zero despite rounding.
CONTACT_EPS = 1e-12
_DEGENERATE_CROSS = 1e-12


@dataclass
class OrientedPointCloud:
    """Points lifted from valid pixels, with per-point normals where defined.

    ``normals`` rows are unit length where ``normal_valid`` is True and zero
    elsewhere (border rows and pixels lacking a fully valid cross stencil).
    ``pixel_index`` maps each point back to its flat pixel index.
    """

    points: np.ndarray
    normals: np.ndarray
    normal_valid: np.ndarray
    pixel_index: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")


@dataclass
class SmoothnessResult:
    rmse_deg: float
    alpha: dict[float, float]
    n: int


@dataclass
class HausdorffResult:
    max_distance: float  # meters, symmetric max
    bbox_pct: float  # max distance as % of the joint bounding-box diagonal
    mean_distance: float  # average of the two one-sided means


class NormalStencil(NamedTuple):
    """Intermediate quantities of the normal cross stencil.

    Kept around so loss gradients can chain through the same computation:
    ``u`` and ``v`` are the east-west and south-north point differences,
    ``cross`` their cross product with norm ``cross_norm_safe`` (1 where it
    would be 0), ``sign`` the camera-facing flip, and ``normals`` the final
    oriented unit normals, zeroed where ``valid`` is False.
    """

    u: np.ndarray
    v: np.ndarray
    cross: np.ndarray
    cross_norm_safe: np.ndarray
    sign: np.ndarray
    normals: np.ndarray
    valid: np.ndarray


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the last axis (len 3), written out componentwise."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.float64)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def normal_stencil(points: np.ndarray, valid: np.ndarray) -> NormalStencil:
    """Cross-stencil normals for a grid of 3D points.

    n = normalize((P_east - P_west) x (P_south - P_north)), flipped to face
    the origin. A pixel gets a normal only if itself and its four neighbors
    (east/west wrapping, north/south not) are valid and the cross product is
    non-degenerate; border rows never qualify.
    """
    u = np.empty_like(points)
    u[:, 1:-1] = points[:, 2:] - points[:, :-2]
    u[:, 0] = points[:, 1] - points[:, -1]
    u[:, -1] = points[:, 0] - points[:, -2]
    # Border rows have no vertical pair; they are masked out below, so any
    # finite filler works.
    v = np.zeros_like(points)
    v[1:-1] = points[2:] - points[:-2]

    ok = valid.copy()
    ok[:, 1:-1] &= valid[:, 2:] & valid[:, :-2]
    ok[:, 0] &= valid[:, 1] & valid[:, -1]
    ok[:, -1] &= valid[:, 0] & valid[:, -2]
    ok[1:-1] &= valid[2:] & valid[:-2]
    ok[0] = False
    ok[-1] = False

    c = _cross3(u, v)
    c_sq = _dot3(c, c)
    degenerate = c_sq <= _DEGENERATE_CROSS**2 * _dot3(u, u) * _dot3(v, v)
    ok &= ~degenerate

    c_norm = np.sqrt(c_sq)
    safe = np.where(c_norm > 0, c_norm, 1.0)
    # A normal must face the camera at the origin: flip when n . P > 0.
    sign = np.where(_dot3(c, points) > 0.0, -1.0, 1.0)
    normals = np.where(ok[..., None], c * (sign / safe)[..., None], 0.0)
    return NormalStencil(
        u=u, v=v, cross=c, cross_norm_safe=safe, sign=sign, normals=normals, valid=ok
    )


def _normals_from_points(points: np.ndarray, valid: np.ndarray):
    stencil = normal_stencil(points, valid)
    return stencil.normals, stencil.valid


def normals_from_depth(d: DepthPanorama):
    """Per-pixel surface normals of a depth panorama.

    Returns ``(normals, valid)`` where normals is (H, W, 3) with unit rows
    where valid is True.
    """
    dirs = direction_grid(d.width, d.height)
    points = d.values[..., None] * dirs
    return _normals_from_points(points, d.mask)


def lift(d: DepthPanorama) -> OrientedPointCloud:
    """Lift a depth panorama to an oriented point cloud.

    Produces one point per valid pixel (point = depth * view direction);
    normals are attached where the stencil allows.
    """
    dirs = direction_grid(d.width, d.height)
    points = d.values[..., None] * dirs
    normals, nvalid = _normals_from_points(points, d.mask)
    sel = d.mask
    return OrientedPointCloud(
        points=points[sel],
        normals=normals[sel],
        normal_valid=nvalid[sel],
        pixel_index=np.flatnonzero(sel),
    )


def angle_between_deg(n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    """Angle between unit vectors in degrees via atan2, exact 0 for equal inputs."""
    c = _cross3(n1, n2)
    return np.degrees(np.arctan2(np.sqrt(_dot3(c, c)), _dot3(n1, n2)))


def smoothness_sums(
    pred: DepthPanorama,
    gt: DepthPanorama,
    weights: np.ndarray | None = None,
    thresholds=ALPHA_THRESHOLDS_DEG,
) -> dict[str, float]:
    """Pooled sums of squared normal angle error and per-threshold hits."""
    np_pred, vp = normals_from_depth(pred)
    np_gt, vg = normals_from_depth(gt)
    joint = vp & vg
    angles = angle_between_deg(np_pred[joint], np_gt[joint])
    sums = {"n": float(joint.sum()), "sq_deg": float(np.sum(angles * angles))}
    for t in thresholds:
        sums[f"hit_{t!r}"] = float(np.sum(angles < t))
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)[joint]
        sums["w"] = float(w.sum())
        sums["w_sq_deg"] = float(np.sum(w * angles * angles))
    return sums


def smoothness_metrics(
    pred: DepthPanorama,
    gt: DepthPanorama,
    weights: np.ndarray | None = None,
    thresholds=ALPHA_THRESHOLDS_DEG,
) -> SmoothnessResult:
    """Normal-angle RMSE in degrees and accuracies below angular thresholds.

    Evaluated over pixels where both maps yield a valid normal. ``weights``
    (optional) weight the RMSE; the threshold accuracies stay plain counts.
    """
    sums = smoothness_sums(pred, gt, weights=weights, thresholds=thresholds)
    n = sums["n"]
    if n == 0:
        raise ValueError("no pixel has valid normals in both maps")
    if weights is not None and sums.get("w", 0.0) > 0.0:
        rmse = float(np.sqrt(sums["w_sq_deg"] / sums["w"]))
    else:
        rmse = float(np.sqrt(sums["sq_deg"] / n))
    alpha = {t: sums[f"hit_{t!r}"] / n for t in thresholds}
    return SmoothnessResult(rmse_deg=rmse, alpha=alpha, n=int(n))


# ---------------------------------------------------------------------------
# Cloud-to-cloud


def c2c_sums(pred: OrientedPointCloud, gt: OrientedPointCloud) -> dict[str, float]:
    """Pooled sums of point-to-plane residuals, prediction against ground truth.

    Nearest neighbors are found over the full ground-truth cloud; pairs whose
    matched point carries no normal (border rows, degenerate stencils) have
    no plane to measure against and drop out of the sums.
    """
    if not len(pred.points) or not len(gt.points):
        raise ValueError("c2c needs two non-empty clouds")
    _, idx = cKDTree(gt.points).query(pred.points, k=1)
    oriented = gt.normal_valid[idx]
    if not oriented.any():
        raise ValueError("no prediction point matched an oriented ground-truth point")
    diff = pred.points[oriented] - gt.points[idx[oriented]]
    resid = np.abs((diff * gt.normals[idx[oriented]]).sum(axis=-1))
    return {"n": float(len(resid)), "sum": float(resid.sum()), "sum_sq": float((resid * resid).sum())}


def c2c(pred: OrientedPointCloud, gt: OrientedPointCloud) -> tuple[float, float]:
    """Mean and standard deviation of point-to-plane distance.

    Each prediction point is matched to its exact nearest ground-truth point
    (among those carrying normals) and the residual is the unsigned distance
    along that point's normal.
    """
    sums = c2c_sums(pred, gt)
    mean = sums["sum"] / sums["n"]
    var = max(sums["sum_sq"] / sums["n"] - mean * mean, 0.0)
    return mean, float(np.sqrt(var))


# ---------------------------------------------------------------------------
# Meshes


def grid_mesh(d: DepthPanorama, disc_thresh: float = DISCONTINUITY_THRESHOLD) -> TriangleMesh:
    """Triangulate a depth panorama's pixel grid.

    Each quad of mutually valid pixels (wrapping the longitude seam) yields
    two triangles. A triangle is culled when any of its edges joins depths
    differing by more than ``disc_thresh`` times the smaller depth, or when
    it has zero area.
    """
    valid = d.mask
    h, w = valid.shape
    index = np.full((h, w), -1, dtype=np.int64)
    index[valid] = np.arange(int(valid.sum()))
    dirs = direction_grid(w, h)
    vertices = (d.values[..., None] * dirs)[valid]

    rolled_idx = np.roll(index, -1, axis=1)
    rolled_val = np.roll(d.values, -1, axis=1)
    ia, ib = index[:-1, :].ravel(), rolled_idx[:-1, :].ravel()
    ic, id_ = index[1:, :].ravel(), rolled_idx[1:, :].ravel()
    da, db = d.values[:-1, :].ravel(), rolled_val[:-1, :].ravel()
    dc, dd = d.values[1:, :].ravel(), rolled_val[1:, :].ravel()
    quad_ok = (ia >= 0) & (ib >= 0) & (ic >= 0) & (id_ >= 0)

    def continuous(x, y):
        return np.abs(x - y) <= disc_thresh * np.minimum(x, y)

    tri1_ok = quad_ok & continuous(da, db) & continuous(db, dc) & continuous(dc, da)
    tri2_ok = quad_ok & continuous(db, dd) & continuous(dd, dc) & continuous(dc, db)
    tris = np.concatenate(
        [
            np.stack([ia[tri1_ok], ib[tri1_ok], ic[tri1_ok]], axis=1),
            np.stack([ib[tri2_ok], id_[tri2_ok], ic[tri2_ok]], axis=1),
        ],
        axis=0,
    )
    if len(tris):
        a, b, c = vertices[tris[:, 0]], vertices[tris[:, 1]], vertices[tris[:, 2]]
        cr = _cross3(b - a, c - a)
        tris = tris[_dot3(cr, cr) > 0.0]
    return TriangleMesh(vertices=vertices, triangles=tris)


def _point_triangle_dist_sq(p, a, b, c):
    """Squared distance from points to triangles, elementwise over the batch.

    Voronoi-region test: classify against the vertex, edge and face regions
    and take the closest point of the matching feature. Division guards only
    matter for degenerate triangles, which callers exclude.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        return num / np.where(den != 0.0, den, 1.0)

    denom = va + vb + vc
    v_in = safe_div(vb, denom)
    w_in = safe_div(vc, denom)
    closest = a + ab * v_in[..., None] + ac * w_in[..., None]

    t = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
    region = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)
    closest = np.where(region[..., None], b + (c - b) * t[..., None], closest)

    t = safe_div(d2, d2 - d6)
    region = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    closest = np.where(region[..., None], a + ac * t[..., None], closest)

    t = safe_div(d1, d1 - d3)
    region = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    closest = np.where(region[..., None], a + ab * t[..., None], closest)

    closest = np.where(((d6 >= 0.0) & (d5 <= d6))[..., None], c, closest)
    closest = np.where(((d3 >= 0.0) & (d4 <= d3))[..., None], b, closest)
    closest = np.where(((d1 <= 0.0) & (d2 <= 0.0))[..., None], a, closest)

    diff = p - closest
    return (diff * diff).sum(-1)


def sample_mesh_surface(mesh: TriangleMesh, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw area-uniform surface samples from a mesh."""
    if not len(mesh.triangles):
        raise ValueError("cannot sample an empty mesh")
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    cr = _cross3(b - a, c - a)
    areas = 0.5 * np.sqrt(_dot3(cr, cr))
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    idx = rng.choice(len(areas), size=n_samples, p=areas / total)
    u = rng.random(n_samples)
    v = rng.random(n_samples)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    return a[idx] + u[:, None] * (b[idx] - a[idx]) + v[:, None] * (c[idx] - a[idx])


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh, chunk: int = 2048) -> np.ndarray:
    """Exact distance from each point to the nearest point of the mesh surface.

    A nearest-vertex query gives an upper bound; only triangles whose
    centroid lies within that bound plus the largest centroid radius can beat
    it, so the exact test runs on a provably sufficient candidate set.
    """
    if not len(mesh.triangles):
        raise ValueError("cannot measure distance to an empty mesh")
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    centroids = (a + b + c) / 3.0
    ra, rb, rc = a - centroids, b - centroids, c - centroids
    r_tri = np.sqrt(
        np.maximum(_dot3(ra, ra), np.maximum(_dot3(rb, rb), _dot3(rc, rc)))
    )
    r_max = float(r_tri.max())
    # Only vertices referenced by a triangle lie on the surface; orphan
    # vertices would undercut the upper bound and break the candidate set.
    vtree = cKDTree(mesh.vertices[np.unique(mesh.triangles)])
    ctree = cKDTree(centroids)
    out = np.empty(len(points), dtype=np.float64)
    for lo in range(0, len(points), chunk):
        pts = points[lo : lo + chunk]
        upper, _ = vtree.query(pts, k=1)
        lists = ctree.query_ball_point(pts, r=upper + r_max + 1e-9)
        counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
        flat_tri = np.concatenate(lists) if counts.sum() else np.empty(0, dtype=np.int64)
        flat_pt = np.repeat(np.arange(len(pts)), counts)
        # Tighten per triangle: one whose own centroid sphere stays beyond the
        # vertex upper bound cannot contain a closer point. The triangle that
        # owns the nearest vertex always survives, so no point goes empty.
        gap = pts[flat_pt] - centroids[flat_tri]
        near = np.sqrt(_dot3(gap, gap)) - r_tri[flat_tri] <= upper[flat_pt] + 1e-9
        flat_tri = flat_tri[near]
        flat_pt = flat_pt[near]
        d2 = _point_triangle_dist_sq(pts[flat_pt], a[flat_tri], b[flat_tri], c[flat_tri])
        best = np.full(len(pts), np.inf)
        np.minimum.at(best, flat_pt, d2)
        out[lo : lo + chunk] = np.sqrt(best)
    return out


def m2m_hausdorff(
    mesh_a: TriangleMesh,
    mesh_b: TriangleMesh,
    n_samples: int = M2M_SAMPLES,
    seed: int = 0,
) -> HausdorffResult:
    """Sampled symmetric Hausdorff distance between two mesh surfaces.

    Area-uniform samples drawn from each mesh (one seeded generator, a-side
    first, so results are reproducible for a fixed seed) are measured against
    the other mesh with exact point-to-triangle distances; the result is the
    max over both directions. Distances under ``CONTACT_EPS`` snap to zero so
    a mesh compared against itself reports exactly 0. The ``bbox_pct`` field
    expresses the max as a percentage of the joint bounding-box diagonal.
    """
    rng = np.random.default_rng(seed)
    samples_a = sample_mesh_surface(mesh_a, n_samples, rng)
    samples_b = sample_mesh_surface(mesh_b, n_samples, rng)
    d_ab = point_mesh_distance(samples_a, mesh_b)
    d_ba = point_mesh_distance(samples_b, mesh_a)
    d_ab[d_ab < CONTACT_EPS] = 0.0
    d_ba[d_ba < CONTACT_EPS] = 0.0
    value = float(max(d_ab.max(), d_ba.max()))
    mean = float(0.5 * (d_ab.mean() + d_ba.mean()))

    both = np.concatenate([mesh_a.vertices, mesh_b.vertices], axis=0)
    diag = float(np.linalg.norm(both.max(axis=0) - both.min(axis=0)))
    if diag > 0:
        pct = 100.0 * value / diag
    else:
        pct = 0.0 if value == 0.0 else float("inf")
    return HausdorffResult(max_distance=value, bbox_pct=pct, mean_distance=mean)


# ---------------------------------------------------------------------------
# Export


def save_pointcloud_ply(path, cloud: OrientedPointCloud) -> None:
    """Binary little-endian PLY with positions and (possibly zero) normals."""
    n = len(cloud.points)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "end_header\n"
    )
    data = np.concatenate([cloud.points, cloud.normals], axis=1).astype("<f4")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


def save_mesh_ply(path, mesh: TriangleMesh) -> None:
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        f"element face {len(mesh.triangles)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(mesh.vertices.astype("<f4").tobytes())
        counts = np.full((len(mesh.triangles), 1), 3, dtype=np.uint8)
        faces = mesh.triangles.astype("<i4")
        packed = bytearray()
        for row, cnt in zip(faces, counts):
            packed += cnt.tobytes() + row.tobytes()
        f.write(bytes(packed))


def save_mesh_obj(path, mesh: TriangleMesh) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
