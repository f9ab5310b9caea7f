"""Depth boundary detection and boundary agreement metrics.

Two edge extractors feed the metrics:

* :func:`canny_edges`: Gaussian smoothing, Sobel gradients, 4-direction
  non-maximum suppression, and two-threshold hysteresis, all run on depth
  normalized by ``d_max`` so the thresholds are range-independent. Used for
  the depth-boundary-error pair (accuracy / completeness).
* :func:`gradient_threshold_edges`: pixels whose Sobel gradient magnitude in
  meters per pixel exceeds a threshold. Used for precision / recall / F1 at
  several edge strengths.

Every stage wraps horizontally (the panorama seam is not a boundary) and
clamps vertically: border rows compare against themselves, so suppression at
the pole rows is conservative.

Invalid pixels are zero-filled before filtering and no edge is ever reported
on an invalid pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.ndimage
from scipy.spatial import cKDTree

from ..depthio import DepthPanorama

EDGE_THRESHOLDS = (0.25, 0.5, 1.0)
CANNY_SIGMA = 1.0
CANNY_LO = 0.05
CANNY_HI = 0.10
DBE_TRUNCATION = 10.0
MATCH_RADIUS = 1.0


@dataclass
class EdgeMap:
    """Boolean edge mask plus a note on how it was produced."""

    edges: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=bool)
        if self.edges.ndim != 2:
            raise ValueError("edge map must be 2-d")

    def count(self) -> int:
        return int(self.edges.sum())


class PrecisionRecall(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool  # True when neither map contains any edge


def _edges_of(e) -> np.ndarray:
    return e.edges if isinstance(e, EdgeMap) else np.asarray(e, dtype=bool)


def _shift(grid: np.ndarray, dj: int, di: int) -> np.ndarray:
    """Shift so out[j, i] = grid[j + dj, i + di], wrapping i, clamping j."""
    out = np.roll(grid, -di, axis=1)
    if dj > 0:
        out = np.concatenate([out[dj:], np.repeat(out[-1:], dj, axis=0)], axis=0)
    elif dj < 0:
        out = np.concatenate([np.repeat(out[:1], -dj, axis=0), out[:dj]], axis=0)
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian taps with radius int(4*sigma + 0.5)."""
    radius = int(4.0 * sigma + 0.5)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def smooth_wrapped(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur: horizontal pass wraps, vertical pass clamps.

    Taps accumulate in ascending offset order; keep that order stable, it
    pins the floating-point result bit-for-bit.
    """
    taps = gaussian_kernel(sigma)
    radius = len(taps) // 2
    h, w = values.shape
    cols = np.take(values, np.arange(-radius, w + radius), axis=1, mode="wrap")
    tmp = taps[0] * cols[:, 0:w]
    for k in range(1, len(taps)):
        tmp += taps[k] * cols[:, k : k + w]
    rows = tmp[np.clip(np.arange(-radius, h + radius), 0, h - 1)]
    out = taps[0] * rows[0:h]
    for k in range(1, len(taps)):
        out += taps[k] * rows[k : k + h]
    return out


def sobel_wrapped(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradients (gx, gy) divided by 8, i.e. value units per pixel.

    The 3x3 kernels are evaluated separably: a [1, 2, 1] smoothing
    perpendicular to the difference, then a central difference. Columns wrap,
    rows clamp (border rows reuse themselves). gx points toward increasing
    column, gy toward increasing row; the /8 factor makes the response of a
    unit/pixel ramp exactly 1.
    """
    values = np.asarray(values, dtype=np.float64)
    ty = np.empty_like(values)
    ty[1:-1] = values[:-2] + 2.0 * values[1:-1] + values[2:]
    ty[0] = 3.0 * values[0] + values[1]
    ty[-1] = values[-2] + 3.0 * values[-1]
    gx = (np.roll(ty, -1, axis=1) - np.roll(ty, 1, axis=1)) / 8.0

    tx = np.roll(values, 1, axis=1) + 2.0 * values + np.roll(values, -1, axis=1)
    gy = np.empty_like(tx)
    gy[1:-1] = tx[2:] - tx[:-2]
    gy[0] = tx[1] - tx[0]
    gy[-1] = tx[-1] - tx[-2]
    return gx, gy / 8.0


# Neighbor offsets (dj, di) along the quantized gradient direction, per sector.
_NMS_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))
# Sector boundaries fall at 22.5 and 67.5 degrees: tan(pi/8) = sqrt(2) - 1,
# tan(3*pi/8) = sqrt(2) + 1.
_NMS_TAN_LO = math.sqrt(2.0) - 1.0
_NMS_TAN_HI = math.sqrt(2.0) + 1.0


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin gradient magnitude to single-pixel ridges along the gradient.

    The gradient direction is quantized to 4 sectors of the half-turn:
    horizontal (|gy| < tan(22.5)*|gx|), vertical (|gy| >= tan(67.5)*|gx|),
    and the two diagonals split by the sign of gx*gy. A pixel survives when
    its magnitude strictly exceeds the previous neighbor along the gradient
    and is at least the next neighbor; on flat plateaus this keeps exactly
    one side.
    """
    ax = np.abs(gx)
    ay = np.abs(gy)
    horiz = ay < _NMS_TAN_LO * ax
    vert = ay >= _NMS_TAN_HI * ax
    rising = ~horiz & ~vert & (gx * gy > 0.0)
    falling = ~horiz & ~vert & ~(gx * gy > 0.0)
    keep = np.zeros(mag.shape, dtype=bool)
    for sector, (dj, di) in zip((horiz, rising, vert, falling), _NMS_OFFSETS):
        nxt = _shift(mag, dj, di)
        prv = _shift(mag, -dj, -di)
        keep |= sector & (mag > prv) & (mag >= nxt)
    return keep


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _hysteresis(weak: np.ndarray, strong: np.ndarray) -> np.ndarray:
    """Keep 8-connected weak components (wrapping the seam) that touch strong."""
    if not strong.any():
        return np.zeros_like(weak)
    labels, n = scipy.ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros_like(weak)
    uf = _UnionFind(n + 1)
    left, right = labels[:, 0], labels[:, -1]
    h = labels.shape[0]
    for j in range(h):
        if right[j] == 0:
            continue
        for dj in (-1, 0, 1):
            jj = j + dj
            if 0 <= jj < h and left[jj] != 0:
                uf.union(right[j], left[jj])
    roots = np.array([uf.find(k) for k in range(n + 1)], dtype=np.int64)
    merged = roots[labels]
    strong_roots = np.unique(merged[strong])
    return weak & np.isin(merged, strong_roots)


def canny_edges(
    d: DepthPanorama,
    sigma: float = CANNY_SIGMA,
    lo: float = CANNY_LO,
    hi: float = CANNY_HI,
) -> EdgeMap:
    """Canny depth boundaries on depth normalized by d_max.

    Thresholds apply to the Sobel gradient magnitude (units: normalized depth
    per pixel, /8 convention) after non-maximum suppression; hysteresis then
    keeps weak pixels (>= lo) connected to strong ones (>= hi).
    """
    if not 0 <= lo <= hi:
        raise ValueError("canny thresholds need 0 <= lo <= hi")
    norm = np.where(d.mask, d.values, 0.0) / d.d_max
    smoothed = smooth_wrapped(norm, sigma)
    gx, gy = sobel_wrapped(smoothed)
    mag = np.hypot(gx, gy)
    thin = _nms(mag, gx, gy)
    weak = thin & (mag >= lo)
    strong = thin & (mag >= hi)
    edges = _hysteresis(weak, strong) & d.mask
    return EdgeMap(edges=edges, provenance=f"canny(sigma={sigma},lo={lo},hi={hi})")


def gradient_magnitude(d: DepthPanorama) -> np.ndarray:
    """Sobel gradient magnitude of the raw depth values, invalid zero-filled."""
    values = np.where(d.mask, d.values, 0.0)
    gx, gy = sobel_wrapped(values)
    return np.hypot(gx, gy)


def gradient_threshold_edges(
    d: DepthPanorama, threshold: float, magnitude: np.ndarray | None = None
) -> EdgeMap:
    """Pixels whose depth gradient magnitude exceeds ``threshold`` m/px.

    Pass a precomputed :func:`gradient_magnitude` to reuse it across several
    thresholds.
    """
    if magnitude is None:
        magnitude = gradient_magnitude(d)
    return EdgeMap(edges=(magnitude > threshold) & d.mask, provenance=f"grad>{threshold}")


def distance_transform(edge_map) -> np.ndarray:
    """Exact Euclidean distance to the nearest edge pixel, wrapped horizontally.

    Computed on a copy padded by half a width of wrapped columns per side,
    which is exact: the nearest wrapped neighbor is never further than half a
    width away horizontally. An empty edge map yields +inf everywhere.
    """
    edges = _edges_of(edge_map)
    if not edges.any():
        return np.full(edges.shape, np.inf)
    w = edges.shape[1]
    p = (w + 1) // 2
    tiled = np.concatenate([edges[:, -p:], edges, edges[:, :p]], axis=1)
    dist = scipy.ndimage.distance_transform_edt(~tiled)
    return dist[:, p : p + w]


def _truncated_edge_distances(src: np.ndarray, ref: np.ndarray, trunc: float) -> np.ndarray:
    """Distance from each edge pixel of ``src`` to the nearest edge of ``ref``,
    horizontally wrapped, truncated at ``trunc``.

    Equal to ``min(distance_transform(ref)[src], trunc)`` pixel for pixel
    (both are square roots of the same integer), but queries a kd-tree over
    the edge coordinates instead of transforming the whole grid.
    """
    w = ref.shape[1]
    rj, ri = np.nonzero(ref)
    coords = np.stack([rj, ri], axis=1).astype(np.float64)
    shift = np.array([0.0, float(w)])
    tree = cKDTree(np.concatenate([coords, coords + shift, coords - shift]))
    qj, qi = np.nonzero(src)
    d, _ = tree.query(
        np.stack([qj, qi], axis=1).astype(np.float64), k=1, distance_upper_bound=trunc
    )
    return np.minimum(d, trunc)


def dbe_sums(pred_edges, gt_edges, trunc: float = DBE_TRUNCATION) -> dict[str, float]:
    """Pooled sums for depth-boundary accuracy and completeness.

    Accuracy sums truncated distances from predicted edge pixels to the
    nearest ground-truth edge; completeness swaps the roles.
    """
    pe = _edges_of(pred_edges)
    ge = _edges_of(gt_edges)
    sums = {"acc": 0.0, "n_pred": float(pe.sum()), "comp": 0.0, "n_gt": float(ge.sum())}
    if pe.any() and ge.any():
        sums["acc"] = float(_truncated_edge_distances(pe, ge, trunc).sum())
        sums["comp"] = float(_truncated_edge_distances(ge, pe, trunc).sum())
    elif pe.any():
        sums["acc"] = trunc * sums["n_pred"]
    elif ge.any():
        sums["comp"] = trunc * sums["n_gt"]
    return sums


def dbe(pred_edges, gt_edges, trunc: float = DBE_TRUNCATION) -> tuple[float, float]:
    """Depth boundary error (accuracy, completeness) in pixels.

    Each is a mean of edge-to-nearest-edge distances truncated at ``trunc``;
    when one side has no edges at all, its mean defaults to the truncation
    value (maximally wrong rather than undefined).
    """
    sums = dbe_sums(pred_edges, gt_edges, trunc)
    acc = sums["acc"] / sums["n_pred"] if sums["n_pred"] else trunc
    comp = sums["comp"] / sums["n_gt"] if sums["n_gt"] else trunc
    return acc, comp


def _disk_dilate(edges: np.ndarray, radius: float) -> np.ndarray:
    """Dilation by a Euclidean disk: pixels within ``radius`` of an edge.

    Equivalent to thresholding the wrapped distance transform at ``radius``
    but computed by unioning shifted copies, which is cheap for small radii.
    """
    out = np.zeros_like(edges)
    r = int(np.floor(radius))
    for dj in range(-r, r + 1):
        for di in range(-r, r + 1):
            if dj * dj + di * di <= radius * radius:
                out |= _shift(edges, dj, di)
    return out


def match_sums(pred_edges, gt_edges, radius: float = MATCH_RADIUS) -> dict[str, float]:
    """Pooled sums for edge precision/recall at a match radius in pixels."""
    pe = _edges_of(pred_edges)
    ge = _edges_of(gt_edges)
    return {
        "matched_pred": float((pe & _disk_dilate(ge, radius)).sum()),
        "n_pred": float(pe.sum()),
        "matched_gt": float((ge & _disk_dilate(pe, radius)).sum()),
        "n_gt": float(ge.sum()),
    }


def finalize_match(sums: dict[str, float]) -> PrecisionRecall:
    if sums["n_pred"] == 0 and sums["n_gt"] == 0:
        return PrecisionRecall(0.0, 0.0, 0.0, True)
    p = sums["matched_pred"] / sums["n_pred"] if sums["n_pred"] else 0.0
    r = sums["matched_gt"] / sums["n_gt"] if sums["n_gt"] else 0.0
    f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return PrecisionRecall(p, r, f, False)


def edge_precision_recall(pred_edges, gt_edges, radius: float = MATCH_RADIUS) -> PrecisionRecall:
    """Precision, recall and F1 of predicted edges against ground truth.

    An edge pixel matches when one from the other map lies within ``radius``
    (Euclidean, horizontally wrapped). Both maps empty flags the result
    degenerate; a single empty side simply scores zero.
    """
    return finalize_match(match_sums(pred_edges, gt_edges, radius))
