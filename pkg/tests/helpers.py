"""Shared fixture builders for the test suite.

All generators are deterministic functions of an explicit seed so every test
pins its own data. Depth values stay inside (0.5, 9.5) meters, i.e. strictly
within the default 10 m range cap, so fixtures are fully valid unless a test
masks pixels on purpose.
"""

from __future__ import annotations

import numpy as np

from panometrics.depthio import (
    DepthPanorama,
    SampleManifest,
    SampleRecord,
    save_manifest,
    write_pfm,
)
from panometrics.sphere import pixel_centers

D_MAX = 10.0


def smooth_base(width: int, height: int) -> np.ndarray:
    """A smooth, fully valid depth field in roughly [2.7, 7.3] meters."""
    phi, theta = pixel_centers(width, height)
    return 5.0 + 1.5 * np.sin(phi) * np.cos(theta) + 0.8 * np.cos(2.0 * phi) * np.sin(theta)


def random_panorama(seed: int, width: int = 64, height: int = 32, boxes: int = 2) -> np.ndarray:
    """Smooth base plus a few constant-depth rectangles with >= 3 m jumps.

    Rectangles may cross the longitude seam. The jump size guarantees strong
    depth discontinuities, so edge maps of these fixtures are non-empty.
    """
    rng = np.random.default_rng(seed)
    values = smooth_base(width, height)
    for _ in range(boxes):
        bh = int(rng.integers(3, max(4, height // 4 + 1)))
        bw = int(rng.integers(4, max(5, width // 4 + 1)))
        j0 = int(rng.integers(1, height - bh - 1))
        i0 = int(rng.integers(0, width))
        cols = np.arange(i0, i0 + bw) % width
        ring_rows = slice(max(j0 - 1, 0), min(j0 + bh + 1, height))
        ring_cols = np.arange(i0 - 1, i0 + bw + 1) % width
        ring = values[ring_rows][:, ring_cols]
        # Put the box at whichever depth extreme clears the ring by more.
        const = 9.4 if ring.min() - 0.6 < 9.4 - ring.max() else 0.6
        values[j0 : j0 + bh, cols] = const
    return values


def noisy_prediction(seed: int, gt: np.ndarray, lo: float = 0.05, hi: float = 0.5) -> np.ndarray:
    """gt plus per-pixel noise bounded away from zero (no |pred - gt| kinks)."""
    rng = np.random.default_rng(seed)
    magnitude = rng.uniform(lo, hi, size=gt.shape)
    sign = rng.choice([-1.0, 1.0], size=gt.shape)
    return gt + sign * magnitude


def pano(values: np.ndarray, d_max: float = D_MAX, clamp: bool = False) -> DepthPanorama:
    return DepthPanorama.from_values(np.asarray(values, dtype=np.float64), d_max=d_max, clamp=clamp)


def random_pair(seed: int, width: int = 64, height: int = 32):
    """A (pred, gt) DepthPanorama pair over the same random scene."""
    gt = random_panorama(seed, width, height)
    pred = noisy_prediction(seed + 1000, gt)
    return pano(pred, clamp=True), pano(gt)


def write_pfm_manifest(dirpath, arrays, prefix: str, ids=None):
    """Write each array as PFM plus a JSON Lines manifest; returns its path."""
    records = []
    for k, values in enumerate(arrays):
        depth_path = dirpath / f"{prefix}_{k:03d}.pfm"
        write_pfm(depth_path, values)
        records.append(
            SampleRecord(depth=str(depth_path), id=None if ids is None else ids[k])
        )
    manifest_path = dirpath / f"{prefix}.jsonl"
    save_manifest(SampleManifest(records=records), manifest_path)
    return manifest_path


def floor_plane(width: int, height: int, h: float = 1.5, d_max: float = D_MAX) -> DepthPanorama:
    """Depth map of the plane y = -h (a floor below the viewer).

    Only pixels looking downward steeply enough to hit the plane within the
    range cap are valid: d = h / sin(-theta) for theta < 0.
    """
    _, theta = pixel_centers(width, height)
    below = theta < 0.0
    with np.errstate(divide="ignore"):
        values = np.where(below, h / np.sin(-np.where(below, theta, -1.0)), 0.0)
    values = np.where(below & (values <= d_max), values, 0.0)
    return pano(values, d_max=d_max)


def sphere_scene(width: int, height: int, radius: float = 2.0) -> DepthPanorama:
    """Constant radial depth: the viewer sits at the center of a sphere."""
    return pano(np.full((height, width), radius))
