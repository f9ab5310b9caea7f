"""Per-pixel depth error metrics and threshold accuracies.

All metrics compare a prediction against ground truth over the pixels both
masks mark valid. Errors come in plain and solid-angle-weighted flavors;
threshold accuracies additionally come in an icosphere variant that counts
vertices of a projected icosphere instead of raw pixels, which removes the
oversampling of high latitudes inherent to equirectangular grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..depthio import DepthPanorama
from ..icosphere import IcoSphere, sample_at_vertices

DELTA_THRESHOLDS = (1.05, 1.1, 1.25, 1.5625, 1.953125)


@dataclass
class DirectErrors:
    rmse: float
    rmsle: float
    abs_rel: float
    sq_rel: float


def _joint(pred: DepthPanorama, gt: DepthPanorama) -> np.ndarray:
    if pred.values.shape != gt.values.shape:
        raise ValueError("prediction and ground truth must share a grid")
    return pred.mask & gt.mask


def error_sums(
    pred: DepthPanorama, gt: DepthPanorama, weights: np.ndarray | None = None
) -> dict[str, float]:
    """Pooled sufficient statistics for the four error metrics.

    Returns a dict with pixel count ``n`` and sums of squared error, squared
    log error, absolute relative error, and squared relative error. When
    ``weights`` is given, ``w`` (total weight) and ``w_*`` sums are included
    as well. Sums over samples can simply be added before finalizing.
    """
    joint = _joint(pred, gt)
    p = pred.values[joint]
    g = gt.values[joint]
    err = p - g
    log_err = np.log(p) - np.log(g)
    sums = {
        "n": float(joint.sum()),
        "sq_err": float(np.sum(err * err)),
        "sq_log_err": float(np.sum(log_err * log_err)),
        "abs_rel": float(np.sum(np.abs(err) / g)),
        "sq_rel": float(np.sum(err * err / g)),
    }
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)[joint]
        sums.update(
            {
                "w": float(np.sum(w)),
                "w_sq_err": float(np.sum(w * err * err)),
                "w_sq_log_err": float(np.sum(w * log_err * log_err)),
                "w_abs_rel": float(np.sum(w * np.abs(err) / g)),
                "w_sq_rel": float(np.sum(w * err * err / g)),
            }
        )
    return sums


def finalize_errors(sums: dict[str, float], weighted: bool = False) -> DirectErrors:
    n = sums["w"] if weighted else sums["n"]
    pre = "w_" if weighted else ""
    if n == 0:
        raise ValueError("no valid pixels shared by prediction and ground truth")
    return DirectErrors(
        rmse=float(np.sqrt(sums[pre + "sq_err"] / n)),
        rmsle=float(np.sqrt(sums[pre + "sq_log_err"] / n)),
        abs_rel=sums[pre + "abs_rel"] / n,
        sq_rel=sums[pre + "sq_rel"] / n,
    )


def direct_errors(
    pred: DepthPanorama, gt: DepthPanorama, weights: np.ndarray | None = None
) -> DirectErrors:
    """RMSE, RMSLE (natural log), absolute and squared relative error.

    With ``weights`` the means are weighted; weights need not be normalized
    because they are renormalized over the jointly valid pixels.
    """
    sums = error_sums(pred, gt, weights)
    return finalize_errors(sums, weighted=weights is not None)


def _ratio(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.maximum(p / g, g / p)


def delta_sums(
    pred: DepthPanorama, gt: DepthPanorama, thresholds=DELTA_THRESHOLDS
) -> dict[str, float]:
    """Counts of pixels whose max depth ratio stays below each threshold."""
    joint = _joint(pred, gt)
    ratio = _ratio(pred.values[joint], gt.values[joint])
    sums = {"n": float(joint.sum())}
    for t in thresholds:
        sums[f"hit_{t!r}"] = float(np.sum(ratio < t))
    return sums


def delta_accuracy(
    pred: DepthPanorama,
    gt: DepthPanorama,
    threshold: float,
    weights: np.ndarray | None = None,
) -> float:
    """Fraction of valid pixels with max(pred/gt, gt/pred) < threshold."""
    joint = _joint(pred, gt)
    if not joint.any():
        raise ValueError("no valid pixels shared by prediction and ground truth")
    hit = _ratio(pred.values[joint], gt.values[joint]) < threshold
    if weights is None:
        return float(np.mean(hit))
    w = np.asarray(weights, dtype=np.float64)[joint]
    return float(np.sum(w * hit) / np.sum(w))


def ico_delta_sums(
    pred: DepthPanorama,
    gt: DepthPanorama,
    sphere: IcoSphere,
    thresholds=DELTA_THRESHOLDS,
) -> dict[str, float]:
    """Like :func:`delta_sums` but counted at projected icosphere vertices."""
    joint = _joint(pred, gt)
    p = sample_at_vertices(pred.values, sphere, mask=joint)
    g = sample_at_vertices(gt.values, sphere, mask=joint)
    ok = np.isfinite(p)
    ratio = _ratio(p[ok], g[ok])
    sums = {"n": float(ok.sum())}
    for t in thresholds:
        sums[f"hit_{t!r}"] = float(np.sum(ratio < t))
    return sums


def ico_delta_accuracy(
    pred: DepthPanorama, gt: DepthPanorama, sphere: IcoSphere, threshold: float
) -> float:
    """Threshold accuracy evaluated at icosphere vertices (nearest pixel)."""
    sums = ico_delta_sums(pred, gt, sphere, thresholds=(threshold,))
    if sums["n"] == 0:
        raise ValueError("no icosphere vertex lands on a valid pixel")
    return sums[f"hit_{threshold!r}"] / sums["n"]
