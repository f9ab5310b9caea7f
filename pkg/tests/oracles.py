"""Independent reference implementations used as oracles by the tests.

Everything here is written brute-force (scalar loops, all-pairs enumeration,
dense sampling) in a deliberately different style from the package, so that
agreement between the two is evidence of correctness rather than a shared
bug.

One caveat on the edge-detection reference: the Gaussian taps reuse the
package's documented closed form (same radius rule, same normalization)
because threshold comparisons only carry information when both pipelines see
bitwise-identical magnitudes. The filtering, suppression, and edge-linking
logic below — where the real mistakes hide — is all independent loop code.
"""

from __future__ import annotations

import math

import numpy as np


def _clamp(j: int, h: int) -> int:
    return min(max(j, 0), h - 1)


def gaussian_taps(sigma: float) -> np.ndarray:
    radius = int(4.0 * sigma + 0.5)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def smooth_reference(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian, wrapped columns then clamped rows, per-pixel loops.

    Accumulates taps in ascending offset order, matching the accumulation
    order the package documents as bit-for-bit stable.
    """
    taps = gaussian_taps(sigma)
    radius = len(taps) // 2
    h, w = values.shape
    tmp = np.empty((h, w))
    for j in range(h):
        for i in range(w):
            acc = taps[0] * values[j, (i - radius) % w]
            for k in range(1, len(taps)):
                acc = acc + taps[k] * values[j, (i - radius + k) % w]
            tmp[j, i] = acc
    out = np.empty((h, w))
    for j in range(h):
        for i in range(w):
            acc = taps[0] * tmp[_clamp(j - radius, h), i]
            for k in range(1, len(taps)):
                acc = acc + taps[k] * tmp[_clamp(j - radius + k, h), i]
            out[j, i] = acc
    return out


def sobel_reference(values: np.ndarray):
    """3x3 Sobel via the separable [1,2,1]/central-difference form, /8 units.

    Columns wrap, rows clamp (the border row reuses itself in the smoothing
    pass and differences one-sidedly in the gradient pass).
    """
    h, w = values.shape
    ty = np.empty((h, w))
    tx = np.empty((h, w))
    for j in range(h):
        for i in range(w):
            if j == 0:
                ty[j, i] = 3.0 * values[0, i] + values[1, i]
            elif j == h - 1:
                ty[j, i] = values[h - 2, i] + 3.0 * values[h - 1, i]
            else:
                ty[j, i] = (values[j - 1, i] + 2.0 * values[j, i]) + values[j + 1, i]
            tx[j, i] = (values[j, (i - 1) % w] + 2.0 * values[j, i]) + values[j, (i + 1) % w]
    gx = np.empty((h, w))
    gy = np.empty((h, w))
    for j in range(h):
        for i in range(w):
            gx[j, i] = (ty[j, (i + 1) % w] - ty[j, (i - 1) % w]) / 8.0
            if j == 0:
                gy[j, i] = (tx[1, i] - tx[0, i]) / 8.0
            elif j == h - 1:
                gy[j, i] = (tx[h - 1, i] - tx[h - 2, i]) / 8.0
            else:
                gy[j, i] = (tx[j + 1, i] - tx[j - 1, i]) / 8.0
    return gx, gy


def canny_reference(
    values: np.ndarray,
    mask: np.ndarray,
    d_max: float,
    sigma: float = 1.0,
    lo: float = 0.05,
    hi: float = 0.10,
) -> np.ndarray:
    """Loop-based Canny depth boundaries on a panorama (wrapped columns).

    Pipeline: normalize by d_max (invalid pixels as 0), Gaussian smoothing,
    Sobel, non-maximum suppression with the gradient direction quantized into
    four sectors at 22.5/67.5 degrees, then hysteresis by flood fill from
    strong pixels over 8-connected weak pixels, wrapping the seam.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    h, w = values.shape
    norm = np.empty((h, w))
    for j in range(h):
        for i in range(w):
            norm[j, i] = (values[j, i] if mask[j, i] else 0.0) / d_max

    smoothed = smooth_reference(norm, sigma)
    gx, gy = sobel_reference(smoothed)
    mag = np.hypot(gx, gy)

    tan_lo = math.sqrt(2.0) - 1.0
    tan_hi = math.sqrt(2.0) + 1.0
    thin = np.zeros((h, w), dtype=bool)
    for j in range(h):
        for i in range(w):
            ax = abs(gx[j, i])
            ay = abs(gy[j, i])
            if ay < tan_lo * ax:
                dj, di = 0, 1
            elif ay >= tan_hi * ax:
                dj, di = 1, 0
            elif gx[j, i] * gy[j, i] > 0.0:
                dj, di = 1, 1
            else:
                dj, di = 1, -1
            nxt = mag[_clamp(j + dj, h), (i + di) % w]
            prv = mag[_clamp(j - dj, h), (i - di) % w]
            thin[j, i] = mag[j, i] > prv and mag[j, i] >= nxt

    weak = thin & (mag >= lo)
    strong = thin & (mag >= hi)
    edges = np.zeros((h, w), dtype=bool)
    stack = [(int(j), int(i)) for j, i in zip(*np.nonzero(strong))]
    for j, i in stack:
        edges[j, i] = True
    while stack:
        j, i = stack.pop()
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                jj = j + dj
                ii = (i + di) % w
                if 0 <= jj < h and weak[jj, ii] and not edges[jj, ii]:
                    edges[jj, ii] = True
                    stack.append((jj, ii))
    return edges & mask


def brute_wrapped_edt(edges: np.ndarray) -> np.ndarray:
    """All-pairs Euclidean distance to the nearest edge, columns wrapped.

    Exact: squared distances are integers, minimized in integer arithmetic,
    and only the final minimum takes a square root. Empty maps give +inf.
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    out = np.full((h, w), np.inf)
    ej, ei = np.nonzero(edges)
    if len(ej) == 0:
        return out
    for j in range(h):
        for i in range(w):
            dj = ej - j
            di = np.abs(ei - i)
            di = np.minimum(di, w - di)
            out[j, i] = math.sqrt(int(np.min(dj * dj + di * di)))
    return out


def brute_nearest(queries: np.ndarray, points: np.ndarray):
    """All-pairs nearest neighbor: returns (indices, distances)."""
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d2, axis=1)
    return idx, np.sqrt(d2[np.arange(len(queries)), idx])


def dense_triangle_distance(p, a, b, c, n: int = 80):
    """Min distance from p to a dense barycentric sampling of triangle abc.

    Returns (distance, covering_radius): the sampled minimum overestimates
    the true distance d by at most sqrt(d^2 + covering_radius^2) - d.
    """
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    best = math.inf
    for u in np.linspace(0.0, 1.0, n):
        vmax = 1.0 - u
        steps = max(2, int(round(vmax * n)) + 1)
        for v in np.linspace(0.0, vmax, steps):
            q = a + u * (b - a) + v * (c - a)
            best = min(best, float(np.linalg.norm(p - q)))
    edge = max(np.linalg.norm(b - a), np.linalg.norm(c - a), np.linalg.norm(c - b))
    return best, float(edge) / (n - 1)


def direct_reference(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> dict:
    """Loop-and-fsum reference for the direct error metrics and accuracies."""
    sq, sq_log, abs_rel, sq_rel, ratios = [], [], [], [], []
    h, w = gt.shape
    for j in range(h):
        for i in range(w):
            if not mask[j, i]:
                continue
            p = float(pred[j, i])
            g = float(gt[j, i])
            e = p - g
            sq.append(e * e)
            sq_log.append((math.log(p) - math.log(g)) ** 2)
            abs_rel.append(abs(e) / g)
            sq_rel.append(e * e / g)
            ratios.append(max(p / g, g / p))
    n = len(sq)
    return {
        "n": n,
        "rmse": math.sqrt(math.fsum(sq) / n),
        "rmsle": math.sqrt(math.fsum(sq_log) / n),
        "abs_rel": math.fsum(abs_rel) / n,
        "sq_rel": math.fsum(sq_rel) / n,
        "ratios": ratios,
    }


def delta_of(ratios: list, t: float) -> float:
    return sum(1 for x in ratios if x < t) / len(ratios)
