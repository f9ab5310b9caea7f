"""Reference supervision losses with analytic gradients.

Every loss returns its scalar value together with the exact gradient with
respect to the predicted depth grid, derived by hand (no autodiff anywhere).
Gradients are zero at masked pixels and at pixels no stencil touches. These
implementations favor clarity over speed; they are the ground truth other
implementations can be validated against, e.g. with
:func:`finite_difference_gradient`.

Conventions shared by all losses: ``pred`` and ``gt`` are (H, W) depth grids
in meters, ``mask`` marks pixels that participate, and means run over
participating elements (pixels, stencils, or triplets as appropriate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import direction_grid
from .metrics.geom import normal_stencil

BERHU_FRACTION = 0.2
GRAD_SCALES = 4


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray


def _prep(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ValueError("pred, gt, and mask must share a shape")
    if not mask.any():
        raise ValueError("mask selects no pixels")
    return pred, gt, mask


def depth_l1(pred, gt, mask) -> LossResult:
    """Mean absolute depth error. Gradient is sign(error)/N (0 at the kink)."""
    pred, gt, mask = _prep(pred, gt, mask)
    err = np.where(mask, pred - gt, 0.0)
    n = mask.sum()
    grad = np.sign(err) / n
    return LossResult(value=float(np.abs(err).sum() / n), gradient=grad)


def depth_log_l1(pred, gt, mask) -> LossResult:
    """Mean absolute log-depth error; gradient sign(log error)/(N * pred)."""
    pred, gt, mask = _prep(pred, gt, mask)
    if np.any(pred[mask] <= 0) or np.any(gt[mask] <= 0):
        raise ValueError("log loss needs strictly positive depths at valid pixels")
    err = np.where(mask, np.log(np.where(mask, pred, 1.0)) - np.log(np.where(mask, gt, 1.0)), 0.0)
    n = mask.sum()
    grad = np.where(mask, np.sign(err) / (n * np.where(mask, pred, 1.0)), 0.0)
    return LossResult(value=float(np.abs(err).sum() / n), gradient=grad)


def berhu(pred, gt, mask) -> LossResult:
    """Reverse Huber loss: L1 up to a cutoff, scaled quadratic beyond.

    The cutoff is a fixed fraction of the largest absolute error in the
    batch, c = 0.2 * max|err|, and is treated as a constant when
    differentiating (the dependence of c on the argmax pixel is ignored, the
    usual convention for this loss).
    """
    pred, gt, mask = _prep(pred, gt, mask)
    err = np.where(mask, pred - gt, 0.0)
    n = mask.sum()
    c = BERHU_FRACTION * np.abs(err).max()
    if c == 0.0:
        return LossResult(value=0.0, gradient=np.zeros_like(err))
    small = np.abs(err) <= c
    per_pixel = np.where(small, np.abs(err), (err * err + c * c) / (2.0 * c))
    per_pixel = np.where(mask, per_pixel, 0.0)
    grad = np.where(small, np.sign(err), err / c) / n
    grad = np.where(mask, grad, 0.0)
    return LossResult(value=float(per_pixel.sum() / n), gradient=grad)


# ---------------------------------------------------------------------------
# Multi-scale gradient matching


def _pool2(values: np.ndarray, valid: np.ndarray):
    """2x2 average pool; a pooled pixel is valid only if all four children are."""
    h, w = values.shape
    v4 = valid.reshape(h // 2, 2, w // 2, 2)
    pooled_valid = v4.all(axis=(1, 3))
    pooled = values.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    return np.where(pooled_valid, pooled, 0.0), pooled_valid


def _scale_gradient_terms(r: np.ndarray, valid: np.ndarray):
    """Sum of |forward differences| of r and its gradient at one scale.

    Horizontal differences wrap around the seam; vertical ones stop at the
    bottom row. Only differences between two valid pixels count.
    """
    vx = valid & np.roll(valid, -1, axis=1)
    dx = np.where(vx, np.roll(r, -1, axis=1) - r, 0.0)
    vy = np.zeros_like(valid)
    vy[:-1] = valid[1:] & valid[:-1]
    dy = np.zeros_like(r)
    dy[:-1] = r[1:] - r[:-1]
    dy = np.where(vy, dy, 0.0)

    n = int(vx.sum() + vy.sum())
    total = float(np.abs(dx).sum() + np.abs(dy).sum())

    sx = np.sign(dx)
    sy = np.sign(dy)
    grad = np.roll(sx, 1, axis=1) - sx
    grad[1:] += sy[:-1]
    grad -= sy
    return total, n, grad


def multiscale_gradient(pred, gt, mask, scales: int = GRAD_SCALES) -> LossResult:
    """Gradient-matching loss over an average-pooled pyramid.

    At each of ``scales`` resolutions (full plus repeated 2x2 pooling) the
    loss takes the mean absolute forward difference of the residual
    pred - gt, horizontal and vertical differences pooled into one mean; the
    total is the sum over scales. Matching residual gradients preserves depth
    discontinuities without penalizing a global offset at any scale.
    """
    pred, gt, mask = _prep(pred, gt, mask)
    r = np.where(mask, pred - gt, 0.0)
    valid = mask

    values, counts, grads, valids = [], [], [], []
    for s in range(scales):
        total, n, grad = _scale_gradient_terms(r, valid)
        values.append(total)
        counts.append(n)
        grads.append(grad)
        valids.append(valid)
        if s + 1 < scales:
            if r.shape[0] % 2 or r.shape[1] % 2:
                break  # odd grid: no further scale
            r, valid = _pool2(r, valid)

    value = sum(v / n for v, n in zip(values, counts) if n)
    # Backpropagate through the pooling chain: each pooled pixel spreads its
    # gradient equally over its four (valid) children.
    acc = None
    for grad, n, valid_s in zip(reversed(grads), reversed(counts), reversed(valids)):
        g = grad / n if n else np.zeros_like(grad)
        if acc is not None:
            up = np.repeat(np.repeat(acc, 2, axis=0), 2, axis=1) / 4.0
            g = g + np.where(valid_s, up, 0.0)
        acc = g
    return LossResult(value=float(value), gradient=np.where(mask, acc, 0.0))


# ---------------------------------------------------------------------------
# Surface orientation (cosine) loss


def normal_cosine(pred, gt, mask) -> LossResult:
    """Mean cosine dissimilarity, 1 - <n_pred, n_gt>, of lifted surface normals.

    Normals come from the central-difference cross stencil on the lifted
    points. The gradient chains through normalization, the cross product, and
    the lift onto the four stencil neighbors of each participating pixel; the
    camera-facing sign flip is locally constant and treated as such.
    """
    pred, gt, mask = _prep(pred, gt, mask)
    h, w = pred.shape
    dirs = direction_grid(w, h)
    sp = normal_stencil(np.where(mask, pred, 0.0)[..., None] * dirs, mask)
    sg = normal_stencil(np.where(mask, gt, 0.0)[..., None] * dirs, mask)
    joint = sp.valid & sg.valid
    n = int(joint.sum())
    if n == 0:
        raise ValueError("no pixel has valid normals in both maps")
    np_, ng = sp.normals, sg.normals
    value = float(np.sum(np.where(joint, 1.0 - (np_ * ng).sum(-1), 0.0)) / n)

    # d loss / d cross = -(sign/(N*|c|)) * (n_g - n_hat (n_hat . n_g)), with
    # n_hat the unflipped unit cross product.
    n_hat = np_ * sp.sign[..., None]  # undo the flip
    coef = np.where(joint, -sp.sign / (n * sp.cross_norm_safe), 0.0)
    l_c = coef[..., None] * (ng - n_hat * (n_hat * ng).sum(-1, keepdims=True))
    gu = np.cross(sp.v, l_c)
    gv = np.cross(l_c, sp.u)

    grad = (np.roll(gu, 1, axis=1) * dirs).sum(-1)  # east neighbor: P(i+1) gets +dir*gu
    grad -= (np.roll(gu, -1, axis=1) * dirs).sum(-1)  # west neighbor
    grad[1:] += (gv[:-1] * dirs[1:]).sum(-1)  # south neighbor (next row)
    grad[:-1] -= (gv[1:] * dirs[:-1]).sum(-1)  # north neighbor
    return LossResult(value=value, gradient=np.where(mask, grad, 0.0))


# ---------------------------------------------------------------------------
# Virtual normal loss


@dataclass
class VnlConfig:
    """Triplet sampling controls for the virtual normal loss.

    Triplets are accepted when, measured on the lifted ground truth, all
    pairwise distances reach ``min_pair_distance`` (meters) and every
    triangle angle reaches ``min_angle_deg``; both guards keep the virtual
    plane well conditioned.
    """

    n_triplets: int = 2000
    min_pair_distance: float = 0.3
    min_angle_deg: float = 15.0
    seed: int = 0
    max_rounds: int = 200


def sample_triplets(gt, mask, config: VnlConfig = VnlConfig()) -> np.ndarray:
    """Rejection-sample pixel triplets for the virtual normal loss.

    Returns a (T, 3) array of flat pixel indices, T <= config.n_triplets
    (fewer only when the scene cannot supply enough well-conditioned
    triplets). Sampling depends only on the ground truth, the mask, and the
    seed, never on the prediction, so it is stable under prediction changes.
    """
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    flat = np.flatnonzero(mask)
    if len(flat) < 3:
        raise ValueError("need at least three valid pixels to sample triplets")
    h, w = gt.shape
    dirs = direction_grid(w, h).reshape(-1, 3)
    points = gt.ravel()[flat, None] * dirs[flat]

    rng = np.random.default_rng(config.seed)
    min_cos_ok = np.cos(np.radians(config.min_angle_deg))
    batch = max(1024, 2 * config.n_triplets)
    accepted = []
    total = 0
    for _ in range(config.max_rounds):
        cand = rng.integers(0, len(flat), size=(batch, 3))
        a, b, c = points[cand[:, 0]], points[cand[:, 1]], points[cand[:, 2]]
        ab, bc, ca = b - a, c - b, a - c
        lab = np.linalg.norm(ab, axis=1)
        lbc = np.linalg.norm(bc, axis=1)
        lca = np.linalg.norm(ca, axis=1)
        ok = (
            (cand[:, 0] != cand[:, 1])
            & (cand[:, 1] != cand[:, 2])
            & (cand[:, 0] != cand[:, 2])
            & (lab >= config.min_pair_distance)
            & (lbc >= config.min_pair_distance)
            & (lca >= config.min_pair_distance)
        )
        # every interior angle >= min_angle <=> every cos(angle) <= cos(min)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_a = ((ab) * (-ca)).sum(1) / (lab * lca)
            cos_b = ((-ab) * (bc)).sum(1) / (lab * lbc)
            cos_c = ((ca) * (-bc)).sum(1) / (lca * lbc)
        ok &= (cos_a <= min_cos_ok) & (cos_b <= min_cos_ok) & (cos_c <= min_cos_ok)
        if ok.any():
            accepted.append(cand[ok])
            total += int(ok.sum())
        if total >= config.n_triplets:
            break
    if not accepted:
        raise ValueError("triplet sampling found no well-conditioned triplets")
    trip = np.concatenate(accepted, axis=0)[: config.n_triplets]
    return flat[trip]


def virtual_normal(pred, gt, mask, config: VnlConfig = VnlConfig(), triplets=None) -> LossResult:
    """Virtual normal loss: L1 gap between triplet plane normals.

    For each sampled pixel triplet, the oriented unit normal of the plane
    through the three lifted points is computed on both depth maps, and the
    loss is the mean L1 norm of their difference. Precomputed ``triplets``
    (from :func:`sample_triplets`) can be passed to amortize sampling.
    """
    pred, gt, mask = _prep(pred, gt, mask)
    if triplets is None:
        triplets = sample_triplets(gt, mask, config)
    h, w = pred.shape
    dirs = direction_grid(w, h).reshape(-1, 3)
    ta, tb, tc = triplets[:, 0], triplets[:, 1], triplets[:, 2]

    def plane_normals(values):
        v = np.where(mask, values, 0.0).ravel()
        pa = v[ta, None] * dirs[ta]
        pb = v[tb, None] * dirs[tb]
        pc = v[tc, None] * dirs[tc]
        u_ = pb - pa
        w_ = pc - pa
        cr = np.cross(u_, w_)
        nrm = np.linalg.norm(cr, axis=1)
        return pa, u_, w_, cr, nrm

    _, u_p, w_p, c_p, n_p = plane_normals(pred)
    _, _, _, c_g, n_g = plane_normals(gt)
    live = (n_p > 1e-12) & (n_g > 1e-12)  # triplets degenerate on either map drop out
    if not live.any():
        raise ValueError("all triplets are degenerate on the prediction")
    u_p, w_p, c_p, n_p = u_p[live], w_p[live], c_p[live], n_p[live]
    c_g, n_g = c_g[live], n_g[live]
    ta_l, tb_l, tc_l = ta[live], tb[live], tc[live]
    t = int(live.sum())

    np_u = c_p / n_p[:, None]
    ng_u = c_g / n_g[:, None]
    diff = np_u - ng_u
    value = float(np.abs(diff).sum() / t)

    s3 = np.sign(diff)
    l_c = (s3 - np_u * (np_u * s3).sum(1, keepdims=True)) / (t * n_p[:, None])
    gu = np.cross(w_p, l_c)
    gw = np.cross(l_c, u_p)

    grad = np.zeros(h * w, dtype=np.float64)
    np.add.at(grad, ta_l, (-(gu + gw) * dirs[ta_l]).sum(1))
    np.add.at(grad, tb_l, (gu * dirs[tb_l]).sum(1))
    np.add.at(grad, tc_l, (gw * dirs[tc_l]).sum(1))
    grad = grad.reshape(h, w)
    return LossResult(value=value, gradient=np.where(mask, grad, 0.0))


# ---------------------------------------------------------------------------
# Composition


def combine(results, weights=None) -> LossResult:
    """Weighted sum of loss results; weights default to 1 for every term."""
    results = list(results)
    if not results:
        raise ValueError("no loss terms to combine")
    if weights is None:
        weights = [1.0] * len(results)
    if len(weights) != len(results):
        raise ValueError("need one weight per loss term")
    value = sum(w * r.value for w, r in zip(weights, results))
    gradient = sum(w * r.gradient for w, r in zip(weights, results))
    return LossResult(value=float(value), gradient=gradient)


def combined(pred, gt, mask) -> LossResult:
    """Depth L1 + multi-scale gradient matching + normal cosine, unity weights."""
    return combine([
        depth_l1(pred, gt, mask),
        multiscale_gradient(pred, gt, mask),
        normal_cosine(pred, gt, mask),
    ])


def combined_with_virtual_normal(pred, gt, mask, config: VnlConfig = VnlConfig()) -> LossResult:
    """The combined objective extended with the virtual normal term."""
    return combine([
        depth_l1(pred, gt, mask),
        multiscale_gradient(pred, gt, mask),
        normal_cosine(pred, gt, mask),
        virtual_normal(pred, gt, mask, config),
    ])


def finite_difference_gradient(loss_fn, pred, gt, mask, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a loss over the valid pixels.

    Intended for validating analytic gradients; O(N) loss evaluations, so use
    small grids.
    """
    pred = np.asarray(pred, dtype=np.float64)
    grad = np.zeros_like(pred)
    for j, i in zip(*np.nonzero(mask)):
        bumped = pred.copy()
        bumped[j, i] = pred[j, i] + step
        hi = loss_fn(bumped, gt, mask).value
        bumped[j, i] = pred[j, i] - step
        lo = loss_fn(bumped, gt, mask).value
        grad[j, i] = (hi - lo) / (2.0 * step)
    return grad
