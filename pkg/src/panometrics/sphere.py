"""Equirectangular sphere geometry.

Conventions used throughout the package:

* A panorama is an ``(H, W)`` grid with ``W == 2 * H`` (full 360 x 180 view).
* Pixel centers sit at half-integer offsets: column ``i`` maps to longitude
  ``phi = 2*pi*(i + 0.5)/W - pi`` and row ``j`` to latitude
  ``theta = pi*(j + 0.5)/H - pi/2``, so ``phi`` spans ``(-pi, pi)`` and
  ``theta`` spans ``(-pi/2, pi/2)`` exclusive of the poles.
* The unit direction for ``(phi, theta)`` is
  ``(cos(theta)*sin(phi), sin(theta), cos(theta)*cos(phi))``:
  x points right, y up, z forward (phi = 0, theta = 0 looks down +z).
* The grid wraps horizontally (longitude is periodic) and clamps vertically
  (latitude does not wrap across the poles).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


def check_equirect_dims(width: int, height: int) -> None:
    """Raise ValueError unless (width, height) is a valid 2:1 equirect grid."""
    if width <= 0 or height <= 0:
        raise ValueError(f"grid dimensions must be positive, got {width}x{height}")
    if width != 2 * height:
        raise ValueError(
            f"equirectangular grid requires width == 2 * height, got {width}x{height}"
        )


def pixel_to_spherical(i, j, width: int, height: int):
    """Map pixel-center coordinates to spherical (phi, theta).

    Args:
        i: column index (scalar or array), integer or fractional.
        j: row index (scalar or array).
        width, height: grid dimensions (width == 2 * height).

    Returns:
        ``(phi, theta)`` in radians with phi in (-pi, pi), theta in
        (-pi/2, pi/2). Row 0 is the most negative latitude.

    Raises:
        ValueError: if an index falls outside ``[0, width) x [0, height)``.
    """
    check_equirect_dims(width, height)
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    if np.any(i < 0) or np.any(i >= width) or np.any(j < 0) or np.any(j >= height):
        raise ValueError("pixel index out of range for grid")
    phi = TWO_PI * (i + 0.5) / width - np.pi
    theta = np.pi * (j + 0.5) / height - np.pi / 2.0
    return phi, theta


def pixel_centers(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (phi, theta) grids of shape (height, width) for all pixel centers."""
    check_equirect_dims(width, height)
    ii, jj = np.meshgrid(np.arange(width), np.arange(height))
    return pixel_to_spherical(ii, jj, width, height)


def direction(phi, theta) -> np.ndarray:
    """Unit view direction(s) for spherical coordinates, stacked on the last axis."""
    phi = np.asarray(phi, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    cos_t = np.cos(theta)
    return np.stack(
        [cos_t * np.sin(phi), np.sin(theta), cos_t * np.cos(phi)], axis=-1
    )


@lru_cache(maxsize=32)
def _direction_grid_cached(width: int, height: int) -> np.ndarray:
    phi, theta = pixel_centers(width, height)
    grid = direction(phi, theta)
    grid.setflags(write=False)
    return grid


def direction_grid(width: int, height: int) -> np.ndarray:
    """Per-pixel unit directions as an (height, width, 3) array.

    The array is cached per resolution and returned read-only; copy before
    mutating.
    """
    return _direction_grid_cached(width, height)


def spherical_to_pixel(phi, theta, width: int, height: int):
    """Map spherical coordinates to continuous pixel coordinates (u, v).

    Inverse of :func:`pixel_to_spherical` for in-range inputs; longitude is
    reduced modulo 2*pi so any finite phi is accepted, and latitude is clamped
    to [-pi/2, pi/2]. ``u`` lies in [0, width), ``v`` in [-0.5, height - 0.5].
    """
    check_equirect_dims(width, height)
    tau = wrap_longitude(phi)
    theta = np.clip(np.asarray(theta, dtype=np.float64), -np.pi / 2.0, np.pi / 2.0)
    # tau is in (0, 2*pi] with tau = pi at phi = 0, hence the half-width shift.
    u = np.mod(width * tau / TWO_PI + width / 2.0 - 0.5, width)
    v = height * (theta + np.pi / 2.0) / np.pi - 0.5
    return u, v


@lru_cache(maxsize=32)
def _spherical_weights_cached(width: int, height: int) -> np.ndarray:
    _, theta = pixel_centers(width, height)
    w = np.cos(theta)
    w /= w.sum()
    w.setflags(write=False)
    return w


def spherical_weights(width: int, height: int) -> np.ndarray:
    """Solid-angle pixel weights for an equirect grid, normalized to sum to 1.

    The solid angle of an equirect pixel is proportional to cos(latitude), so
    weights depend on the row only. Poles are never sampled exactly (pixel
    centers are offset by half a pixel), hence all weights are positive. The
    array is cached per resolution and returned read-only.
    """
    return _spherical_weights_cached(width, height)


def wrap_longitude(phi):
    """Wrap longitude into the half-open interval (0, 2*pi].

    Computed as ``atan2(-sin(phi), -cos(phi)) + pi`` which is exactly periodic
    under phi -> phi + 2*pi*k and keeps the seam at the antimeridian.

    Raises:
        ValueError: if phi contains non-finite values.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if not np.all(np.isfinite(phi)):
        raise ValueError("longitude must be finite")
    tau = np.arctan2(-np.sin(phi), -np.cos(phi)) + np.pi
    # atan2(-0.0, -1.0) = -pi makes phi = +0.0 land on tau = 0; the interval
    # is half-open at 0, so that single value belongs at 2*pi.
    return np.where(tau == 0.0, TWO_PI, tau)


def sample_bilinear_wrapped(grid: np.ndarray, u, v) -> np.ndarray:
    """Bilinearly sample a scalar grid at continuous pixel coordinates.

    ``u`` wraps modulo the grid width (horizontal periodicity) and ``v`` is
    clamped to ``[0, H - 1]``: the poles do not wrap. Integer coordinates land
    exactly on pixel values.
    """
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("expected a non-empty 2-d grid")
    h, w = grid.shape
    u = np.mod(np.asarray(u, dtype=np.float64), w)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, float(h - 1))
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    fu = u - i0
    fv = v - j0
    i0 = np.mod(i0, w)
    i1 = np.mod(i0 + 1, w)
    j1 = np.minimum(j0 + 1, h - 1)
    top = grid[j0, i0] * (1.0 - fu) + grid[j0, i1] * fu
    bot = grid[j1, i0] * (1.0 - fu) + grid[j1, i1] * fu
    return top * (1.0 - fv) + bot * fv


def circular_pad(grid: np.ndarray, pad: int) -> np.ndarray:
    """Pad a grid horizontally with wrapped columns.

    Returns an ``(H, W + 2*pad)`` array whose left margin holds the last
    ``pad`` source columns and right margin the first ``pad``.

    Raises:
        ValueError: unless ``0 < pad <= W``.
    """
    grid = np.asarray(grid)
    if grid.ndim < 2:
        raise ValueError("expected at least a 2-d grid")
    w = grid.shape[1]
    if not 0 < pad <= w:
        raise ValueError(f"pad must be in (0, {w}], got {pad}")
    return np.concatenate([grid[:, -pad:], grid, grid[:, :pad]], axis=1)
