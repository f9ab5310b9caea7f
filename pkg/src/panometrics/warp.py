"""Warping depth panoramas by spherical displacement fields.

A displacement field stores per-pixel offsets ``(dphi, dtheta)`` in radians.
Warping samples the source map at the displaced coordinates: longitude wraps
around the seam (a displaced coordinate is reduced into one period before
sampling), latitude clamps at the poles. Sampling is bilinear with an exact
fast path: coordinates within a tiny snap distance of a pixel center read
that pixel bit-for-bit, so a zero field is a true identity and fields that
shift by whole columns permute columns exactly.

Field file format (".dfield"): the 8-byte magic ``PANODFLD``, two little-
endian uint32 (width, height), then two planes of little-endian float32
(the dphi plane followed by the dtheta plane), row-major from the top row.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .depthio import DepthPanorama, DepthIOError, MalformedDepthFile
from .sphere import pixel_centers, sample_bilinear_wrapped, spherical_to_pixel

FIELD_MAGIC = b"PANODFLD"
# Sampling coordinates this close to a pixel center (in pixels) snap onto it,
# absorbing the rounding of the angle round-trip.
SNAP_EPS = 1e-6


def validate_field(field: np.ndarray, width: int, height: int) -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.shape != (height, width, 2):
        raise ValueError(
            f"displacement field must have shape ({height}, {width}, 2), got {field.shape}"
        )
    if not np.all(np.isfinite(field)):
        raise ValueError("displacement field must be finite")
    return field


def apply_displacement(d: DepthPanorama, field: np.ndarray) -> DepthPanorama:
    """Resample a depth panorama through a displacement field.

    Output pixel (j, i) reads the source at ``(phi_i + dphi, theta_j +
    dtheta)`` wrapped in longitude and clamped in latitude. A warped pixel is
    valid only when every source pixel its bilinear footprint touches is
    valid, so invalidity never bleeds in silently.
    """
    field = validate_field(field, d.width, d.height)
    phi, theta = pixel_centers(d.width, d.height)
    u, v = spherical_to_pixel(phi + field[..., 0], theta + field[..., 1], d.width, d.height)

    u_snapped = np.rint(u)
    u = np.where(np.abs(u - u_snapped) < SNAP_EPS, u_snapped, u)
    v_snapped = np.rint(v)
    v = np.where(np.abs(v - v_snapped) < SNAP_EPS, v_snapped, v)

    values = sample_bilinear_wrapped(np.where(d.mask, d.values, 0.0), u, v)
    coverage = sample_bilinear_wrapped(d.mask.astype(np.float64), u, v)
    mask = coverage >= 1.0 - 1e-9
    return DepthPanorama(values=np.where(mask, values, 0.0), mask=mask, d_max=d.d_max)


def identity_field(width: int, height: int) -> np.ndarray:
    return np.zeros((height, width, 2), dtype=np.float64)


def column_shift_field(width: int, height: int, columns: int = 1) -> np.ndarray:
    """A constant-longitude field displacing by a whole number of columns."""
    field = identity_field(width, height)
    field[..., 0] = 2.0 * np.pi * columns / width
    return field


def write_field(path, field: np.ndarray) -> None:
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ValueError("expected an (H, W, 2) displacement field")
    h, w = field.shape[:2]
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(field[..., 0].astype("<f4").tobytes())
        f.write(field[..., 1].astype("<f4").tobytes())


def read_field(path) -> np.ndarray:
    data = Path(path).read_bytes()
    head = len(FIELD_MAGIC) + 8
    if len(data) < head or data[: len(FIELD_MAGIC)] != FIELD_MAGIC:
        raise MalformedDepthFile(f"{path}: not a displacement field file")
    w, h = struct.unpack("<II", data[len(FIELD_MAGIC) : head])
    expected = head + 2 * w * h * 4
    if len(data) != expected:
        raise MalformedDepthFile(
            f"{path}: field payload is {len(data) - head} bytes, expected {2 * w * h * 4}"
        )
    plane = w * h * 4
    dphi = np.frombuffer(data[head : head + plane], dtype="<f4").reshape(h, w)
    dtheta = np.frombuffer(data[head + plane :], dtype="<f4").reshape(h, w)
    return np.stack([dphi, dtheta], axis=-1).astype(np.float64)
