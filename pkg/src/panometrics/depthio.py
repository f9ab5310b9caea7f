"""Depth map containers, file formats, and sample manifests.

Supported depth formats:

* PFM (grayscale ``Pf``): float32, stored bottom row first; a negative scale
  in the header marks little-endian data. Lossless for float32 values.
* 16-bit PNG: integer counts times a metric ``scale`` factor (meters per
  count), e.g. scale = 1/512 for data stored in 512ths of a meter.
* Raw float32: headerless little-endian pixels, row-major from the top row;
  width and height must come from the manifest or caller.

Ground truth and predictions are treated asymmetrically when loading:
ground-truth pixels outside ``(0, d_max]`` (or non-finite) are masked out,
while prediction values are clamped into ``[PRED_CLAMP_MIN, d_max]`` and only
non-finite entries are masked. That keeps evaluation defined wherever the
ground truth is trustworthy, regardless of how wild the prediction is.
"""

from __future__ import annotations

import concurrent.futures
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .sphere import check_equirect_dims

DEFAULT_D_MAX = 10.0
PRED_CLAMP_MIN = 1e-3
MAX_INVALID_FRACTION = 0.10

FORMATS = ("pfm", "png16", "raw")


class DepthIOError(Exception):
    """Base class for depth file problems."""


class MalformedDepthFile(DepthIOError):
    """Header or payload does not parse as the claimed format."""


class BadAspectRatio(DepthIOError):
    """Depth map is not a 2:1 equirectangular grid."""


@dataclass
class DepthPanorama:
    """An equirectangular depth map plus its validity mask.

    ``values`` is (H, W) float64 in meters, ``mask`` marks pixels that carry
    usable depth, and ``d_max`` is the sensor/protocol range cap used for
    normalization (e.g. by edge detection).
    """

    values: np.ndarray
    mask: np.ndarray
    d_max: float = DEFAULT_D_MAX

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2:
            raise BadAspectRatio(f"depth map must be 2-d, got shape {self.values.shape}")
        h, w = self.values.shape
        try:
            check_equirect_dims(w, h)
        except ValueError as exc:
            raise BadAspectRatio(str(exc)) from exc
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape must match values shape")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def invalid_fraction(self) -> float:
        """Fraction of pixels with no usable depth, in [0, 1]."""
        return 1.0 - self.mask.sum() / self.mask.size

    @classmethod
    def from_values(
        cls,
        values: np.ndarray,
        d_max: float = DEFAULT_D_MAX,
        clamp: bool = False,
    ) -> "DepthPanorama":
        """Build a panorama from raw depth values.

        With ``clamp=False`` (ground-truth semantics) pixels that are
        non-finite, non-positive, or beyond ``d_max`` are masked invalid.
        With ``clamp=True`` (prediction semantics) finite values are clamped
        into ``[PRED_CLAMP_MIN, d_max]`` and only non-finite pixels are masked.
        """
        values = np.asarray(values, dtype=np.float64)
        finite = np.isfinite(values)
        if clamp:
            clamped = np.clip(np.where(finite, values, 0.0), PRED_CLAMP_MIN, d_max)
            return cls(values=clamped, mask=finite, d_max=d_max)
        mask = finite & (values > 0.0) & (values <= d_max)
        return cls(values=np.where(mask, values, 0.0), mask=mask, d_max=d_max)


# ---------------------------------------------------------------------------
# PFM


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM file into a float32 (H, W) array, top row first."""
    data = Path(path).read_bytes()
    # Header: three whitespace-terminated tokens (magic, "W H", scale).
    m = re.match(rb"(Pf|PF)\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if m is None:
        raise MalformedDepthFile(f"{path}: not a PFM header")
    if m.group(1) == b"PF":
        raise MalformedDepthFile(f"{path}: color PFM not supported for depth")
    width, height = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    payload = data[m.end() :]
    expected = width * height * 4
    if len(payload) < expected:
        raise MalformedDepthFile(
            f"{path}: truncated PFM payload ({len(payload)} < {expected} bytes)"
        )
    pixels = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    return pixels[::-1].astype(np.float32)  # PFM stores the bottom row first


def write_pfm(path, values: np.ndarray) -> None:
    """Write an (H, W) array as little-endian grayscale PFM (float32)."""
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError("PFM writer expects a 2-d array")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(values[::-1].astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# 16-bit PNG


def read_png16(path, scale: float) -> np.ndarray:
    """Read a 16-bit grayscale PNG and convert counts to meters via scale."""
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise MalformedDepthFile(f"{path}: cannot read PNG ({exc})") from exc
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MalformedDepthFile(f"{path}: expected single-channel PNG")
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise MalformedDepthFile(f"{path}: unsupported PNG pixel type {arr.dtype}")
    return arr.astype(np.float64) * float(scale)


def write_png16(path, values: np.ndarray, scale: float) -> None:
    """Write meters as 16-bit counts (meters / scale, rounded, clipped)."""
    counts = np.rint(np.asarray(values, dtype=np.float64) / float(scale))
    counts = np.clip(counts, 0, 65535).astype(np.uint16)
    Image.fromarray(counts).save(path)


# ---------------------------------------------------------------------------
# Raw float32


def read_rawf32(path, width: int, height: int) -> np.ndarray:
    """Read headerless little-endian float32 pixels, row-major from the top."""
    data = Path(path).read_bytes()
    expected = width * height * 4
    if len(data) != expected:
        raise MalformedDepthFile(
            f"{path}: raw float32 payload is {len(data)} bytes, expected {expected}"
        )
    return np.frombuffer(data, dtype="<f4").reshape(height, width).copy()


def write_rawf32(path, values: np.ndarray) -> None:
    np.asarray(values, dtype="<f4").tofile(path)


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return "pfm"
    if suffix == ".png":
        return "png16"
    if suffix in (".raw", ".f32", ".bin"):
        return "raw"
    raise DepthIOError(f"cannot infer depth format from {path}")


def load_depth(
    path,
    fmt: str | None = None,
    scale: float | None = None,
    width: int | None = None,
    height: int | None = None,
    d_max: float = DEFAULT_D_MAX,
    clamp: bool = False,
) -> DepthPanorama:
    """Load a depth map from disk into a DepthPanorama.

    Args:
        path: file to read.
        fmt: "pfm", "png16" or "raw"; inferred from the extension when None.
        scale: meters per count, required for png16.
        width, height: grid size, required for raw.
        d_max: protocol range cap.
        clamp: prediction semantics (see :meth:`DepthPanorama.from_values`).
    """
    fmt = fmt or infer_format(path)
    if fmt == "pfm":
        values = read_pfm(path)
    elif fmt == "png16":
        if scale is None:
            raise DepthIOError(f"{path}: png16 depth needs a scale factor")
        values = read_png16(path, scale)
    elif fmt == "raw":
        if width is None or height is None:
            raise DepthIOError(f"{path}: raw depth needs explicit width/height")
        values = read_rawf32(path, width, height)
    else:
        raise DepthIOError(f"unknown depth format {fmt!r}")
    return DepthPanorama.from_values(values, d_max=d_max, clamp=clamp)


# ---------------------------------------------------------------------------
# Manifests


@dataclass
class SampleRecord:
    """One line of a JSON Lines manifest."""

    depth: str
    id: str | None = None
    color: str | None = None
    split: str | None = None
    format: str | None = None
    scale: float | None = None
    width: int | None = None
    height: int | None = None

    def to_json(self) -> str:
        items = {k: v for k, v in self.__dict__.items() if v is not None}
        return json.dumps(items, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        try:
            items = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DepthIOError(f"bad manifest line: {exc}") from exc
        if not isinstance(items, dict) or "depth" not in items:
            raise DepthIOError(f"manifest record needs a 'depth' path: {line!r}")
        known = {k: items[k] for k in cls.__dataclass_fields__ if k in items}
        return cls(**known)


@dataclass
class SampleManifest:
    """An ordered list of samples, optionally tagged with a resolution."""

    records: list[SampleRecord] = field(default_factory=list)
    resolution: str | None = None  # e.g. "512x256", purely informational

    def __len__(self) -> int:
        return len(self.records)

    def load(self, index: int, d_max: float = DEFAULT_D_MAX, clamp: bool = False) -> DepthPanorama:
        r = self.records[index]
        return load_depth(
            r.depth, fmt=r.format, scale=r.scale, width=r.width, height=r.height,
            d_max=d_max, clamp=clamp,
        )


def load_manifest(path) -> SampleManifest:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(SampleRecord.from_json(line))
        except DepthIOError as exc:
            raise DepthIOError(f"{path}:{lineno}: {exc}") from exc
    return SampleManifest(records=records)


def save_manifest(manifest: SampleManifest, path) -> None:
    text = "".join(r.to_json() + "\n" for r in manifest.records)
    Path(path).write_text(text)


@dataclass
class FilterResult:
    kept: SampleManifest
    dropped: list[SampleRecord]
    fractions: list[float]  # invalid fraction per input record, input order
    warnings: list[str]


def filter_split(
    manifest: SampleManifest,
    max_invalid: float = MAX_INVALID_FRACTION,
    jobs: int = 1,
) -> FilterResult:
    """Drop samples whose fraction of natively-invalid pixels exceeds the cap.

    Only pixels the file itself marks unusable (non-positive or non-finite)
    count as invalid here; the range cap d_max plays no role in filtering, so
    far-away but real geometry never disqualifies a sample. A sample at
    exactly ``max_invalid`` is kept. Loading may run on several threads; the
    output order always matches the manifest order.
    """

    def fraction(record: SampleRecord) -> float:
        d = load_depth(
            record.depth, fmt=record.format, scale=record.scale,
            width=record.width, height=record.height,
            d_max=np.inf, clamp=False,
        )
        return d.invalid_fraction()

    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            fractions = list(pool.map(fraction, manifest.records))
    else:
        fractions = [fraction(r) for r in manifest.records]

    kept, dropped, warnings = [], [], []
    for record, frac in zip(manifest.records, fractions):
        if frac <= max_invalid:
            kept.append(record)
        else:
            dropped.append(record)
            name = record.id or record.depth
            warnings.append(f"dropped {name}: {frac:.1%} invalid pixels (cap {max_invalid:.1%})")
    return FilterResult(
        kept=SampleManifest(records=kept, resolution=manifest.resolution),
        dropped=dropped,
        fractions=fractions,
        warnings=warnings,
    )
