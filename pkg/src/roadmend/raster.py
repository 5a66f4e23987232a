"""Raster data model, PNG codec, geometry utilities, and binary morphology.

A road raster is a 2-D float32 numpy array with values in [0, 1], where 1
means road. A *binary* raster only holds 0.0 and 1.0. All functions here are
pure: inputs are never mutated, outputs are fresh arrays, and everything is
safe to call concurrently.

On disk, rasters are 8-bit single-channel PNG files with the mapping
value = byte / 255 on load and byte = round-half-up(value * 255) on save.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image


class RasterError(ValueError):
    """Invalid raster content, geometry, or arguments."""


class RasterCodecError(RasterError):
    """File is missing or is not an 8-bit single-channel image."""


@dataclass(frozen=True)
class MaskRegion:
    """Axis-aligned square region (row `top`, column `left`, side `size`)."""

    top: int
    left: int
    size: int

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise RasterError(f"region size must be positive, got {self.size}")
        if self.top < 0 or self.left < 0:
            raise RasterError(f"region origin must be non-negative, got ({self.top}, {self.left})")

    def check_inside(self, height: int, width: int) -> None:
        if self.top + self.size > height or self.left + self.size > width:
            raise RasterError(
                f"region {self} does not fit inside a {height}x{width} raster"
            )

    @property
    def rows(self) -> slice:
        return slice(self.top, self.top + self.size)

    @property
    def cols(self) -> slice:
        return slice(self.left, self.left + self.size)

    def center(self) -> tuple[float, float]:
        return (self.top + self.size / 2.0, self.left + self.size / 2.0)


def as_raster(values, copy: bool = False) -> np.ndarray:
    """Validate and return `values` as a float32 raster array."""
    a = np.array(values, dtype=np.float32, copy=copy) if copy else np.asarray(values, dtype=np.float32)
    if a.ndim != 2:
        raise RasterError(f"raster must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise RasterError(f"raster must be at least 1x1, got shape {a.shape}")
    if not np.isfinite(a).all() or a.min() < 0.0 or a.max() > 1.0:
        raise RasterError("raster values must lie in [0, 1]")
    return a


def is_binary(r: np.ndarray) -> bool:
    return bool(((r == 0.0) | (r == 1.0)).all())


def require_binary(r: np.ndarray, what: str = "raster") -> None:
    if not is_binary(r):
        raise RasterError(f"{what} must be binary (values in {{0, 1}})")


def load_raster(path) -> np.ndarray:
    """Load an 8-bit single-channel image as a raster (value = byte / 255)."""
    p = Path(path)
    if not p.exists():
        raise RasterCodecError(f"raster file not found: {p}")
    with Image.open(p) as im:
        if im.mode != "L":
            raise RasterCodecError(
                f"{p}: expected an 8-bit single-channel image, got mode {im.mode!r}"
            )
        data = np.asarray(im, dtype=np.float32)
    return data / 255.0


def save_raster(r: np.ndarray, path) -> None:
    """Write a raster as an 8-bit single-channel PNG (byte = round-half-up(value*255))."""
    r = as_raster(r)
    # floor(x + 0.5) rather than rint: deterministic half-up ties.
    data = np.floor(r.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    p = Path(path)
    try:
        Image.fromarray(data, mode="L").save(p, format="PNG")
    except OSError as exc:
        raise RasterCodecError(f"cannot write raster to {p}: {exc}") from exc


def binarize(r: np.ndarray, threshold: float) -> np.ndarray:
    """Threshold a raster to {0, 1}; values >= threshold map to 1."""
    if not (0.0 < threshold < 1.0):
        raise RasterError(f"threshold must lie in (0, 1), got {threshold}")
    r = as_raster(r)
    return (r >= threshold).astype(np.float32)


def tile3x3(r: np.ndarray) -> list[np.ndarray]:
    """Split a raster into a row-major 3x3 grid of equal tiles."""
    r = as_raster(r)
    h, w = r.shape
    if h % 3 != 0 or w % 3 != 0:
        raise RasterError(f"raster dimensions must be divisible by 3, got {h}x{w}")
    th, tw = h // 3, w // 3
    return [r[i * th:(i + 1) * th, j * tw:(j + 1) * tw].copy() for i in range(3) for j in range(3)]


def _box_resample_axis(a: np.ndarray, target: int) -> np.ndarray:
    """Exact area-average resample along the first axis.

    Output cell k covers source interval [k*n/target, (k+1)*n/target); its
    value is the mean of the piecewise-constant source over that interval.
    Boundary arithmetic is done in integers so footprints are exact.
    """
    n = a.shape[0]
    if target == n:
        return a.astype(np.float64)
    a = a.astype(np.float64)
    cum = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)], axis=0)
    nums = np.arange(target + 1, dtype=np.int64) * n  # boundary k at nums[k] / target
    idx = nums // target
    frac = ((nums - idx * target) / target)[:, None]
    idx_row = np.minimum(idx, n - 1)
    integral = cum[idx] + frac * a[idx_row]
    return (integral[1:] - integral[:-1]) * (target / n)


def resize(r: np.ndarray, target: int) -> np.ndarray:
    """Area-averaging resample to target x target.

    Each output pixel is the exact mean of its (possibly fractional) source
    footprint, which preserves label mass when downscaling. Callers re-binarize
    afterward when a hard label raster is needed.
    """
    if target < 1:
        raise RasterError(f"resize target must be >= 1, got {target}")
    r = as_raster(r)
    out = _box_resample_axis(r, target)
    out = _box_resample_axis(out.T, target).T
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def erode(r: np.ndarray, kernel: int, region: MaskRegion | None = None) -> np.ndarray:
    """Minimum filter with a square kernel, applied inside `region` (or everywhere).

    The neighborhood may read pixels outside the region but not outside the
    raster; beyond the raster edge it sees 0. Pixels outside the region are
    returned unchanged.
    """
    r = as_raster(r)
    require_binary(r)
    if kernel < 1 or kernel % 2 == 0:
        raise RasterError(f"erosion kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return r.copy()
    if region is not None:
        region.check_inside(*r.shape)
    pad = kernel // 2
    padded = np.pad(r, pad, constant_values=0.0)
    eroded = sliding_window_view(padded, (kernel, kernel)).min(axis=(2, 3))
    if region is None:
        return eroded.astype(np.float32)
    out = r.copy()
    out[region.rows, region.cols] = eroded[region.rows, region.cols]
    return out


def dilate(r: np.ndarray, kernel: int) -> np.ndarray:
    """Maximum filter with a square kernel over the whole raster (zero padding)."""
    r = as_raster(r)
    if kernel < 1 or kernel % 2 == 0:
        raise RasterError(f"dilation kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return r.copy()
    pad = kernel // 2
    padded = np.pad(r, pad, constant_values=0.0)
    return sliding_window_view(padded, (kernel, kernel)).max(axis=(2, 3)).astype(np.float32)


def crop(r: np.ndarray, region: MaskRegion) -> np.ndarray:
    r = as_raster(r)
    region.check_inside(*r.shape)
    return r[region.rows, region.cols].copy()


def paste(base: np.ndarray, patch: np.ndarray, region: MaskRegion) -> np.ndarray:
    """Return a copy of `base` with `patch` written into `region`."""
    base = as_raster(base)
    patch = as_raster(patch)
    region.check_inside(*base.shape)
    if patch.shape != (region.size, region.size):
        raise RasterError(
            f"patch shape {patch.shape} does not match region side {region.size}"
        )
    out = base.copy()
    out[region.rows, region.cols] = patch
    return out


def region_mask(shape: tuple[int, int], region: MaskRegion) -> np.ndarray:
    """Indicator raster: 1 inside `region`, 0 outside."""
    region.check_inside(*shape)
    m = np.zeros(shape, dtype=np.float32)
    m[region.rows, region.cols] = 1.0
    return m
