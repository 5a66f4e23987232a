"""Synthetic segmentation fallacies: salt, pepper, blur, and crop noise.

Each noise corrupts only a square region of a binary raster and is fully
deterministic under a fixed seed. Pixel counts are exact, never probabilistic:
the number of affected pixels is round-half-up(percent/100 * region area),
clamped to what the region actually contains.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from roadmend.dataset import sample_region
from roadmend.raster import MaskRegion, as_raster, erode, require_binary
from roadmend.seeding import derive_rng

KINDS = ("salt", "pepper", "blur", "crop")


class FallacyError(ValueError):
    """Invalid noise configuration."""


@dataclass(frozen=True)
class FallacyConfig:
    """Parameters of one synthetic corruption.

    noise_percent drives salt/pepper pixel counts; erosion_kernel drives blur.
    mask_min/mask_max/min_road_percent control region selection, and seed makes
    the whole corruption deterministic.
    """

    kind: str
    noise_percent: float = 5.0
    erosion_kernel: int = 3
    mask_min: int = 48
    mask_max: int = 96
    min_road_percent: float = 5.0
    seed: int = 0
    max_tries: int = 64

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise FallacyError(f"unknown noise kind {self.kind!r} (valid: {', '.join(KINDS)})")
        if not (0.0 <= self.noise_percent <= 100.0):
            raise FallacyError(f"noise_percent must lie in [0, 100], got {self.noise_percent}")
        if self.erosion_kernel < 3 or self.erosion_kernel % 2 == 0:
            raise FallacyError(f"erosion_kernel must be odd and >= 3, got {self.erosion_kernel}")
        if not (0 < self.mask_min <= self.mask_max):
            raise FallacyError(
                f"mask sizes must satisfy 0 < min <= max, got [{self.mask_min}, {self.mask_max}]"
            )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def noise_pixel_count(percent: float, region: MaskRegion) -> int:
    return _round_half_up(percent / 100.0 * region.size * region.size)


def apply_salt(r: np.ndarray, region: MaskRegion, percent: float, rng: np.random.Generator) -> np.ndarray:
    """Whiten exactly round(percent% * size^2) background pixels inside the region.

    Candidates are the region's current zero-valued pixels so every hit adds a
    false positive; if fewer exist, all of them are whitened.
    """
    r = as_raster(r)
    require_binary(r)
    region.check_inside(*r.shape)
    k = noise_pixel_count(percent, region)
    out = r.copy()
    if k == 0:
        return out
    flat_background = np.flatnonzero(out[region.rows, region.cols] == 0.0)
    chosen = rng.choice(flat_background, size=min(k, flat_background.size), replace=False)
    out[region.top + chosen // region.size, region.left + chosen % region.size] = 1.0
    return out


def apply_pepper(r: np.ndarray, region: MaskRegion, percent: float, rng: np.random.Generator) -> np.ndarray:
    """Blacken round(percent% * size^2) road pixels inside the region.

    On a binary raster the "highest-valued" pixels are all ties at 1, so the
    choice among them is uniform at random; with fewer road pixels than the
    quota, all of them go black.
    """
    r = as_raster(r)
    require_binary(r)
    region.check_inside(*r.shape)
    k = noise_pixel_count(percent, region)
    out = r.copy()
    if k == 0:
        return out
    flat_road = np.flatnonzero(out[region.rows, region.cols] == 1.0)
    chosen = rng.choice(flat_road, size=min(k, flat_road.size), replace=False)
    out[region.top + chosen // region.size, region.left + chosen % region.size] = 0.0
    return out


def blur_center_region(region: MaskRegion) -> MaskRegion:
    """Concentric square of side ceil(size/2) inside `region`."""
    half = (region.size + 1) // 2
    offset = (region.size - half) // 2
    return MaskRegion(top=region.top + offset, left=region.left + offset, size=half)


def apply_blur(r: np.ndarray, region: MaskRegion, kernel: int) -> np.ndarray:
    """Cascaded erosion: erode the whole region, then its center half again."""
    if kernel < 3 or kernel % 2 == 0:
        raise FallacyError(f"blur kernel must be odd and >= 3, got {kernel}")
    once = erode(r, kernel, region)
    return erode(once, kernel, blur_center_region(region))


def apply_crop(r: np.ndarray, region: MaskRegion) -> np.ndarray:
    """Black out the entire region."""
    r = as_raster(r)
    region.check_inside(*r.shape)
    out = r.copy()
    out[region.rows, region.cols] = 0.0
    return out


def corrupt(
    r: np.ndarray,
    cfg: FallacyConfig,
    tile_id: str = "?",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, MaskRegion]:
    """Select a region by rejection sampling and apply the configured noise.

    When `rng` is omitted, one is derived from (cfg.seed, tile_id) so that
    corrupting many tiles in parallel is order-independent.
    """
    r = as_raster(r)
    require_binary(r)
    if rng is None:
        rng = derive_rng(cfg.seed, f"corrupt-{tile_id}")
    region = sample_region(
        r, rng, cfg.mask_min, cfg.mask_max, cfg.min_road_percent, cfg.max_tries, tile_id
    )
    if cfg.kind == "salt":
        noisy = apply_salt(r, region, cfg.noise_percent, rng)
    elif cfg.kind == "pepper":
        noisy = apply_pepper(r, region, cfg.noise_percent, rng)
    elif cfg.kind == "blur":
        noisy = apply_blur(r, region, cfg.erosion_kernel)
    else:
        noisy = apply_crop(r, region)
    return noisy, region


def write_region_log(path, rows: list[tuple[str, MaskRegion, str]], cfg: FallacyConfig | None = None) -> None:
    """Line-delimited `tile_id<TAB>top<TAB>left<TAB>size<TAB>kind` records.

    The full noise configuration is surfaced in a header line, since every
    default lives in this artifact rather than in any published protocol.
    """
    lines = []
    if cfg is not None:
        lines.append(f"# {json.dumps(asdict(cfg), sort_keys=True)}\n")
    for tile_id, region, kind in rows:
        lines.append(f"{tile_id}\t{region.top}\t{region.left}\t{region.size}\t{kind}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_region_log(path) -> list[tuple[str, MaskRegion, str]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FallacyError(f"{path}:{lineno}: expected 5 tab-separated fields")
        tile_id, top, left, size, kind = parts
        rows.append((tile_id, MaskRegion(top=int(top), left=int(left), size=int(size)), kind))
    return rows
