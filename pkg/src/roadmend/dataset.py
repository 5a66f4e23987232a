"""Dataset ingestion: manifests over road-label tiles and training-example sampling.

A manifest is a line-delimited text file, one record per model-ready tile:

    tile_id<TAB>path<TAB>split<TAB>road_type

preceded by ``#``-prefixed header lines carrying the build parameters as JSON.
Paths are stored relative to the manifest file. `build_manifest` materializes
normalized tiles (tiled, resized, binarized) under the output directory, so a
manifest plus its tile directory is self-contained.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roadmend.raster import (
    MaskRegion,
    as_raster,
    binarize,
    load_raster,
    region_mask,
    require_binary,
    resize,
    save_raster,
    tile3x3,
)

ROAD_TYPES = ("straight", "curvy", "t_junction", "intersection", "unknown")
SPLITS = ("train", "test")


class DatasetError(ValueError):
    """Bad dataset directory, manifest, or tag file."""


class NoValidRegionError(RuntimeError):
    """Rejection sampling could not find a region with enough road pixels."""

    def __init__(self, tile_id: str, tries: int):
        self.tile_id = tile_id
        super().__init__(
            f"no region with enough road pixels found in tile {tile_id!r} after {tries} tries"
        )


@dataclass(frozen=True)
class ManifestEntry:
    tile_id: str
    path: str  # relative to the manifest file
    split: str
    road_type: str = "unknown"


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    base_dir: Path
    header: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [e.tile_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DatasetError("manifest tile ids must be unique")
        for e in self.entries:
            if e.split not in SPLITS:
                raise DatasetError(f"unknown split {e.split!r} for tile {e.tile_id!r}")
            if e.road_type not in ROAD_TYPES:
                raise DatasetError(f"unknown road type {e.road_type!r} for tile {e.tile_id!r}")

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def tile_path(self, entry: ManifestEntry) -> Path:
        return self.base_dir / entry.path

    def check_paths(self) -> None:
        for e in self.entries:
            p = self.tile_path(e)
            if not p.exists():
                raise DatasetError(f"tile file missing: {p}")


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    lines = [f"# {json.dumps(manifest.header, sort_keys=True)}\n"]
    for e in manifest.entries:
        lines.append(f"{e.tile_id}\t{e.path}\t{e.split}\t{e.road_type}\n")
    path.write_text("".join(lines), encoding="utf-8")


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"manifest not found: {path}")
    header: dict = {}
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body:
                try:
                    header.update(json.loads(body))
                except json.JSONDecodeError:
                    pass  # free-form comment
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DatasetError(f"{path}:{lineno}: expected 4 tab-separated fields")
        entries.append(ManifestEntry(*parts))
    manifest = Manifest(entries=entries, base_dir=path.parent, header=header)
    manifest.check_paths()
    return manifest


def read_type_tags(path) -> dict[str, str]:
    """Parse a sidecar tag file of `tile_id<TAB>road_type` lines."""
    tags: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected `tile_id<TAB>road_type`")
        tile_id, road_type = parts
        if road_type not in ROAD_TYPES:
            raise DatasetError(
                f"{path}:{lineno}: unknown road type {road_type!r} (valid: {', '.join(ROAD_TYPES)})"
            )
        tags[tile_id] = road_type
    return tags


def build_manifest(
    root,
    out_dir,
    seed: int,
    tile_target: int = 256,
    train_fraction: float = 0.95,
    keep_fraction: float = 1.0,
    tag_file=None,
    binarize_threshold: float = 0.5,
) -> Manifest:
    """Scan `root` for label rasters and materialize a manifest under `out_dir`.

    Source images whose side is divisible by 3 and larger than `tile_target`
    are split 3x3 and resized to `tile_target`; images already at
    `tile_target` are taken as-is. Every tile is re-binarized and written to
    `out_dir/tiles/`, so the manifest is self-contained.

    Splitting is by source image (all child tiles share the split) to prevent
    spatial leakage, and is deterministic in `seed`. `keep_fraction` < 1 drops
    a deterministic subset of source images before splitting; the filter is
    recorded in the manifest header.
    """
    root = Path(root)
    out_dir = Path(out_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root is not a directory: {root}")
    sources = sorted(p for p in root.iterdir() if p.suffix.lower() == ".png")
    if not sources:
        raise DatasetError(f"no .png rasters found under {root}")
    if not (0.0 < keep_fraction <= 1.0):
        raise DatasetError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if not (0.0 <= train_fraction <= 1.0):
        raise DatasetError(f"train_fraction must lie in [0, 1], got {train_fraction}")

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    order = rng.permutation(len(sources))
    kept = sorted(order[: max(1, round(keep_fraction * len(sources)))])
    kept_sources = [sources[i] for i in kept]

    n_train = round(train_fraction * len(kept_sources))
    split_order = rng.permutation(len(kept_sources))
    train_idx = set(split_order[:n_train])

    tiles_dir = out_dir / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    for si, src in enumerate(kept_sources):
        split = "train" if si in train_idx else "test"
        raster = load_raster(src)
        h, w = raster.shape
        if h == w == tile_target:
            tiles = [(src.stem, binarize(raster, binarize_threshold))]
        elif h == w and h % 3 == 0 and h > tile_target:
            children = tile3x3(raster)
            tiles = [
                (f"{src.stem}_r{i}c{j}", binarize(resize(children[i * 3 + j], tile_target), binarize_threshold))
                for i in range(3)
                for j in range(3)
            ]
        else:
            raise DatasetError(
                f"{src}: expected a {tile_target}x{tile_target} tile or a square "
                f"source with side divisible by 3 and larger than {tile_target}, got {h}x{w}"
            )
        for tile_id, tile in tiles:
            rel = f"tiles/{tile_id}.png"
            save_raster(tile, out_dir / rel)
            entries.append(ManifestEntry(tile_id=tile_id, path=rel, split=split, road_type="unknown"))

    if tag_file is not None:
        tags = read_type_tags(tag_file)
        by_id = {e.tile_id: i for i, e in enumerate(entries)}
        for tile_id, road_type in tags.items():
            if tile_id not in by_id:
                raise DatasetError(f"tag file references unknown tile id {tile_id!r}")
            i = by_id[tile_id]
            entries[i] = ManifestEntry(entries[i].tile_id, entries[i].path, entries[i].split, road_type)

    header = {
        "root": str(root),
        "seed": seed,
        "tile_target": tile_target,
        "train_fraction": train_fraction,
        "keep_fraction": keep_fraction,
        "sources_total": len(sources),
        "sources_kept": len(kept_sources),
        "train_tiles": sum(1 for e in entries if e.split == "train"),
        "test_tiles": sum(1 for e in entries if e.split == "test"),
    }
    manifest = Manifest(entries=entries, base_dir=out_dir, header=header)
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


@dataclass(frozen=True)
class TrainingExample:
    """Masked input, mask indicator, clean target, and the masked region.

    Invariant: input == target * (1 - mask) pointwise, and mask is exactly the
    indicator of `region`.
    """

    input: np.ndarray
    mask: np.ndarray
    target: np.ndarray
    region: MaskRegion


def sample_region(
    tile: np.ndarray,
    rng: np.random.Generator,
    size_min: int,
    size_max: int,
    min_road_percent: float,
    max_tries: int = 64,
    tile_id: str = "?",
) -> MaskRegion:
    """Rejection-sample a square region with strictly more than `min_road_percent`
    percent road pixels. Side is uniform in [size_min, size_max]; position is
    uniform among in-bounds placements. Each rejection redraws both."""
    tile = as_raster(tile)
    h, w = tile.shape
    if not (0 < size_min <= size_max <= min(h, w)):
        raise DatasetError(
            f"mask sizes must satisfy 0 < min <= max <= tile side, got "
            f"[{size_min}, {size_max}] on {h}x{w}"
        )
    for _ in range(max_tries):
        size = int(rng.integers(size_min, size_max + 1))
        top = int(rng.integers(0, h - size + 1))
        left = int(rng.integers(0, w - size + 1))
        road = float(tile[top:top + size, left:left + size].sum())
        if road > min_road_percent / 100.0 * size * size:
            return MaskRegion(top=top, left=left, size=size)
    raise NoValidRegionError(tile_id, max_tries)


def sample_training_example(
    tile: np.ndarray,
    rng: np.random.Generator,
    size_min: int,
    size_max: int,
    min_road_percent: float,
    max_tries: int = 64,
    tile_id: str = "?",
) -> TrainingExample:
    """Draw a masked training example from a binary tile.

    Raises NoValidRegionError when `max_tries` rejections fail; the caller may
    skip the tile.
    """
    tile = as_raster(tile)
    require_binary(tile, "training tile")
    region = sample_region(tile, rng, size_min, size_max, min_road_percent, max_tries, tile_id)
    mask = region_mask(tile.shape, region)
    masked = tile * (1.0 - mask)
    return TrainingExample(input=masked, mask=mask, target=tile.copy(), region=region)
