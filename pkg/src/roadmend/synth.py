"""Procedural road-like tiles for smoke tests and desk-scale experiments.

Tiles are binary rasters containing thick line segments arranged as one of
the four road geometries (straight, curvy, t_junction, intersection), so the
full pipeline, including road-type stratification, runs without any real data.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from roadmend.dataset import Manifest, ManifestEntry, save_manifest
from roadmend.raster import save_raster
from roadmend.seeding import derive_rng

KINDS = ("straight", "curvy", "t_junction", "intersection")


def _stamp_segment(canvas: np.ndarray, p0, p1, half_width: float) -> None:
    h, w = canvas.shape
    yy, xx = np.mgrid[0:h, 0:w]
    y0, x0 = p0
    y1, x1 = p1
    dy, dx = y1 - y0, x1 - x0
    denom = max(dy * dy + dx * dx, 1e-9)
    t = np.clip(((yy - y0) * dy + (xx - x0) * dx) / denom, 0.0, 1.0)
    dist2 = (yy - y0 - t * dy) ** 2 + (xx - x0 - t * dx) ** 2
    canvas[dist2 <= half_width * half_width] = 1.0


def _edge_point(rng: np.random.Generator, side: int, edge: int) -> tuple[float, float]:
    pos = float(rng.uniform(0.2, 0.8) * side)
    return [(0.0, pos), (side - 1.0, pos), (pos, 0.0), (pos, side - 1.0)][edge]


def draw_road_tile(side: int, rng: np.random.Generator, kind: str | None = None) -> tuple[np.ndarray, str]:
    """Draw one binary tile; returns (raster, road_type)."""
    if kind is None:
        kind = KINDS[int(rng.integers(len(KINDS)))]
    if kind not in KINDS:
        raise ValueError(f"unknown tile kind {kind!r} (valid: {', '.join(KINDS)})")
    canvas = np.zeros((side, side), dtype=np.float32)
    half_width = float(rng.uniform(1.0, max(1.5, side / 24.0)))
    mid = (float(rng.uniform(0.35, 0.65) * side), float(rng.uniform(0.35, 0.65) * side))

    if kind == "straight":
        edge = int(rng.integers(2))  # vertical or horizontal crossing
        _stamp_segment(canvas, _edge_point(rng, side, 2 * edge), _edge_point(rng, side, 2 * edge + 1), half_width)
    elif kind == "curvy":
        # polyline through interior waypoints between two random edges
        a = _edge_point(rng, side, int(rng.integers(4)))
        b = _edge_point(rng, side, int(rng.integers(4)))
        points = [a]
        for _ in range(int(rng.integers(2, 4))):
            points.append((float(rng.uniform(0.2, 0.8) * side), float(rng.uniform(0.2, 0.8) * side)))
        points.append(b)
        for p, q in zip(points[:-1], points[1:]):
            _stamp_segment(canvas, p, q, half_width)
    elif kind == "t_junction":
        _stamp_segment(canvas, _edge_point(rng, side, 2), _edge_point(rng, side, 3), half_width)
        _stamp_segment(canvas, mid, _edge_point(rng, side, int(rng.integers(2))), half_width)
    else:  # intersection
        _stamp_segment(canvas, _edge_point(rng, side, 0), _edge_point(rng, side, 1), half_width)
        _stamp_segment(canvas, _edge_point(rng, side, 2), _edge_point(rng, side, 3), half_width)
    return canvas, kind


def synthetic_tiles(count: int, side: int, seed: int) -> list[tuple[str, np.ndarray, str]]:
    """Deterministic list of (tile_id, raster, road_type)."""
    out = []
    for i in range(count):
        rng = derive_rng(seed, f"synth-tile-{i}")
        tile, kind = draw_road_tile(side, rng)
        out.append((f"synth{i:04d}", tile, kind))
    return out


def write_synthetic_dataset(
    out_dir,
    count: int,
    side: int,
    seed: int,
    test_fraction: float = 0.0,
) -> Manifest:
    """Materialize synthetic tiles plus a manifest under `out_dir`.

    The last `round(test_fraction * count)` tiles form the test split.
    """
    out_dir = Path(out_dir)
    tiles_dir = out_dir / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)
    n_test = round(test_fraction * count)
    entries = []
    for i, (tile_id, tile, kind) in enumerate(synthetic_tiles(count, side, seed)):
        rel = f"tiles/{tile_id}.png"
        save_raster(tile, out_dir / rel)
        split = "test" if i >= count - n_test else "train"
        entries.append(ManifestEntry(tile_id=tile_id, path=rel, split=split, road_type=kind))
    manifest = Manifest(
        entries=entries,
        base_dir=out_dir,
        header={"synthetic": True, "count": count, "side": side, "seed": seed},
    )
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest
