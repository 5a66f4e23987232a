"""Buffered road-extraction metrics and dataset-level stratified evaluation.

Correctness is buffered precision, completeness is buffered recall, and
quality combines them as TP / (TP + FP + FN) with buffered matching. A
prediction pixel counts as matched when a ground-truth pixel lies within
Chebyshev distance `buffer_px` of it (and vice versa for ground truth), which
is computed exactly via square-window dilation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from roadmend.dataset import Manifest, NoValidRegionError, load_manifest
from roadmend.fallacy import FallacyConfig, apply_crop, corrupt
from roadmend.raster import MaskRegion, as_raster, crop, dilate, load_raster, require_binary

SCOPES = ("mask-region", "full-tile")


class BufferedCounts(NamedTuple):
    matched_pred: int
    total_pred: int
    matched_gt: int
    total_gt: int


def buffered_counts(pred: np.ndarray, gt: np.ndarray, buffer_px: int) -> BufferedCounts:
    """Count buffered matches between binary prediction and ground truth."""
    pred = as_raster(pred)
    gt = as_raster(gt)
    require_binary(pred, "prediction")
    require_binary(gt, "ground truth")
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if buffer_px < 0:
        raise ValueError(f"buffer must be >= 0, got {buffer_px}")
    window = 2 * buffer_px + 1
    gt_zone = dilate(gt, window)
    pred_zone = dilate(pred, window)
    return BufferedCounts(
        matched_pred=int((pred * gt_zone).sum()),
        total_pred=int(pred.sum()),
        matched_gt=int((gt * pred_zone).sum()),
        total_gt=int(gt.sum()),
    )


def correctness(counts: BufferedCounts) -> float:
    if counts.total_pred == 0:
        return 1.0 if counts.total_gt == 0 else 0.0
    return counts.matched_pred / counts.total_pred


def completeness(counts: BufferedCounts) -> float:
    if counts.total_gt == 0:
        return 1.0 if counts.total_pred == 0 else 0.0
    return counts.matched_gt / counts.total_gt


def quality(counts: BufferedCounts) -> float:
    denom = counts.total_pred + counts.total_gt - counts.matched_gt
    if denom == 0:
        # only reachable when pred and gt are both empty
        return 1.0
    return counts.matched_pred / denom


def score_pair(pred: np.ndarray, gt: np.ndarray, buffer_px: int) -> tuple[float, float, float]:
    c = buffered_counts(pred, gt, buffer_px)
    return correctness(c), completeness(c), quality(c)


@dataclass(frozen=True)
class TileScore:
    tile_id: str
    road_type: str
    correctness: float
    completeness: float
    quality: float


@dataclass
class MetricsReport:
    rows: list[TileScore]
    buffer_px: int
    scope: str

    def aggregate(self, road_type: str | None = None) -> tuple[float, float, float]:
        """Unweighted mean over tiles, optionally restricted to one road type."""
        rows = [r for r in self.rows if road_type is None or r.road_type == road_type]
        if not rows:
            raise ValueError(f"no tiles for road type {road_type!r}")
        n = len(rows)
        return (
            sum(r.correctness for r in rows) / n,
            sum(r.completeness for r in rows) / n,
            sum(r.quality for r in rows) / n,
        )

    def road_types(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.road_type not in seen:
                seen.append(r.road_type)
        return sorted(seen)

    def to_csv(self, path) -> None:
        lines = ["tile_id,road_type,correctness,completeness,quality\n"]
        for r in sorted(self.rows, key=lambda t: t.tile_id):
            lines.append(
                f"{r.tile_id},{r.road_type},{r.correctness:.6f},{r.completeness:.6f},{r.quality:.6f}\n"
            )
        Path(path).write_text("".join(lines), encoding="utf-8")

    def to_table(self, label: str = "model") -> str:
        """Aggregate table: one row per road type present plus an overall row."""
        lines = [
            f"Buffered metrics (buffer={self.buffer_px}px, scope={self.scope}, tiles={len(self.rows)})",
            "",
            "| Stratum | Method | Correctness | Completeness | Quality |",
            "|---|---|---|---|---|",
        ]
        for road_type in self.road_types():
            corr, comp, qual = self.aggregate(road_type)
            lines.append(f"| {road_type} | {label} | {corr:.3f} | {comp:.3f} | {qual:.3f} |")
        corr, comp, qual = self.aggregate()
        lines.append(f"| overall | {label} | {corr:.3f} | {comp:.3f} | {qual:.3f} |")
        return "\n".join(lines) + "\n"


# An inpainter maps (corrupted raster, region, clean target) -> completed
# raster. The clean target argument exists only so debug oracles (identity)
# can be expressed; real models must ignore it.
Inpainter = Callable[[np.ndarray, MaskRegion, np.ndarray], np.ndarray]


def identity_inpainter(noisy: np.ndarray, region: MaskRegion, target: np.ndarray) -> np.ndarray:
    """Debug oracle: perfect repair (harness self-test)."""
    return target.copy()


def zero_inpainter(noisy: np.ndarray, region: MaskRegion, target: np.ndarray) -> np.ndarray:
    """Debug oracle: predicts no road at all inside the region."""
    return apply_crop(noisy, region)


@dataclass(frozen=True)
class EvalItem:
    tile_id: str
    road_type: str
    target: np.ndarray
    noisy: np.ndarray
    region: MaskRegion


def evaluate_items(
    items: list[EvalItem],
    inpainter: Inpainter,
    buffer_px: int = 2,
    scope: str = "mask-region",
) -> MetricsReport:
    """Repair each corrupted tile and score it against its ground truth."""
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r} (valid: {', '.join(SCOPES)})")
    if not items:
        raise ValueError("nothing to evaluate: empty item list")
    rows = []
    for item in items:
        completed = inpainter(item.noisy, item.region, item.target)
        require_binary(completed, "inpainter output")
        if scope == "mask-region":
            pred = crop(completed, item.region)
            gt = crop(item.target, item.region)
        else:
            pred, gt = completed, item.target
        corr, comp, qual = score_pair(pred, gt, buffer_px)
        rows.append(TileScore(item.tile_id, item.road_type, corr, comp, qual))
    rows.sort(key=lambda r: r.tile_id)
    return MetricsReport(rows=rows, buffer_px=buffer_px, scope=scope)


def corrupt_manifest_items(
    manifest: Manifest,
    cfg: FallacyConfig,
    split: str = "test",
    skip_invalid: bool = True,
) -> list[EvalItem]:
    """Corrupt every tile of a manifest split into evaluation items.

    Tiles where no valid region exists are skipped (with `skip_invalid`) so a
    sparse tile cannot sink a whole benchmark run.
    """
    items = []
    for entry in manifest.split_entries(split):
        target = load_raster(manifest.tile_path(entry))
        try:
            noisy, region = corrupt(target, cfg, tile_id=entry.tile_id)
        except NoValidRegionError:
            if skip_invalid:
                continue
            raise
        items.append(EvalItem(entry.tile_id, entry.road_type, target, noisy, region))
    return items


def evaluate_manifest(
    manifest_path,
    inpainter: Inpainter,
    cfg: FallacyConfig,
    buffer_px: int = 2,
    scope: str = "mask-region",
    split: str = "test",
) -> MetricsReport:
    manifest = load_manifest(manifest_path)
    items = corrupt_manifest_items(manifest, cfg, split=split)
    return evaluate_items(items, inpainter, buffer_px=buffer_px, scope=scope)


def method_table(results: dict[str, tuple[float, float, float]]) -> str:
    """One row per method with the three aggregate metrics (reference-table shape)."""
    lines = [
        "| Method | Correctness | Completeness | Quality |",
        "|---|---|---|---|",
    ]
    for name, (corr, comp, qual) in results.items():
        lines.append(f"| {name} | {corr:.3f} | {comp:.3f} | {qual:.3f} |")
    return "\n".join(lines) + "\n"


def comparison_table(reports: dict[str, MetricsReport], by_road_type: bool = False) -> str:
    """Side-by-side aggregate table over several methods.

    With `by_road_type`, emits one block per road type present in all reports;
    otherwise a single overall block.
    """
    if not reports:
        raise ValueError("no reports to compare")
    lines = [
        "| Stratum | Method | Correctness | Completeness | Quality |",
        "|---|---|---|---|---|",
    ]
    strata: list[str | None]
    if by_road_type:
        shared = None
        for rep in reports.values():
            types = set(rep.road_types())
            shared = types if shared is None else shared & types
        strata = sorted(shared or set())
        strata.append(None)
    else:
        strata = [None]
    for stratum in strata:
        for name, rep in reports.items():
            corr, comp, qual = rep.aggregate(stratum)
            label = stratum if stratum is not None else "overall"
            lines.append(f"| {label} | {name} | {corr:.3f} | {comp:.3f} | {qual:.3f} |")
    return "\n".join(lines) + "\n"
