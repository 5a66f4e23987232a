#!/usr/bin/env python3
"""Ablation trend experiment: vanilla-glcic vs glcrc+l on the crop-noise benchmark.

Trains both presets over several seeds (default: a 500-tile synthetic manifest
at scale=0.1), evaluates each run on crop-corrupted test tiles, and emits an
aggregate three-metric table in the same shape as the full-scale reference
results, so a full-scale run can be compared number-for-number when resources
allow. The per-seed quality comparison is a trend indicator, not a gate: GAN
training at reduced scale is seed-sensitive.

Example (micro sanity run):
    python scripts/trend_check.py --out-dir /tmp/trend --tile-count 24 \
        --scale 0.0005 --seeds 0
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from roadmend.cli import PRESETS
from roadmend.fallacy import FallacyConfig
from roadmend.inpaint import generator_inpainter
from roadmend.losses import LossConfig
from roadmend.metrics import comparison_table, evaluate_manifest, method_table
from roadmend.model import DiscriminatorConfig, GeneratorConfig, load_generator
from roadmend.synth import write_synthetic_dataset
from roadmend.trainer import MaskSampling, TrainConfig, train

# Published full-scale results for the three presets (correctness,
# completeness, quality); reproducing them needs the real 9972/567-tile
# dataset and the unscaled 90k/40k/90k schedule.
FULL_SCALE_REFERENCE = {
    "vanilla-glcic": (0.787, 0.803, 0.664),
    "glcrc": (0.789, 0.811, 0.668),
    "glcrc+l": (0.795, 0.831, 0.671),
}

COMPARED_PRESETS = ("vanilla-glcic", "glcrc+l")


def build_config(preset: str, args, seed: int) -> TrainConfig:
    variant, recon, adv = PRESETS[preset]
    return TrainConfig(
        seed=seed,
        scale=args.scale,
        batch_size=args.batch_size,
        generator=GeneratorConfig(variant=variant, base_channels=args.base_channels),
        discriminator=DiscriminatorConfig(
            base_channels=args.base_channels,
            global_side=args.tile_side,
            local_side=args.tile_side // 2,
        ),
        mask=MaskSampling(size_min=args.mask_min, size_max=args.mask_max),
        loss=LossConfig(recon=recon, adv=adv),
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--manifest", default=None,
                    help="existing manifest; omitted -> synthetic tiles are generated")
    ap.add_argument("--tile-count", type=int, default=500)
    ap.add_argument("--tile-side", type=int, default=64)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--scale", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--base-channels", type=int, default=16)
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--mask-min", type=int, default=12)
    ap.add_argument("--mask-max", type=int, default=24)
    ap.add_argument("--rho", type=int, default=2)
    ap.add_argument("--eval-seed", type=int, default=1234)
    args = ap.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.manifest is None:
        data_dir = out_dir / "data"
        write_synthetic_dataset(
            data_dir, count=args.tile_count, side=args.tile_side,
            seed=args.data_seed, test_fraction=args.test_fraction,
        )
        manifest_path = data_dir / "manifest.tsv"
    else:
        manifest_path = Path(args.manifest)

    noise = FallacyConfig(
        kind="crop", mask_min=args.mask_min, mask_max=args.mask_max,
        min_road_percent=5.0, seed=args.eval_seed,
    )

    per_seed: dict[str, list[tuple[float, float, float]]] = {p: [] for p in COMPARED_PRESETS}
    reports = {}
    for preset in COMPARED_PRESETS:
        for seed in args.seeds:
            run_dir = out_dir / f"{preset.replace('+', '_')}_seed{seed}"
            t0 = time.time()
            result = train(build_config(preset, args, seed), manifest_path, run_dir)
            generator = load_generator(result.checkpoint_path)
            report = evaluate_manifest(
                manifest_path, generator_inpainter(generator), noise,
                buffer_px=args.rho, scope="mask-region",
            )
            report.to_csv(run_dir / "report.csv")
            scores = report.aggregate()
            per_seed[preset].append(scores)
            reports[f"{preset} seed {seed}"] = report
            print(
                f"{preset} seed {seed}: trained {result.wall_seconds:.0f}s, "
                f"corr/comp/qual = {scores[0]:.3f}/{scores[1]:.3f}/{scores[2]:.3f}",
                flush=True,
            )

    mean_scores = {
        preset: tuple(sum(s[i] for s in rows) / len(rows) for i in range(3))
        for preset, rows in per_seed.items()
    }
    table_rows = {f"{p} (this run, mean of {len(args.seeds)} seed(s))": mean_scores[p] for p in COMPARED_PRESETS}
    for preset, ref in FULL_SCALE_REFERENCE.items():
        table_rows[f"{preset} (full-scale reference)"] = ref
    table = method_table(table_rows)

    wins = sum(
        1 for a, b in zip(per_seed["glcrc+l"], per_seed["vanilla-glcic"]) if a[2] >= b[2]
    )
    verdict = (
        f"trend (non-binding): glcrc+l quality >= vanilla-glcic quality in "
        f"{wins} of {len(args.seeds)} seed(s)"
    )

    (out_dir / "trend_report.md").write_text(table + "\n" + verdict + "\n", encoding="utf-8")
    (out_dir / "trend_report_by_type.md").write_text(
        comparison_table(reports, by_road_type=True), encoding="utf-8"
    )
    (out_dir / "trend_results.json").write_text(
        json.dumps(
            {
                "per_seed": {p: [list(s) for s in rows] for p, rows in per_seed.items()},
                "mean": {p: list(s) for p, s in mean_scores.items()},
                "full_scale_reference": {p: list(v) for p, v in FULL_SCALE_REFERENCE.items()},
                "quality_wins": wins,
                "seeds": args.seeds,
                "scale": args.scale,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(table, end="")
    print(verdict)
    return 0


if __name__ == "__main__":
    sys.exit(main())
