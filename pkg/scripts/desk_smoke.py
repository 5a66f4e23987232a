#!/usr/bin/env python3
"""Run the desk-scale training schedule (scale=0.01 -> 900/400/900 steps) on
64 synthetic line-drawing tiles and report wall time plus the Phase-1 loss
drop. This is the same configuration the acceptance suite times.

    python scripts/desk_smoke.py --out-dir /tmp/desk
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from roadmend.model import DiscriminatorConfig, GeneratorConfig
from roadmend.synth import write_synthetic_dataset
from roadmend.trainer import MaskSampling, TrainConfig, train


def desk_config(seed: int, tile_side: int = 64, base_channels: int = 16) -> TrainConfig:
    return TrainConfig(
        seed=seed,
        scale=0.01,
        batch_size=16,
        generator=GeneratorConfig(base_channels=base_channels),
        discriminator=DiscriminatorConfig(
            base_channels=base_channels, global_side=tile_side, local_side=tile_side // 2
        ),
        mask=MaskSampling(size_min=tile_side // 6 + 1, size_max=tile_side // 3 + tile_side // 12),
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tile-count", type=int, default=64)
    ap.add_argument("--tile-side", type=int, default=64)
    args = ap.parse_args(argv)

    out_dir = Path(args.out_dir)
    data_dir = out_dir / "data"
    write_synthetic_dataset(data_dir, count=args.tile_count, side=args.tile_side, seed=args.seed)
    cfg = desk_config(args.seed, tile_side=args.tile_side)
    print(f"phase lengths: {cfg.phase_lengths()}")
    result = train(cfg, data_dir / "manifest.tsv", out_dir / "run")
    recon = result.log.values(1, "recon")
    print(f"wall time: {result.wall_seconds:.0f}s")
    print(f"phase-1 recon: first {recon[0]:.5f} -> last {recon[-1]:.5f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
