#!/usr/bin/env python3
"""Generate a synthetic road-tile dataset (tiles + manifest) so the full CLI
pipeline can be exercised without any real label data.

    python scripts/make_synthetic_dataset.py --out /tmp/roads --count 64 --side 64
"""
from __future__ import annotations

import argparse
import sys

from roadmend.synth import write_synthetic_dataset


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=64)
    ap.add_argument("--side", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--test-fraction", type=float, default=0.25)
    args = ap.parse_args(argv)
    manifest = write_synthetic_dataset(
        args.out, count=args.count, side=args.side, seed=args.seed, test_fraction=args.test_fraction
    )
    print(
        f"wrote {len(manifest.entries)} tiles "
        f"(train={len(manifest.split_entries('train'))}, test={len(manifest.split_entries('test'))}) "
        f"under {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
