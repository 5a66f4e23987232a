"""Command-line entry point wiring all modules into reproducible experiments.

Subcommands: prepare, corrupt, train, inpaint, evaluate, report.
Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from roadmend.dataset import (
    DatasetError,
    NoValidRegionError,
    build_manifest,
    load_manifest,
)
from roadmend.fallacy import (
    FallacyConfig,
    FallacyError,
    corrupt,
    read_region_log,
    write_region_log,
)
from roadmend.losses import LossConfig, LossConfigError
from roadmend.metrics import (
    EvalItem,
    MetricsReport,
    TileScore,
    comparison_table,
    corrupt_manifest_items,
    evaluate_items,
    identity_inpainter,
    zero_inpainter,
)
from roadmend.model import (
    CheckpointMismatchError,
    DiscriminatorConfig,
    GeneratorConfig,
    ModelConfigError,
    load_checkpoint_payload,
    load_generator,
)
from roadmend.raster import MaskRegion, RasterError, load_raster, save_raster
from roadmend.trainer import (
    MaskSampling,
    TrainConfig,
    TrainError,
    TrainingDivergedError,
    train,
)

# Ablation presets: (generator variant, reconstruction loss, adversarial loss).
PRESETS = {
    "vanilla-glcic": ("glcic", "mse", "bce"),
    "glcrc": ("glcrc", "mse", "bce"),
    "glcrc+l": ("glcrc", "perceptual", "ralsgan"),
}

VALIDATION_ERRORS = (
    DatasetError,
    FallacyError,
    RasterError,
    LossConfigError,
    ModelConfigError,
    TrainError,
    CheckpointMismatchError,
)


class UsageError(Exception):
    pass


class SpecValidationError(Exception):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1, not 2."""

    def error(self, message: str):
        raise UsageError(message)


# --------------------------------------------------------------------- train spec

_SPEC_KEYS = {
    "name", "manifest", "out_dir", "preset", "seed", "scale",
    "g_pretrain_steps", "d_pretrain_steps", "joint_steps",
    "batch_size", "g_lr", "d_lr", "adam_beta1", "adam_beta2",
    "checkpoint_every", "tile_side", "base_channels",
    "mask", "loss",
}
_MASK_KEYS = {"size_min", "size_max", "min_road_percent", "max_tries"}
_LOSS_KEYS = {"recon", "adv", "adv_weight", "perceptual_layers", "extractor_provenance"}


def parse_experiment_spec(path) -> tuple[str, Path, Path, TrainConfig]:
    """Read a JSON experiment spec; collects every offending field before failing.

    Returns (name, manifest path, output directory, train config).
    """
    path = Path(path)
    problems: list[str] = []
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SpecValidationError([f"spec file not found: {path}"])
    except json.JSONDecodeError as exc:
        raise SpecValidationError([f"spec is not valid JSON: {exc}"])
    if not isinstance(data, dict):
        raise SpecValidationError(["spec must be a JSON object"])

    for key in sorted(set(data) - _SPEC_KEYS):
        problems.append(f"unknown field {key!r}")
    for key in ("name", "manifest"):
        if key not in data:
            problems.append(f"missing required field {key!r}")

    preset = data.get("preset")
    variant, recon, adv = "glcrc", "mse", "bce"
    if preset is not None:
        if preset not in PRESETS:
            problems.append(
                f"invalid preset {preset!r}; valid presets: {', '.join(sorted(PRESETS))}"
            )
        else:
            variant, recon, adv = PRESETS[preset]

    def sub_config(key: str, allowed: set[str]) -> dict:
        raw = data.get(key, {})
        if not isinstance(raw, dict):
            problems.append(f"field {key!r} must be an object")
            return {}
        for k in sorted(set(raw) - allowed):
            problems.append(f"unknown field {key}.{k!r}")
        return {k: v for k, v in raw.items() if k in allowed}

    mask_kwargs = sub_config("mask", _MASK_KEYS)
    loss_kwargs = sub_config("loss", _LOSS_KEYS)
    loss_kwargs.setdefault("recon", recon)
    loss_kwargs.setdefault("adv", adv)
    if "perceptual_layers" in loss_kwargs:
        loss_kwargs["perceptual_layers"] = tuple(loss_kwargs["perceptual_layers"])

    tile_side = data.get("tile_side", 256)
    base_channels = data.get("base_channels", 64)

    loss_cfg = gen_cfg = disc_cfg = mask_cfg = None
    try:
        loss_cfg = LossConfig(**loss_kwargs)
    except (LossConfigError, TypeError) as exc:
        problems.append(f"loss: {exc}")
    try:
        gen_cfg = GeneratorConfig(variant=variant, base_channels=base_channels)
    except (ModelConfigError, TypeError) as exc:
        problems.append(f"generator: {exc}")
    try:
        disc_cfg = DiscriminatorConfig(
            base_channels=base_channels, global_side=tile_side, local_side=tile_side // 2
        )
    except (ModelConfigError, TypeError) as exc:
        problems.append(f"discriminator (tile_side={tile_side}): {exc}")
    try:
        mask_cfg = MaskSampling(**mask_kwargs)
    except TypeError as exc:
        problems.append(f"mask: {exc}")

    cfg = None
    if not problems:
        try:
            cfg = TrainConfig(
                seed=data.get("seed", 0),
                scale=data.get("scale", 1.0),
                g_pretrain_steps=data.get("g_pretrain_steps", 90_000),
                d_pretrain_steps=data.get("d_pretrain_steps", 40_000),
                joint_steps=data.get("joint_steps", 90_000),
                batch_size=data.get("batch_size", 16),
                g_lr=data.get("g_lr", 1e-4),
                d_lr=data.get("d_lr", 4e-4),
                adam_beta1=data.get("adam_beta1", 0.5),
                adam_beta2=data.get("adam_beta2", 0.9),
                checkpoint_every=data.get("checkpoint_every", 0),
                mask=mask_cfg,
                loss=loss_cfg,
                generator=gen_cfg,
                discriminator=disc_cfg,
            )
        except (TrainError, TypeError) as exc:
            problems.append(f"train config: {exc}")

    if problems:
        raise SpecValidationError(problems)
    manifest = Path(data["manifest"])
    if not manifest.is_absolute():
        manifest = path.parent / manifest
    out_root = Path(data.get("out_dir", "runs"))
    if not out_root.is_absolute():
        out_root = path.parent / out_root
    return data["name"], manifest, out_root / data["name"], cfg


# --------------------------------------------------------------------- commands

def cmd_prepare(args) -> int:
    manifest = build_manifest(
        root=args.root,
        out_dir=args.out,
        seed=args.seed,
        tile_target=args.tile_target,
        train_fraction=args.train_fraction,
        keep_fraction=args.keep_fraction,
        tag_file=args.tags,
    )
    print(
        f"wrote {len(manifest.entries)} tiles to {args.out} "
        f"(train={manifest.header['train_tiles']}, test={manifest.header['test_tiles']})"
    )
    return 0


def cmd_corrupt(args) -> int:
    cfg = FallacyConfig(
        kind=args.kind,
        noise_percent=args.n,
        erosion_kernel=args.kernel,
        mask_min=args.mmin,
        mask_max=args.mmax,
        min_road_percent=args.p,
        seed=args.seed,
    )
    manifest = load_manifest(args.in_manifest)
    entries = manifest.entries if args.split == "all" else manifest.split_entries(args.split)
    if not entries:
        raise DatasetError(f"manifest has no entries for split {args.split!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    skipped = 0
    for entry in entries:
        tile = load_raster(manifest.tile_path(entry))
        try:
            noisy, region = corrupt(tile, cfg, tile_id=entry.tile_id)
        except NoValidRegionError:
            skipped += 1
            continue
        save_raster(noisy, out_dir / f"{entry.tile_id}.png")
        rows.append((entry.tile_id, region, cfg.kind))
    write_region_log(out_dir / "regions.tsv", rows, cfg)
    print(f"corrupted {len(rows)} tiles into {out_dir} (skipped {skipped} without a valid region)")
    return 0


def cmd_train(args) -> int:
    name, manifest, out_dir, cfg = parse_experiment_spec(args.spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "experiment.json").write_text(
        Path(args.spec).read_text(encoding="utf-8"), encoding="utf-8"
    )
    result = train(cfg, manifest, out_dir, resume_from=args.resume)
    p1, p2, p3 = cfg.phase_lengths()
    print(
        f"run {name!r} finished: phases {p1}/{p2}/{p3}, "
        f"{result.wall_seconds:.1f}s, checkpoint {result.checkpoint_path}"
    )
    return 0


def _parse_region(text: str) -> MaskRegion:
    try:
        top, left, size = (int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--region must be `top,left,size`, got {text!r}")
    return MaskRegion(top=top, left=left, size=size)


def _check_region_side(region: MaskRegion, checkpoint_path) -> None:
    payload = load_checkpoint_payload(checkpoint_path)
    disc = payload.get("discriminator_config")
    local_side = disc["local_side"] if disc else 128
    if region.size > local_side:
        raise RasterError(
            f"region side {region.size} exceeds the model's local patch side {local_side}"
        )


def cmd_inpaint(args) -> int:
    from roadmend.inpaint import complete_raster

    generator = load_generator(args.checkpoint)
    if args.region is not None:
        if args.input is None or args.out is None:
            raise UsageError("--region mode needs --input and --out")
        region = _parse_region(args.region)
        _check_region_side(region, args.checkpoint)
        completed = complete_raster(generator, load_raster(args.input), region)
        save_raster(completed, args.out)
        print(f"wrote {args.out}")
        return 0
    if args.region_log is None:
        raise UsageError("provide either --region or --region-log")
    if args.tiles_dir is None or args.out_dir is None:
        raise UsageError("--region-log mode needs --tiles-dir and --out-dir")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for tile_id, region, _kind in read_region_log(args.region_log):
        _check_region_side(region, args.checkpoint)
        tile = load_raster(Path(args.tiles_dir) / f"{tile_id}.png")
        save_raster(complete_raster(generator, tile, region), out_dir / f"{tile_id}.png")
        count += 1
    print(f"inpainted {count} tiles into {out_dir}")
    return 0


def _resolve_inpainter(args):
    if args.debug_identity:
        return identity_inpainter, "debug-identity"
    if args.debug_zero:
        return zero_inpainter, "debug-zero"
    if args.checkpoint is None:
        raise UsageError("provide --checkpoint or one of --debug-identity/--debug-zero")
    from roadmend.inpaint import generator_inpainter

    return generator_inpainter(load_generator(args.checkpoint)), f"checkpoint:{args.checkpoint}"


def cmd_evaluate(args) -> int:
    inpainter, label = _resolve_inpainter(args)
    manifest = load_manifest(args.manifest)
    if args.region_log is not None:
        if args.corrupted_dir is None:
            raise UsageError("--region-log mode needs --corrupted-dir")
        by_id = {e.tile_id: e for e in manifest.entries}
        items = []
        for tile_id, region, _kind in read_region_log(args.region_log):
            if tile_id not in by_id:
                raise DatasetError(f"region log references unknown tile id {tile_id!r}")
            entry = by_id[tile_id]
            items.append(
                EvalItem(
                    tile_id=tile_id,
                    road_type=entry.road_type,
                    target=load_raster(manifest.tile_path(entry)),
                    noisy=load_raster(Path(args.corrupted_dir) / f"{tile_id}.png"),
                    region=region,
                )
            )
    else:
        cfg = FallacyConfig(
            kind=args.kind,
            noise_percent=args.n,
            erosion_kernel=args.kernel,
            mask_min=args.mmin,
            mask_max=args.mmax,
            min_road_percent=args.p,
            seed=args.seed,
        )
        items = corrupt_manifest_items(manifest, cfg, split=args.split)
    report = evaluate_items(items, inpainter, buffer_px=args.rho, scope=args.scope)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "report.csv")
    table = report.to_table(label=label)
    (out_dir / "report.md").write_text(table, encoding="utf-8")
    (out_dir / "report_meta.json").write_text(
        json.dumps(
            {"buffer_px": args.rho, "scope": args.scope, "tiles": len(report.rows), "inpainter": label},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(table, end="")
    return 0


def _load_scores_csv(path) -> MetricsReport:
    rows = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "tile_id,road_type,correctness,completeness,quality":
        raise UsageError(f"{path} is not a metrics CSV")
    for line in lines[1:]:
        if not line.strip():
            continue
        tile_id, road_type, corr, comp, qual = line.split(",")
        rows.append(TileScore(tile_id, road_type, float(corr), float(comp), float(qual)))
    return MetricsReport(rows=rows, buffer_px=-1, scope="from-csv")


def cmd_report(args) -> int:
    reports: dict[str, MetricsReport] = {}
    for spec in args.csv:
        if "=" not in spec:
            raise UsageError(f"--csv expects `label=path`, got {spec!r}")
        label, _, path = spec.partition("=")
        reports[label] = _load_scores_csv(path)
    table = comparison_table(reports, by_road_type=args.by_road_type)
    if args.out is not None:
        Path(args.out).write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadmend", description=__doc__)
    sub = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )
    sub_kwargs = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}

    p = sub.add_parser("prepare", help="build a tile manifest from a directory of label rasters",
                       **sub_kwargs)
    p.add_argument("--root", required=True, help="directory of source label PNGs")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--out", required=True, help="output directory for tiles + manifest")
    p.add_argument("--tags", default=None, help="sidecar file of tile_id<TAB>road_type lines")
    p.add_argument("--tile-target", type=int, default=256, help="model tile side")
    p.add_argument("--train-fraction", type=float, default=0.95)
    p.add_argument("--keep-fraction", type=float, default=1.0,
                   help="deterministic subsampling of source images before splitting")
    p.set_defaults(fn=cmd_prepare)

    p = sub.add_parser("corrupt", help="apply synthetic segmentation fallacies to manifest tiles",
                       **sub_kwargs)
    p.add_argument("--kind", required=True, choices=("salt", "pepper", "blur", "crop"))
    p.add_argument("--n", type=float, default=5.0, help="percent of region pixels for salt/pepper")
    p.add_argument("--kernel", type=int, default=3, help="erosion kernel for blur")
    p.add_argument("--mmin", type=int, default=48, help="minimum mask side")
    p.add_argument("--mmax", type=int, default=96, help="maximum mask side")
    p.add_argument("--p", type=float, default=5.0, help="minimum percent of road pixels in the region")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="all")
    p.set_defaults(fn=cmd_corrupt)

    p = sub.add_parser("train", help="run the three-phase schedule from an experiment spec",
                       **sub_kwargs)
    p.add_argument("--spec", required=True, help="JSON experiment spec file")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("inpaint", help="repair raster regions with a trained model",
                       **sub_kwargs)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", default=None, help="single raster to repair")
    p.add_argument("--region", default=None, help="top,left,size")
    p.add_argument("--out", default=None, help="output PNG for --region mode")
    p.add_argument("--region-log", default=None, help="batch mode: regions.tsv from `corrupt`")
    p.add_argument("--tiles-dir", default=None, help="directory of input tiles for batch mode")
    p.add_argument("--out-dir", default=None, help="output directory for batch mode")
    p.set_defaults(fn=cmd_inpaint)

    p = sub.add_parser("evaluate", help="corrupt, repair, and score a manifest split",
                       **sub_kwargs)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--debug-identity", action="store_true", help="perfect-repair oracle (self-test)")
    p.add_argument("--debug-zero", action="store_true", help="all-background oracle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=("salt", "pepper", "blur", "crop"), default="crop")
    p.add_argument("--n", type=float, default=5.0)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--mmin", type=int, default=48)
    p.add_argument("--mmax", type=int, default=96)
    p.add_argument("--p", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--region-log", default=None, help="score pre-corrupted tiles from `corrupt`")
    p.add_argument("--corrupted-dir", default=None)
    p.add_argument("--rho", type=int, default=2, help="metric buffer in pixels")
    p.add_argument("--scope", choices=("mask-region", "full-tile"), default="mask-region")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate comparison table from metric CSVs",
                       **sub_kwargs)
    p.add_argument("--csv", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--by-road-type", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SpecValidationError as exc:
        print("invalid experiment spec:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
