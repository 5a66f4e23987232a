"""Three-phase training schedule with checkpointing and deterministic resumption.

Phase 1 pretrains the generator alone on the reconstruction loss, phase 2
pretrains the discriminator against the frozen generator, and phase 3
alternates one discriminator step with one generator step on the combined
objective. A scale factor maps paper-scale step counts (90k/40k/90k) down to
desk scale; scale=0.01 gives 900/400/900.

Determinism contract: given the same config and seed, two runs produce
bitwise-identical run logs, and an interrupted-then-resumed run's log equals
an uninterrupted run's log. Checkpoints therefore carry optimizer state and
the exact RNG states alongside the network tensors.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from roadmend.dataset import (
    Manifest,
    NoValidRegionError,
    load_manifest,
    sample_training_example,
)
from roadmend.losses import (
    AdvLogits,
    LossConfig,
    adversarial_d_loss,
    adversarial_g_loss,
    build_feature_extractor,
    compose_completion,
    reconstruction_loss,
)
from roadmend.model import (
    CompletionGenerator,
    DiscriminatorConfig,
    DualContextDiscriminator,
    GeneratorConfig,
    local_window,
    save_checkpoint,
    load_checkpoint_payload,
)
from roadmend.raster import load_raster, require_binary
from roadmend.seeding import derive_rng, derive_seed
import hashlib


class TrainError(RuntimeError):
    pass


class TrainingDivergedError(TrainError):
    """A loss went non-finite; training aborts rather than silently skipping."""


@dataclass(frozen=True)
class MaskSampling:
    size_min: int = 48
    size_max: int = 96
    min_road_percent: float = 5.0
    max_tries: int = 64


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    scale: float = 1.0
    g_pretrain_steps: int = 90_000
    d_pretrain_steps: int = 40_000
    joint_steps: int = 90_000
    batch_size: int = 16
    g_lr: float = 1e-4
    d_lr: float = 4e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    checkpoint_every: int = 0  # 0 = final checkpoint only
    mask: MaskSampling = field(default_factory=MaskSampling)
    loss: LossConfig = field(default_factory=LossConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)

    def __post_init__(self) -> None:
        if not (0.0 < self.scale <= 1.0):
            raise TrainError(f"scale must lie in (0, 1], got {self.scale}")
        for name in ("g_pretrain_steps", "d_pretrain_steps", "joint_steps"):
            if getattr(self, name) < 0:
                raise TrainError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mask.size_max > self.discriminator.local_side:
            raise TrainError(
                f"mask side {self.mask.size_max} exceeds the local patch side "
                f"{self.discriminator.local_side}"
            )

    def phase_lengths(self) -> tuple[int, int, int]:
        def scaled(base: int) -> int:
            return 0 if base == 0 else max(1, round(self.scale * base))

        return (scaled(self.g_pretrain_steps), scaled(self.d_pretrain_steps), scaled(self.joint_steps))


def train_config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RunLog:
    """Per-step loss records plus the config snapshot they were produced under.

    On disk: `run_log.tsv` with `phase<TAB>step<TAB>loss_name<TAB>value` lines
    (value formatted with full round-trip precision so equal runs are equal
    byte-for-byte), and `run_config.json` holding the snapshot.
    """

    path: Path
    config: dict
    records: list[tuple[int, int, str, float]] = field(default_factory=list)

    def append(self, phase: int, step: int, name: str, value: float) -> None:
        self.records.append((phase, step, name, value))
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(f"{phase}\t{step}\t{name}\t{value!r}\n")

    def values(self, phase: int, name: str) -> list[float]:
        return [v for p, _, n, v in self.records if p == phase and n == name]


def read_run_log(path) -> list[tuple[int, int, str, float]]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        phase, step, name, value = line.split("\t")
        records.append((int(phase), int(step), name, float(value)))
    return records


@dataclass
class TrainResult:
    checkpoint_path: Path
    log: RunLog
    wall_seconds: float
    stopped_early: bool


class _TileBank:
    """Train-split tiles as float32 tensors, loaded once."""

    def __init__(self, manifest: Manifest, expected_side: int):
        entries = manifest.split_entries("train")
        if not entries:
            raise TrainError("manifest has no train tiles")
        self.ids = [e.tile_id for e in entries]
        self.tiles = []
        for e in entries:
            tile = load_raster(manifest.tile_path(e))
            require_binary(tile, f"tile {e.tile_id}")
            if tile.shape != (expected_side, expected_side):
                raise TrainError(
                    f"tile {e.tile_id} is {tile.shape[0]}x{tile.shape[1]}, "
                    f"expected {expected_side}x{expected_side}"
                )
            self.tiles.append(tile)

    def __len__(self) -> int:
        return len(self.tiles)


def _sample_batch(bank: _TileBank, cfg: TrainConfig, batch_rng, mask_rng):
    """Assemble one batch; tiles with no valid region are redrawn."""
    inputs, masks, targets, regions = [], [], [], []
    failures = 0
    while len(targets) < cfg.batch_size:
        idx = int(batch_rng.integers(len(bank)))
        try:
            ex = sample_training_example(
                bank.tiles[idx],
                mask_rng,
                cfg.mask.size_min,
                cfg.mask.size_max,
                cfg.mask.min_road_percent,
                cfg.mask.max_tries,
                tile_id=bank.ids[idx],
            )
        except NoValidRegionError:
            failures += 1
            if failures > 10 * cfg.batch_size:
                raise TrainError(
                    "could not assemble a batch: too many tiles without a valid mask region"
                )
            continue
        inputs.append(ex.input)
        masks.append(ex.mask)
        targets.append(ex.target)
        regions.append(ex.region)
    to_tensor = lambda arrs: torch.from_numpy(np.stack(arrs)).unsqueeze(1)
    return to_tensor(inputs), to_tensor(masks), to_tensor(targets), regions


def _local_crops(full: torch.Tensor, regions, patch_side: int) -> torch.Tensor:
    h, w = full.shape[-2:]
    crops = []
    for i, region in enumerate(regions):
        top, left = local_window(region, h, w, patch_side)
        crops.append(full[i, :, top:top + patch_side, left:left + patch_side])
    return torch.stack(crops)


def _check_finite(value: float, name: str, phase: int, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(f"non-finite {name} loss at phase {phase} step {step}")


class _Session:
    """Everything mutable a training run owns."""

    def __init__(self, cfg: TrainConfig, manifest: Manifest, out_dir: Path):
        self.cfg = cfg
        self.out_dir = out_dir
        self.bank = _TileBank(manifest, cfg.discriminator.global_side)
        torch.manual_seed(derive_seed(cfg.seed, "model-init"))
        self.generator = CompletionGenerator(cfg.generator)
        self.discriminator = DualContextDiscriminator(cfg.discriminator)
        self.g_opt = torch.optim.Adam(
            self.generator.parameters(), lr=cfg.g_lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
        )
        self.d_opt = torch.optim.Adam(
            self.discriminator.parameters(), lr=cfg.d_lr, betas=(cfg.adam_beta1, cfg.adam_beta2)
        )
        self.batch_rng = derive_rng(cfg.seed, "batch")
        self.mask_rng = derive_rng(cfg.seed, "mask")
        self.extractor = (
            build_feature_extractor(cfg.loss.extractor_provenance)
            if cfg.loss.recon == "perceptual"
            else None
        )
        self.phase = 1
        self.step_in_phase = 0
        self.global_step = 0

    def config_snapshot(self) -> dict:
        return {
            "train_config": asdict(self.cfg),
            "train_config_hash": train_config_hash(self.cfg),
            "phase_lengths": list(self.cfg.phase_lengths()),
            "extractor_provenance": getattr(self.extractor, "provenance", None),
        }

    def save(self, path: Path, log: RunLog) -> None:
        save_checkpoint(
            path,
            self.generator,
            self.discriminator,
            extra={
                "train_config": asdict(self.cfg),
                "train_config_hash": train_config_hash(self.cfg),
                "phase": self.phase,
                "step_in_phase": self.step_in_phase,
                "global_step": self.global_step,
                "g_opt_state": self.g_opt.state_dict(),
                "d_opt_state": self.d_opt.state_dict(),
                "batch_rng_state": self.batch_rng.bit_generator.state,
                "mask_rng_state": self.mask_rng.bit_generator.state,
                "log_records": len(log.records),
            },
        )

    def restore(self, checkpoint_path: Path) -> int:
        payload = load_checkpoint_payload(checkpoint_path)
        extra = payload["extra"]
        if extra.get("train_config_hash") != train_config_hash(self.cfg):
            raise TrainError(
                "checkpoint was produced under a different training config; refusing to resume"
            )
        self.generator.load_state_dict(payload["generator_state"])
        self.discriminator.load_state_dict(payload["discriminator_state"])
        self.g_opt.load_state_dict(extra["g_opt_state"])
        self.d_opt.load_state_dict(extra["d_opt_state"])
        self.batch_rng.bit_generator.state = extra["batch_rng_state"]
        self.mask_rng.bit_generator.state = extra["mask_rng_state"]
        self.phase = extra["phase"]
        self.step_in_phase = extra["step_in_phase"]
        self.global_step = extra["global_step"]
        return extra["log_records"]

    # ------------------------------------------------------------------ steps

    def g_pretrain_step(self, log: RunLog, step: int) -> None:
        inputs, masks, targets, _ = _sample_batch(self.bank, self.cfg, self.batch_rng, self.mask_rng)
        self.generator.train()
        self.g_opt.zero_grad()
        pred = self.generator(inputs, masks)
        loss = reconstruction_loss(pred, targets, masks, self.cfg.loss, self.extractor)
        loss.backward()
        self.g_opt.step()
        value = float(loss.item())
        _check_finite(value, "recon", 1, step)
        log.append(1, step, "recon", value)

    def d_pretrain_step(self, log: RunLog, step: int) -> None:
        cfg = self.cfg
        inputs, masks, targets, regions = _sample_batch(self.bank, cfg, self.batch_rng, self.mask_rng)
        self.generator.eval()
        with torch.no_grad():
            pred = self.generator(inputs, masks)
            fake_full = compose_completion(pred, targets, masks)
        self.discriminator.train()
        self.d_opt.zero_grad()
        patch = cfg.discriminator.local_side
        real_logit, _ = self.discriminator(targets, _local_crops(targets, regions, patch))
        fake_logit, _ = self.discriminator(fake_full, _local_crops(fake_full, regions, patch))
        loss = adversarial_d_loss(AdvLogits(real=real_logit, fake=fake_logit), cfg.loss)
        loss.backward()
        self.d_opt.step()
        value = float(loss.item())
        _check_finite(value, "adv_d", 2, step)
        log.append(2, step, "adv_d", value)

    def joint_step(self, log: RunLog, step: int) -> None:
        cfg = self.cfg
        patch = cfg.discriminator.local_side
        inputs, masks, targets, regions = _sample_batch(self.bank, cfg, self.batch_rng, self.mask_rng)
        self.generator.train()
        self.discriminator.train()
        pred = self.generator(inputs, masks)
        fake_full = compose_completion(pred, targets, masks)
        real_patches = _local_crops(targets, regions, patch)

        # discriminator step on detached fakes
        self.d_opt.zero_grad()
        real_logit, _ = self.discriminator(targets, real_patches)
        fake_detached = fake_full.detach()
        fake_logit, _ = self.discriminator(fake_detached, _local_crops(fake_detached, regions, patch))
        d_loss = adversarial_d_loss(AdvLogits(real=real_logit, fake=fake_logit), cfg.loss)
        d_loss.backward()
        self.d_opt.step()

        # generator step against the updated discriminator
        self.g_opt.zero_grad()
        with torch.no_grad():
            real_logit_g, _ = self.discriminator(targets, real_patches)
        fake_logit_g, _ = self.discriminator(fake_full, _local_crops(fake_full, regions, patch))
        recon = reconstruction_loss(pred, targets, masks, cfg.loss, self.extractor)
        adv_g = adversarial_g_loss(AdvLogits(real=real_logit_g, fake=fake_logit_g), cfg.loss)
        g_loss = recon + cfg.loss.adv_weight * adv_g
        g_loss.backward()
        self.g_opt.step()

        for name, tensor_value in (("recon", recon), ("adv_g", adv_g), ("adv_d", d_loss)):
            value = float(tensor_value.item())
            _check_finite(value, name, 3, step)
            log.append(3, step, name, value)

    def run_step(self, log: RunLog) -> None:
        step = self.step_in_phase + 1  # 1-based in logs
        if self.phase == 1:
            self.g_pretrain_step(log, step)
        elif self.phase == 2:
            self.d_pretrain_step(log, step)
        else:
            self.joint_step(log, step)
        self.step_in_phase += 1
        self.global_step += 1


def _truncate_log(path: Path, records: int) -> None:
    if not path.exists():
        raise TrainError(f"run log missing for resume: {path}")
    lines = path.read_text(encoding="utf-8").splitlines(keepends=True)
    if len(lines) < records:
        raise TrainError(
            f"run log at {path} has {len(lines)} records, checkpoint expects {records}"
        )
    path.write_text("".join(lines[:records]), encoding="utf-8")


def train(
    cfg: TrainConfig,
    manifest_path,
    out_dir,
    stop_after: int | None = None,
    resume_from=None,
) -> TrainResult:
    """Run (or resume) the schedule; returns the final checkpoint and run log.

    `stop_after` ends the run cleanly after that many global steps and writes
    an interrupt checkpoint, which `resume_from` later continues such that the
    concatenated run log is identical to an uninterrupted run's.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    session = _Session(cfg, manifest, out_dir)
    log_path = out_dir / "run_log.tsv"
    log = RunLog(path=log_path, config=session.config_snapshot())

    if resume_from is not None:
        keep = session.restore(Path(resume_from))
        _truncate_log(log_path, keep)
        log.records = read_run_log(log_path)
    else:
        (out_dir / "run_config.json").write_text(
            json.dumps(log.config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        log_path.write_text("", encoding="utf-8")

    lengths = cfg.phase_lengths()
    start = time.monotonic()
    while session.phase <= 3:
        length = lengths[session.phase - 1]
        while session.step_in_phase < length:
            if stop_after is not None and session.global_step >= stop_after:
                path = out_dir / f"interrupt_{session.global_step:08d}.pt"
                session.save(path, log)
                return TrainResult(path, log, time.monotonic() - start, stopped_early=True)
            session.run_step(log)
            if cfg.checkpoint_every and session.global_step % cfg.checkpoint_every == 0:
                session.save(out_dir / f"step_{session.global_step:08d}.pt", log)
        session.phase += 1
        session.step_in_phase = 0

    if stop_after is not None and session.global_step >= stop_after:
        # stop landed at (or past) the very end; fall through to a normal finish
        pass
    final_path = out_dir / "final.pt"
    session.save(final_path, log)
    return TrainResult(final_path, log, time.monotonic() - start, stopped_early=False)


def resume(cfg: TrainConfig, manifest_path, out_dir, checkpoint_path, stop_after: int | None = None) -> TrainResult:
    """Continue training from an interrupt checkpoint (hash-checked)."""
    return train(cfg, manifest_path, out_dir, stop_after=stop_after, resume_from=checkpoint_path)


def smoke_train(
    steps: int,
    out_dir,
    tile_count: int = 32,
    tile_side: int = 64,
    seed: int = 0,
    batch_size: int = 8,
    base_channels: int = 16,
) -> RunLog:
    """Tiny generator-pretrain run on procedural line tiles (CI gate).

    Builds a synthetic manifest under `out_dir`, trains Phase 1 for `steps`
    steps, and returns the run log.
    """
    from roadmend.synth import write_synthetic_dataset

    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    write_synthetic_dataset(data_dir, count=tile_count, side=tile_side, seed=seed)
    cfg = TrainConfig(
        seed=seed,
        scale=1.0,
        g_pretrain_steps=steps,
        d_pretrain_steps=0,
        joint_steps=0,
        batch_size=batch_size,
        generator=GeneratorConfig(base_channels=base_channels),
        discriminator=DiscriminatorConfig(
            base_channels=base_channels, global_side=tile_side, local_side=tile_side // 2
        ),
        mask=MaskSampling(size_min=max(4, tile_side // 6), size_max=tile_side // 3, min_road_percent=5.0),
    )
    result = train(cfg, data_dir / "manifest.tsv", out_dir / "run")
    return result.log
