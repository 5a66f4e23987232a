"""Completion networks: generator and dual-context discriminator.

The generator is fully convolutional: 6 encoder convs (two of them stride 2),
a dilated middle stack running at quarter resolution, and two transposed-conv
upsampling layers back to full resolution with a sigmoid head. The `glcrc`
variant uses 8 dilated layers with dilations 2..9; the `glcic` variant uses 4
layers with dilations 2, 4, 8, 16.

The discriminator judges a full map and the local patch around the repair
with separate conv branches, concatenates their context vectors, and emits a
single plausibility logit.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from roadmend.raster import MaskRegion, RasterError

VARIANT_DILATIONS = {
    "glcrc": (2, 3, 4, 5, 6, 7, 8, 9),
    "glcic": (2, 4, 8, 16),
}


class ModelConfigError(ValueError):
    """Inconsistent architecture configuration."""


class CheckpointMismatchError(RuntimeError):
    """Checkpoint was produced under a different configuration."""


@dataclass(frozen=True)
class GeneratorConfig:
    variant: str = "glcrc"
    base_channels: int = 64
    in_channels: int = 2  # masked raster + mask indicator
    dilations: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANT_DILATIONS:
            raise ModelConfigError(
                f"unknown generator variant {self.variant!r} (valid: {', '.join(VARIANT_DILATIONS)})"
            )
        if self.base_channels < 1:
            raise ModelConfigError(f"base_channels must be >= 1, got {self.base_channels}")
        expected = VARIANT_DILATIONS[self.variant]
        dilations = tuple(self.dilations) or expected
        if dilations != expected:
            raise ModelConfigError(
                f"variant {self.variant!r} requires dilations {expected}, got {dilations}"
            )
        object.__setattr__(self, "dilations", dilations)


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 64
    global_side: int = 256
    local_side: int = 128

    def __post_init__(self) -> None:
        if self.local_side * 2 != self.global_side:
            raise ModelConfigError(
                f"local side must be half the global side, got {self.local_side} vs {self.global_side}"
            )
        if self.global_side % 64 != 0:
            raise ModelConfigError(
                f"global side must be divisible by 64, got {self.global_side}"
            )
        if self.base_channels < 1:
            raise ModelConfigError(f"base_channels must be >= 1, got {self.base_channels}")

    @property
    def context_dim(self) -> int:
        # 1024 at the reference width of 64 channels
        return 16 * self.base_channels


def _conv_block(cin: int, cout: int, kernel: int, stride: int = 1, dilation: int = 1) -> list[nn.Module]:
    # bias-free: batch normalization follows every one of these convs, and its
    # mean subtraction would cancel a bias exactly (leaving it gradient-dead)
    pad = dilation * (kernel // 2)
    return [
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=pad, dilation=dilation, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    ]


def build_dilated_stack(dilations: tuple[int, ...], channels: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    for d in dilations:
        layers += _conv_block(channels, channels, 3, dilation=d)
    return nn.Sequential(*layers)


class CompletionGenerator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c = config.base_channels
        self.encoder = nn.Sequential(
            *_conv_block(config.in_channels, c, 5),
            *_conv_block(c, 2 * c, 3, stride=2),
            *_conv_block(2 * c, 2 * c, 3),
            *_conv_block(2 * c, 4 * c, 3, stride=2),
            *_conv_block(4 * c, 4 * c, 3),
            *_conv_block(4 * c, 4 * c, 3),
        )
        self.dilated = build_dilated_stack(config.dilations, 4 * c)
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(4 * c, 2 * c, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(2 * c),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * c, c, 4, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(c),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, 1, 3, padding=1),
        )

    def features(self, masked: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Pre-sigmoid completion map; used by probes and the forward pass."""
        if masked.shape != mask.shape:
            raise RasterError(f"input/mask shape mismatch: {tuple(masked.shape)} vs {tuple(mask.shape)}")
        if masked.ndim != 4 or masked.shape[1] != 1:
            raise RasterError(f"expected (B, 1, H, W) tensors, got {tuple(masked.shape)}")
        if masked.shape[-2] % 4 != 0 or masked.shape[-1] % 4 != 0:
            raise RasterError(f"spatial side must be divisible by 4, got {tuple(masked.shape[-2:])}")
        x = torch.cat([masked, mask], dim=1)
        return self.decoder(self.dilated(self.encoder(x)))

    def forward(self, masked: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.features(masked, mask))


class DualContextDiscriminator(nn.Module):
    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        c = config.base_channels
        global_channels = [c, 2 * c, 4 * c, 8 * c, 8 * c, 8 * c]
        local_channels = [c, 2 * c, 4 * c, 8 * c, 8 * c]
        self.global_branch = self._branch(global_channels)
        self.local_branch = self._branch(local_channels)
        global_spatial = config.global_side // (2 ** len(global_channels))
        local_spatial = config.local_side // (2 ** len(local_channels))
        self.global_fc = nn.Linear(global_channels[-1] * global_spatial ** 2, config.context_dim)
        self.local_fc = nn.Linear(local_channels[-1] * local_spatial ** 2, config.context_dim)
        self.fusion = nn.Linear(2 * config.context_dim, 1)

    @staticmethod
    def _branch(channels: list[int]) -> nn.Sequential:
        layers: list[nn.Module] = []
        cin = 1
        for cout in channels:
            layers += _conv_block(cin, cout, 5, stride=2)
            cin = cout
        return nn.Sequential(*layers)

    def forward(self, full: torch.Tensor, patch: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        cfg = self.config
        if full.shape[-2:] != (cfg.global_side, cfg.global_side):
            raise RasterError(
                f"global input must be {cfg.global_side}x{cfg.global_side}, got {tuple(full.shape[-2:])}"
            )
        if patch.shape[-2:] != (cfg.local_side, cfg.local_side):
            raise RasterError(
                f"local patch must be {cfg.local_side}x{cfg.local_side}, got {tuple(patch.shape[-2:])}"
            )
        g = self.global_fc(self.global_branch(full).flatten(1))
        l = self.local_fc(self.local_branch(patch).flatten(1))
        logit = self.fusion(torch.cat([g, l], dim=1)).squeeze(1)
        return logit, torch.sigmoid(logit)


def local_window(region: MaskRegion, height: int, width: int, patch_side: int = 128) -> tuple[int, int]:
    """Top-left corner of the local patch: centered on the region, translated
    minimally to stay in bounds. The window always contains the full region."""
    region.check_inside(height, width)
    if region.size > patch_side:
        raise RasterError(f"region side {region.size} exceeds local patch side {patch_side}")
    if height < patch_side or width < patch_side:
        raise RasterError(f"raster {height}x{width} is smaller than the local patch side {patch_side}")
    top = min(max(region.top - (patch_side - region.size) // 2, 0), height - patch_side)
    left = min(max(region.left - (patch_side - region.size) // 2, 0), width - patch_side)
    return top, left


def crop_local(r: np.ndarray, region: MaskRegion, patch_side: int = 128) -> np.ndarray:
    """Square window of side `patch_side` around the region (see local_window)."""
    top, left = local_window(region, r.shape[-2], r.shape[-1], patch_side)
    return r[..., top:top + patch_side, left:left + patch_side].copy()


def param_count(config: GeneratorConfig | DiscriminatorConfig) -> int:
    """Number of learnable parameters implied by a config."""
    if isinstance(config, GeneratorConfig):
        module: nn.Module = CompletionGenerator(config)
    else:
        module = DualContextDiscriminator(config)
    return sum(p.numel() for p in module.parameters())


def config_hash(*configs) -> str:
    """Stable digest of one or more config dataclasses (order matters)."""
    blob = json.dumps([asdict(c) for c in configs], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


CHECKPOINT_VERSION = 1


def save_checkpoint(path, generator: CompletionGenerator, discriminator: DualContextDiscriminator | None, extra: dict | None = None) -> None:
    """Write a versioned checkpoint with configs, config hash, and named tensors."""
    configs = [generator.config] + ([discriminator.config] if discriminator is not None else [])
    payload = {
        "version": CHECKPOINT_VERSION,
        "generator_config": asdict(generator.config),
        "discriminator_config": asdict(discriminator.config) if discriminator is not None else None,
        "config_hash": config_hash(*configs),
        "generator_state": generator.state_dict(),
        "discriminator_state": discriminator.state_dict() if discriminator is not None else None,
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint_payload(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(
            f"unsupported checkpoint version {payload.get('version')!r}"
        )
    gen_cfg = GeneratorConfig(**{k: tuple(v) if k == "dilations" else v for k, v in payload["generator_config"].items()})
    configs = [gen_cfg]
    if payload["discriminator_config"] is not None:
        configs.append(DiscriminatorConfig(**payload["discriminator_config"]))
    if config_hash(*configs) != payload["config_hash"]:
        raise CheckpointMismatchError("checkpoint config hash does not match its stored config")
    return payload


def load_generator(path, expected: GeneratorConfig | None = None) -> CompletionGenerator:
    """Rebuild the generator from a checkpoint, rejecting config drift."""
    payload = load_checkpoint_payload(path)
    raw = payload["generator_config"]
    gen_cfg = GeneratorConfig(**{k: tuple(v) if k == "dilations" else v for k, v in raw.items()})
    if expected is not None and config_hash(expected) != config_hash(gen_cfg):
        raise CheckpointMismatchError(
            f"checkpoint generator config {gen_cfg} does not match expected {expected}"
        )
    generator = CompletionGenerator(gen_cfg)
    generator.load_state_dict(payload["generator_state"])
    generator.eval()
    return generator


def impulse_support(fn, canvas: int, channels: int, magnitude: float = 1.0) -> np.ndarray:
    """Boolean map of output pixels affected by a unit impulse at the canvas center.

    `fn` maps a (1, channels, canvas, canvas) float64 tensor to a
    (1, C, canvas, canvas) tensor; batch statistics must not leak across pixels
    (run modules in eval mode), otherwise the support saturates. Both impulse
    signs are probed and their supports unioned, since rectifiers can gate
    either sign alone.
    """
    base = torch.zeros(1, channels, canvas, canvas, dtype=torch.float64)
    support = np.zeros((canvas, canvas), dtype=bool)
    with torch.no_grad():
        base_out = fn(base)
        for sign in (1.0, -1.0):
            poked = base.clone()
            poked[0, :, canvas // 2, canvas // 2] = sign * magnitude
            delta = (fn(poked) - base_out).abs().amax(dim=1)
            support |= (delta[0] > 0).numpy()
    return support


def dilated_stack_support(variant: str, canvas: int, channels: int = 16, seed: int = 0) -> np.ndarray:
    """Impulse-response support of a variant's dilated stack at its own resolution."""
    torch.manual_seed(seed)
    stack = build_dilated_stack(VARIANT_DILATIONS[variant], channels).double()
    stack.eval()
    return impulse_support(stack, canvas, channels)


def generator_support(config: GeneratorConfig, canvas: int, seed: int = 0) -> np.ndarray:
    """Impulse-response support of the whole generator (pre-sigmoid).

    Probed in float64 with a large impulse: the bias-free trunk is positively
    homogeneous, so scaling changes no gate, but it keeps the response above
    cancellation noise at the biased output conv across ~20 layers.
    """
    torch.manual_seed(seed)
    generator = CompletionGenerator(config).double()
    generator.eval()
    zeros_mask = torch.zeros(1, 1, canvas, canvas, dtype=torch.float64)
    return impulse_support(lambda x: generator.features(x, zeros_mask), canvas, 1, magnitude=1e4)
