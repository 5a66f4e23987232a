"""Training objectives: masked MSE, perceptual reconstruction, BCE GAN, and
relativistic average least-squares GAN losses, plus the combined generator
objective.

Adversarial losses come in two flavors selected by LossConfig.adv:

* ``bce``: the classic minimax cross-entropy on post-sigmoid probabilities.
* ``ralsgan``: least squares on *raw logits*, where each critic output is
  compared against the mean critic output of the opposite class:

      D: 0.5*mean[(Dr - mean(Df) - 1)^2] + 0.5*mean[(Df - mean(Dr) + 1)^2]
      G: 0.5*mean[(Df - mean(Dr) - 1)^2] + 0.5*mean[(Dr - mean(Df) + 1)^2]

  Logits stay pre-sigmoid here: a squashed critic output collapses the least
  squares gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

PROB_EPS = 1e-7

RECON_KINDS = ("mse", "perceptual")
ADV_KINDS = ("bce", "ralsgan")
EXTRACTOR_PROVENANCES = ("fixed-seed-random", "pretrained-classifier", "auto")


class LossConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    """(mse, bce) reproduces the vanilla composition; (perceptual, ralsgan)
    is the enhanced-loss composition."""

    recon: str = "mse"
    adv: str = "bce"
    adv_weight: float = 4e-4
    perceptual_layers: tuple[str, ...] = ("stage2", "stage3")
    extractor_provenance: str = "fixed-seed-random"

    def __post_init__(self) -> None:
        if self.recon not in RECON_KINDS:
            raise LossConfigError(f"unknown recon loss {self.recon!r} (valid: {', '.join(RECON_KINDS)})")
        if self.adv not in ADV_KINDS:
            raise LossConfigError(f"unknown adversarial loss {self.adv!r} (valid: {', '.join(ADV_KINDS)})")
        if self.adv_weight < 0:
            raise LossConfigError(f"adv_weight must be >= 0, got {self.adv_weight}")
        if self.extractor_provenance not in EXTRACTOR_PROVENANCES:
            raise LossConfigError(
                f"unknown extractor provenance {self.extractor_provenance!r} "
                f"(valid: {', '.join(EXTRACTOR_PROVENANCES)})"
            )
        object.__setattr__(self, "perceptual_layers", tuple(self.perceptual_layers))


def masked_mse(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error restricted to mask==1 pixels."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, target {tuple(target.shape)}, mask {tuple(mask.shape)}"
        )
    denom = mask.sum()
    if denom.item() == 0:
        raise ValueError("mask is all zero; masked MSE is undefined")
    return (mask * (pred - target) ** 2).sum() / denom


class RandomConvExtractor(nn.Module):
    """Frozen random conv stack used as an offline perceptual feature extractor.

    Weights are drawn once from a fixed seed, so the extractor is identical
    across runs and machines; random projections still penalize blur. Stages
    are named stage1..stageN, each halving resolution.
    """

    def __init__(self, num_layers: int = 4, base_channels: int = 8, in_channels: int = 1, seed: int = 0):
        super().__init__()
        self.provenance = "fixed-seed-random"
        self.in_channels = in_channels
        generator = torch.Generator().manual_seed(seed)
        stages = {}
        cin = in_channels
        for i in range(num_layers):
            cout = base_channels * (2 ** i)
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) / (3.0 * cin ** 0.5))
                conv.bias.zero_()
            stages[f"stage{i + 1}"] = nn.Sequential(conv, nn.ReLU())
            cin = cout
        self.stages = nn.ModuleDict(stages)
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def stage_names(self) -> tuple[str, ...]:
        return tuple(self.stages.keys())

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {}
        for name, stage in self.stages.items():
            x = stage(x)
            out[name] = x
        return out


class PretrainedBackboneExtractor(nn.Module):
    """Mid-level stages of a pretrained VGG16 classifier (requires torchvision
    weights to be available locally or downloadable)."""

    STAGE_SLICES = {"stage1": (0, 4), "stage2": (4, 9), "stage3": (9, 16), "stage4": (16, 23)}

    def __init__(self):
        super().__init__()
        from torchvision.models import VGG16_Weights, vgg16

        features = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
        self.provenance = "pretrained-classifier"
        self.in_channels = 3
        self.stages = nn.ModuleDict(
            {name: nn.Sequential(*[features[i] for i in range(a, b)]) for name, (a, b) in self.STAGE_SLICES.items()}
        )
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def stage_names(self) -> tuple[str, ...]:
        return tuple(self.stages.keys())

    def forward(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        out = {}
        for name, stage in self.stages.items():
            x = stage(x)
            out[name] = x
        return out


def build_feature_extractor(provenance: str = "fixed-seed-random") -> nn.Module:
    """Resolve a LossConfig provenance to a frozen extractor instance.

    ``auto`` tries the pretrained backbone and falls back to the fixed-seed
    random stack when weights are unavailable (e.g. offline).
    """
    if provenance == "fixed-seed-random":
        return RandomConvExtractor()
    if provenance == "pretrained-classifier":
        return PretrainedBackboneExtractor()
    if provenance == "auto":
        try:
            return PretrainedBackboneExtractor()
        except Exception:
            return RandomConvExtractor()
    raise LossConfigError(f"unknown extractor provenance {provenance!r}")


def perceptual_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    extractor: nn.Module,
    layers: tuple[str, ...] | None = None,
) -> torch.Tensor:
    """Mean over layers of per-layer mean-squared feature differences.

    Single-channel inputs are replicated to the extractor's expected channel
    count. The same frozen extractor instance must serve pred and target.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    names = layers if layers is not None else extractor.stage_names
    unknown = [n for n in names if n not in extractor.stage_names]
    if unknown:
        raise ValueError(f"unknown extractor layer(s) {unknown}; available: {list(extractor.stage_names)}")
    if pred.shape[1] != extractor.in_channels:
        if pred.shape[1] != 1:
            raise ValueError(
                f"cannot adapt {pred.shape[1]}-channel input to extractor expecting {extractor.in_channels}"
            )
        pred = pred.expand(-1, extractor.in_channels, -1, -1)
        target = target.expand(-1, extractor.in_channels, -1, -1)
    feats_pred = extractor(pred)
    feats_target = extractor(target)
    per_layer = [((feats_pred[n] - feats_target[n]) ** 2).mean() for n in names]
    return torch.stack(per_layer).mean()


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def bce_gan_d(real_prob: torch.Tensor, fake_prob: torch.Tensor) -> torch.Tensor:
    """Discriminator cross-entropy: -mean(log real) - mean(log(1 - fake))."""
    real_prob = _clamp_prob(real_prob)
    fake_prob = _clamp_prob(fake_prob)
    return -(torch.log(real_prob).mean() + torch.log(1.0 - fake_prob).mean())


def bce_gan_g(fake_prob: torch.Tensor) -> torch.Tensor:
    """Generator cross-entropy: -mean(log fake)."""
    return -torch.log(_clamp_prob(fake_prob)).mean()


def _require_nonempty(*batches: torch.Tensor) -> None:
    for b in batches:
        if b.numel() == 0:
            raise ValueError("relativistic losses need non-empty logit batches")


def ralsgan_d(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    _require_nonempty(real_logits, fake_logits)
    rel_real = real_logits - fake_logits.mean()
    rel_fake = fake_logits - real_logits.mean()
    return 0.5 * ((rel_real - 1.0) ** 2).mean() + 0.5 * ((rel_fake + 1.0) ** 2).mean()


def ralsgan_g(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    _require_nonempty(real_logits, fake_logits)
    rel_fake = fake_logits - real_logits.mean()
    rel_real = real_logits - fake_logits.mean()
    return 0.5 * ((rel_fake - 1.0) ** 2).mean() + 0.5 * ((rel_real + 1.0) ** 2).mean()


@dataclass
class AdvLogits:
    """Raw discriminator outputs for one batch of reals and fakes."""

    real: torch.Tensor
    fake: torch.Tensor


def compose_completion(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Completed map: generator output inside the mask, target outside."""
    return target * (1.0 - mask) + pred * mask


def reconstruction_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor,
    cfg: LossConfig,
    extractor: nn.Module | None = None,
) -> torch.Tensor:
    """Masked reconstruction term. The perceptual flavor runs the extractor on
    the composed completion so feature differences stem only from the masked
    region while context stays intact."""
    if cfg.recon == "mse":
        return masked_mse(pred, target, mask)
    if extractor is None:
        raise ValueError("perceptual reconstruction needs a feature extractor")
    return perceptual_loss(compose_completion(pred, target, mask), target, extractor, cfg.perceptual_layers)


def adversarial_g_loss(d_outputs: AdvLogits, cfg: LossConfig) -> torch.Tensor:
    if cfg.adv == "bce":
        return bce_gan_g(torch.sigmoid(d_outputs.fake))
    return ralsgan_g(d_outputs.real, d_outputs.fake)


def adversarial_d_loss(d_outputs: AdvLogits, cfg: LossConfig) -> torch.Tensor:
    if cfg.adv == "bce":
        return bce_gan_d(torch.sigmoid(d_outputs.real), torch.sigmoid(d_outputs.fake))
    return ralsgan_d(d_outputs.real, d_outputs.fake)


def generator_objective(
    pred: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor,
    d_outputs: AdvLogits | None,
    cfg: LossConfig,
    extractor: nn.Module | None = None,
) -> torch.Tensor:
    """Combined generator loss: reconstruction + adv_weight * adversarial term."""
    recon = reconstruction_loss(pred, target, mask, cfg, extractor)
    if cfg.adv_weight == 0.0 or d_outputs is None:
        return recon
    return recon + cfg.adv_weight * adversarial_g_loss(d_outputs, cfg)
