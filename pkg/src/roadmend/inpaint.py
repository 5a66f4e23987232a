"""Apply a trained generator to repair a designated region of a raster."""
from __future__ import annotations

import numpy as np
import torch

from roadmend.metrics import Inpainter
from roadmend.model import CompletionGenerator
from roadmend.raster import MaskRegion, as_raster, binarize, paste, region_mask


def complete_raster(
    generator: CompletionGenerator,
    raster: np.ndarray,
    region: MaskRegion,
    threshold: float = 0.5,
) -> np.ndarray:
    """Zero the region, inpaint it, and paste the binarized completion back.

    Pixels outside the region are returned exactly as given.
    """
    raster = as_raster(raster)
    region.check_inside(*raster.shape)
    mask = region_mask(raster.shape, region)
    masked = raster * (1.0 - mask)
    generator.eval()
    with torch.no_grad():
        pred = generator(
            torch.from_numpy(masked).unsqueeze(0).unsqueeze(0),
            torch.from_numpy(mask).unsqueeze(0).unsqueeze(0),
        )[0, 0].numpy()
    filled = binarize(np.clip(pred, 0.0, 1.0), threshold)
    return paste(raster, filled[region.rows, region.cols], region)


def generator_inpainter(generator: CompletionGenerator) -> Inpainter:
    """Adapt a generator to the evaluation interface (ignores the debug target)."""

    def fn(noisy: np.ndarray, region: MaskRegion, target: np.ndarray) -> np.ndarray:
        return complete_raster(generator, noisy, region)

    return fn
