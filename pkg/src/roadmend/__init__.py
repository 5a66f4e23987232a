"""roadmend: repair faulty regions of binary road-map rasters with a
globally-and-locally-consistent inpainting model, plus a synthetic-fallacy
benchmark and buffered road-extraction metrics."""

__version__ = "0.1.0"

from roadmend.raster import MaskRegion, load_raster, save_raster

__all__ = ["MaskRegion", "load_raster", "save_raster", "__version__"]
