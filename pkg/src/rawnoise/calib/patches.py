"""Residual patch extraction for calibration and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import GeometryError
from ..frames import FrameBuffer, PairedBurst

DEFAULT_PATCH = 64


@dataclass(frozen=True, eq=False)
class ResidualPatchSet:
    """Stack of P x P residual patches plus each patch's mean clean intensity."""

    patches: np.ndarray            # (N, P, P) float32
    source_intensity: np.ndarray   # (N,) float32

    def __post_init__(self):
        patches = np.asarray(self.patches, dtype=np.float32)
        intensity = np.asarray(self.source_intensity, dtype=np.float32)
        if patches.ndim != 3 or patches.shape[1] != patches.shape[2]:
            raise GeometryError(f"patches must be (N, P, P), got {patches.shape}")
        if intensity.shape != (patches.shape[0],):
            raise GeometryError("source_intensity length must match patch count")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "source_intensity", intensity)

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def patch(self) -> int:
        return self.patches.shape[1]

    def values(self) -> np.ndarray:
        """All residual values pooled into one flat array."""
        return self.patches.reshape(-1)

    @staticmethod
    def concatenate(sets: list["ResidualPatchSet"]) -> "ResidualPatchSet":
        if not sets:
            raise GeometryError("cannot concatenate zero patch sets")
        return ResidualPatchSet(
            np.concatenate([s.patches for s in sets]),
            np.concatenate([s.source_intensity for s in sets]),
        )


def tile_origins(height: int, width: int, patch: int, stride: int) -> list[tuple[int, int]]:
    ys = range(0, height - patch + 1, stride)
    xs = range(0, width - patch + 1, stride)
    return [(y, x) for y in ys for x in xs]


def tile_raster(raster: np.ndarray, patch: int, stride: int) -> np.ndarray:
    """Tile a 2-D raster into (n_tiles, patch, patch)."""
    origins = tile_origins(raster.shape[0], raster.shape[1], patch, stride)
    return np.stack([raster[y:y + patch, x:x + patch] for y, x in origins])


def extract_residuals(burst: PairedBurst, patch: int = DEFAULT_PATCH,
                      stride: int | None = None) -> ResidualPatchSet:
    """Tile every frame's residual (noisy - clean) into patches.

    Each patch records the mean clean value over its footprint so synthetic
    patches can match the real signal dependence.
    """
    stride = patch if stride is None else stride
    h, w = burst.clean.shape
    if patch > h or patch > w:
        raise GeometryError(f"patch {patch} larger than frame {h}x{w}")
    if patch < 1 or stride < 1:
        raise GeometryError("patch and stride must be >= 1")
    clean = burst.clean.data.astype(np.float32)
    clean_tiles = tile_raster(clean, patch, stride)
    intensities = clean_tiles.mean(axis=(1, 2))
    all_patches = []
    all_intensity = []
    for frame in burst.noisy:
        res = frame.data.astype(np.float32) - clean
        all_patches.append(tile_raster(res, patch, stride))
        all_intensity.append(intensities)
    return ResidualPatchSet(np.concatenate(all_patches), np.concatenate(all_intensity))


def extract_pattern_tiles(pattern: FrameBuffer, patch: int,
                          stride: int | None = None) -> np.ndarray:
    """Tile a fixed-pattern frame with the same convention as extract_residuals."""
    stride = patch if stride is None else stride
    return tile_raster(pattern.data.astype(np.float32), patch, stride)
