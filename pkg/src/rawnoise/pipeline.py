"""RAW post-processing, sRGB unprocessing, training-pair generation, and a
temporal-averaging reference denoiser.

The display chain is demosaic (bilinear per channel) -> white balance ->
gamma -> histogram equalization; NIR is omitted from display output by
default.  Unprocessing inverts the display conventions with a pure power
law and mosaics a synthesized NIR plane back onto the CFA, which is all the
noise generator needs from a corpus image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import noisegen
from .exceptions import DomainError, GeometryError
from .frames import (CHANNELS, CLIPPED, CfaLayout, Clip, DEFAULT_LAYOUT,
                     FrameBuffer, mosaic_planes)
from .params import NoiseParams

DISPLAY_CHANNELS = ("R", "G", "B")
DEFAULT_GAMMA = 1.0 / 2.2
WINDOW = 5


@dataclass(frozen=True)
class IspConfig:
    """Display-chain settings.

    wb_gains is either the string "gray-world", "none", or a mapping of
    channel tag to gain.  NIR joins the display set only when
    nir_in_display is true.
    """

    gamma: float = DEFAULT_GAMMA
    wb_gains: object = "gray-world"
    equalize: bool = True
    nir_in_display: bool = False

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if isinstance(self.wb_gains, dict):
            for tag, gain in self.wb_gains.items():
                if tag not in CHANNELS:
                    raise ValueError(f"unknown channel {tag!r} in wb_gains")
                if gain <= 0:
                    raise ValueError(f"wb gain for {tag} must be > 0")
        elif self.wb_gains not in ("gray-world", "none"):
            raise ValueError("wb_gains must be 'gray-world', 'none', or a mapping")

    def display_set(self):
        return CHANNELS if self.nir_in_display else DISPLAY_CHANNELS


def _bilinear_axis_indices(size: int, offset: int, half: int):
    pos = np.clip((np.arange(size) - offset) / 2.0, 0.0, half - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, half - 1)
    frac = pos - lo
    return lo, hi, frac


def demosaic(raw: FrameBuffer, layout: CfaLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Bilinear demosaic to four full-resolution planes, order (R, G, B, NIR).

    Known CFA sites are kept exactly; missing sites are interpolated from
    the nearest same-channel sites with edge replication, so the result is
    exact on linear ramps away from the borders.
    """
    if raw.domain != CLIPPED:
        raise DomainError("demosaic expects a clipped-domain frame")
    h, w = raw.shape
    data = raw.data.astype(np.float64)
    planes = np.empty((4, h, w), dtype=np.float32)
    for c, tag in enumerate(CHANNELS):
        dy, dx = layout.site(tag)
        half = data[dy::2, dx::2]
        r_lo, r_hi, r_t = _bilinear_axis_indices(h, dy, h // 2)
        c_lo, c_hi, c_t = _bilinear_axis_indices(w, dx, w // 2)
        rows = half[r_lo, :] * (1.0 - r_t)[:, None] + half[r_hi, :] * r_t[:, None]
        full = rows[:, c_lo] * (1.0 - c_t)[None, :] + rows[:, c_hi] * c_t[None, :]
        planes[c] = full
    return planes


def white_balance(image: np.ndarray, config: IspConfig) -> np.ndarray:
    """Scale channels by explicit or gray-world gains and clip to [0, 1]."""
    if image.ndim != 3 or image.shape[0] != 4:
        raise GeometryError(f"expected (4, H, W) planes, got {image.shape}")
    gains = np.ones(4)
    if isinstance(config.wb_gains, dict):
        for c, tag in enumerate(CHANNELS):
            gains[c] = config.wb_gains.get(tag, 1.0)
    elif config.wb_gains == "gray-world":
        display = [CHANNELS.index(t) for t in config.display_set()]
        means = image[display].mean(axis=(1, 2))
        if np.any(means <= 0):
            raise ValueError("gray-world white balance needs positive channel means")
        target = means.mean()
        for c, m in zip(display, means):
            gains[c] = target / m
    return np.clip(image * gains[:, None, None], 0.0, 1.0).astype(np.float32)


def equalize(plane: np.ndarray, levels: int = 256) -> np.ndarray:
    """Global histogram equalization of a [0, 1] plane via the empirical CDF.

    Values map to CDF(value) inclusive of their own level, so a two-level
    image {0.2: 50%, 0.8: 50%} maps to {0.5, 1.0}; the mapping is monotone
    non-decreasing by construction.
    """
    plane = np.asarray(plane, dtype=np.float64)
    idx = np.minimum((plane * levels).astype(int), levels - 1)
    counts = np.bincount(idx.ravel(), minlength=levels)
    cdf = np.cumsum(counts) / plane.size
    return cdf[idx].astype(np.float32)


def gamma_encode(frame: FrameBuffer, gamma: float = DEFAULT_GAMMA) -> FrameBuffer:
    """Per-pixel power law x -> x^gamma on a clipped-domain frame."""
    if frame.domain != CLIPPED:
        raise DomainError("gamma_encode expects a clipped-domain frame")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return FrameBuffer(np.power(frame.data.astype(np.float64), gamma), CLIPPED)


def display_frame(raw: FrameBuffer, config: IspConfig | None = None,
                  layout: CfaLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Full display chain; returns (3, H, W) RGB (or (4, H, W) with NIR)."""
    config = config or IspConfig()
    planes = white_balance(demosaic(raw, layout), config)
    planes = np.power(np.clip(planes, 0.0, 1.0), config.gamma)
    keep = [CHANNELS.index(t) for t in config.display_set()]
    out = planes[keep]
    if config.equalize:
        out = np.stack([equalize(p) for p in out])
    return out.astype(np.float32)


def unprocess(srgb: np.ndarray, layout: CfaLayout = DEFAULT_LAYOUT,
              config: IspConfig | None = None,
              nir_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)) -> FrameBuffer:
    """Convert a (3, H, W) display image to a RAW-like mosaicked frame.

    Applies the inverse power law, undoes explicit white-balance gains, and
    synthesizes NIR as a weighted mixture of the linear R/G/B planes before
    mosaicking onto the CFA sites.
    """
    if srgb.ndim != 3 or srgb.shape[0] != 3:
        raise GeometryError(f"expected (3, H, W) display image, got {srgb.shape}")
    config = config or IspConfig()
    linear = np.power(np.clip(srgb.astype(np.float64), 0.0, 1.0),
                      1.0 / config.gamma)
    if isinstance(config.wb_gains, dict):
        for c, tag in enumerate(DISPLAY_CHANNELS):
            linear[c] = linear[c] / config.wb_gains.get(tag, 1.0)
    nir = sum(wt * linear[c] for c, wt in enumerate(nir_weights))
    planes = {}
    for c, tag in enumerate(DISPLAY_CHANNELS):
        dy, dx = layout.site(tag)
        planes[tag] = linear[c][dy::2, dx::2]
    dy, dx = layout.site("NIR")
    planes["NIR"] = nir[dy::2, dx::2]
    frame = mosaic_planes({t: np.clip(p, 0.0, 1.0) for t, p in planes.items()},
                          layout, CLIPPED)
    return frame


# ---------------------------------------------------------------------------
# Training pairs and the reference denoiser.
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainingPair:
    """Five contiguous noisy frames plus the gamma-corrected clean center."""

    noisy_window: Clip
    clean_target: FrameBuffer
    window_center_index: int

    def __post_init__(self):
        if len(self.noisy_window) != WINDOW:
            raise GeometryError(f"window must hold {WINDOW} frames")


def make_training_pairs(clean_clip: Clip, params: NoiseParams,
                        clip_id: int = 0, gamma: float = DEFAULT_GAMMA,
                        workers: int = 1) -> list[TrainingPair]:
    """Synthesize one noisy clip, then emit sliding 5-frame windows.

    The clip-level noise is drawn once, so windows are exact sub-sequences
    of a single synthesized clip; window count is T - 4 and the target is
    the gamma-corrected clean center frame.
    """
    t = len(clean_clip)
    if t < WINDOW:
        raise GeometryError(f"clip too short: {t} < {WINDOW} frames")
    noisy = noisegen.synthesize_clip(clean_clip, params, clip_id, workers=workers)
    pairs = []
    for start in range(t - WINDOW + 1):
        center = start + WINDOW // 2
        window = Clip(noisy.frames[start:start + WINDOW], clean_clip.frame_rate)
        target = gamma_encode(clean_clip.frames[center], gamma)
        pairs.append(TrainingPair(window, target, center))
    return pairs


def reference_denoise(noisy_clip: Clip, params: NoiseParams) -> FrameBuffer:
    """Static-scene baseline: subtract the fixed pattern, average, clip.

    Averaging N frames cuts every per-frame-independent component's variance
    by N while the pattern subtraction removes the deterministic offset, so
    PSNR grows ~10*log10(N) dB in the iid-dominated regime.
    """
    if len(noisy_clip) == 0:
        raise GeometryError("empty clip")
    acc = np.zeros(noisy_clip.shape, dtype=np.float64)
    pattern = (params.fixed_pattern.data.astype(np.float64)
               if params.fixed_pattern is not None else 0.0)
    for frame in noisy_clip.frames:
        acc += frame.data.astype(np.float64) - pattern
    return FrameBuffer(np.clip(acc / len(noisy_clip), 0.0, 1.0), CLIPPED)
