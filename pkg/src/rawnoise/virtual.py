"""Virtual-sensor harness: procedural clean scenes plus ground-truth noise.

Quantitative tests run against this harness instead of camera data: a
generator with known parameters synthesizes paired bursts in the exact
calibration dataset layout, so parameter recovery and KLD-ordering
properties can be checked without any captured frames.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import io, streams
from .frames import CLIPPED, RESIDUAL, Clip, FrameBuffer, PairedBurst
from .noisegen import synthesize_clip
from .params import NoiseParams, params_payload
from .streams import NoiseStream

SCENES = ("gradient", "checker", "waves")


def scene_frame(kind: str, height: int, width: int, phase: float = 0.0,
                lo: float = 0.2, hi: float = 0.8) -> FrameBuffer:
    """One procedural clean frame with intensities inside [lo, hi]."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)
    if kind == "gradient":
        base = 0.7 * xx + 0.3 * yy
    elif kind == "checker":
        block = max(min(height, width) // 16, 2)
        base = ((np.add.outer(np.arange(height) // block,
                              np.arange(width) // block)) % 2).astype(np.float64)
        base = 0.25 + 0.5 * base + 0.25 * xx  # tilt so intensities spread
    elif kind == "waves":
        base = 0.5 + 0.25 * np.sin(2 * np.pi * (3 * xx + phase)) \
            + 0.25 * np.cos(2 * np.pi * (2 * yy - 0.7 * phase))
        base = (base - base.min()) / max(base.max() - base.min(), 1e-9)
    else:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {SCENES}")
    base = (base - base.min()) / max(base.max() - base.min(), 1e-9)
    return FrameBuffer(lo + (hi - lo) * base, CLIPPED)


def static_clip(kind: str, height: int, width: int, n_frames: int,
                frame_rate: float = 10.0) -> Clip:
    frame = scene_frame(kind, height, width)
    return Clip((frame,) * n_frames, frame_rate)


def drifting_clip(kind: str, height: int, width: int, n_frames: int,
                  frame_rate: float = 10.0, speed: float = 0.04) -> Clip:
    """Clean clip whose pattern drifts frame to frame (for motion demos)."""
    frames = tuple(scene_frame(kind, height, width, phase=i * speed)
                   for i in range(n_frames))
    return Clip(frames, frame_rate)


def make_fixed_pattern(height: int, width: int, std: float,
                       seed: int = 0) -> FrameBuffer | None:
    """Deterministic per-pixel Gaussian offset pattern, or None for std 0."""
    if std <= 0:
        return None
    gen = NoiseStream(seed, 0, streams.CLIP_LEVEL,
                      streams.FIXED_PATTERN).generator()
    return FrameBuffer(gen.standard_normal((height, width)) * std, RESIDUAL)


def virtual_burst(params: NoiseParams, clean: FrameBuffer, n_clips: int,
                  frames_per_clip: int, clip_id_base: int = 0) -> PairedBurst:
    """Paired burst of a static scene under the ground-truth generator."""
    noisy: list[FrameBuffer] = []
    lengths = []
    for c in range(n_clips):
        clip = Clip((clean,) * frames_per_clip)
        noisy.extend(synthesize_clip(clip, params, clip_id_base + c).frames)
        lengths.append(frames_per_clip)
    return PairedBurst(clean, tuple(noisy), tuple(lengths))


def virtual_dataset(params: NoiseParams, n_bursts: int = 1, n_clips: int = 4,
                    frames_per_clip: int = 64, height: int = 256,
                    width: int = 256, scene: str = "gradient") -> list[PairedBurst]:
    """Bursts over cycling scenes; clip ids stay distinct across bursts."""
    kinds = SCENES if scene == "mixed" else (scene,)
    bursts = []
    for b in range(n_bursts):
        clean = scene_frame(kinds[b % len(kinds)], height, width)
        bursts.append(virtual_burst(params, clean, n_clips, frames_per_clip,
                                    clip_id_base=b * max(n_clips, 1)))
    return bursts


def write_virtual_dataset(directory, params: NoiseParams, n_bursts: int = 1,
                          n_clips: int = 4, frames_per_clip: int = 16,
                          height: int = 256, width: int = 256,
                          scene: str = "gradient") -> list[PairedBurst]:
    """Write bursts in the calibration layout plus truth.json with the
    ground-truth params payload."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bursts = virtual_dataset(params, n_bursts, n_clips, frames_per_clip,
                             height, width, scene)
    for b, burst in enumerate(bursts):
        io.write_burst(burst, directory / f"burst_{b:03d}")
    pattern_name = "fixed_pattern.rfr" if params.fixed_pattern is not None else None
    if pattern_name:
        io.write_frame(params.fixed_pattern, directory / pattern_name)
    payload = params_payload(params, pattern_name)
    (directory / "truth.json").write_text(json.dumps(payload, indent=2) + "\n",
                                          encoding="utf-8")
    return bursts
