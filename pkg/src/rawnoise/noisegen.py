"""Sampling of the individual noise components and synthesis of noisy
frames/clips from clean ones.

The model adds, per frame:

* shot+read     zero-mean Gaussian, per-pixel variance lambda_read + lambda_shot * x
* row           per-row Gaussian offset, variance lambda_row, redrawn each frame
* row temporal  per-row Gaussian offset, variance lambda_row_t, drawn once per clip
* quantization  per-pixel uniform on [-lambda_quant/2, +lambda_quant/2]
* periodic      three horizontal sinusoids at fixed frequencies; per frame the
                amplitude a_k ~ N(0, lambda_fk^2) and phase ~ U[0, 2pi)
* fixed pattern measured residual raster, identical for every frame

and clips the sum to [0, 1] once, at the end.  Shot noise is Gaussian rather
than Poisson so the variance is differentiable in its parameters.

Pre-clipping, the residual at clean value x has mean 0 and variance

    lambda_read + lambda_shot*x + lambda_row + lambda_row_t
    + lambda_quant^2 / 12 + (lambda_f1^2 + lambda_f2^2 + lambda_f3^2) / 2

(the periodic terms average cos^2 over their uniform phase).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import streams
from .exceptions import DomainError, GeometryError
from .frames import CLIPPED, RESIDUAL, Clip, FrameBuffer
from .params import NoiseParams
from .streams import NoiseStream


def residual_variance(params: NoiseParams, x) -> np.ndarray | float:
    """Analytic pre-clip residual variance at clean value(s) x."""
    periodic = (params.lambda_f1**2 + params.lambda_f2**2 + params.lambda_f3**2) / 2.0
    return (
        params.lambda_read
        + params.lambda_shot * np.asarray(x, dtype=np.float64)
        + params.lambda_row
        + params.lambda_row_t
        + params.lambda_quant**2 / 12.0
        + periodic
    )


# ---------------------------------------------------------------------------
# Component samplers.  Private helpers return float64 rasters; the public
# operations wrap them in residual-domain FrameBuffers.
# ---------------------------------------------------------------------------

def _shot_read_raster(clean: np.ndarray, lambda_read: float, lambda_shot: float,
                      stream: NoiseStream) -> np.ndarray:
    sigma = np.sqrt(lambda_read + lambda_shot * clean.astype(np.float64))
    eps = stream.generator().standard_normal(clean.shape)
    return sigma * eps


def _row_offsets(n: int, variance: float, stream: NoiseStream) -> np.ndarray:
    return stream.generator().standard_normal(n) * np.sqrt(variance)


def _quant_raster(shape, interval: float, stream: NoiseStream) -> np.ndarray:
    return (stream.generator().random(shape) - 0.5) * interval


def _periodic_raster(height: int, width: int, params: NoiseParams,
                     stream: NoiseStream) -> np.ndarray:
    gen = stream.generator()
    stds = np.array([params.lambda_f1, params.lambda_f2, params.lambda_f3])
    amps = gen.standard_normal(3) * stds
    phases = gen.random(3) * 2.0 * np.pi
    cols = np.arange(width, dtype=np.float64)
    row = np.zeros(width, dtype=np.float64)
    for amp, phase, freq in zip(amps, phases, params.freqs):
        row += amp * np.cos(2.0 * np.pi * freq * cols + phase)
    return np.broadcast_to(row, (height, width))


def sample_shot_read(clean: FrameBuffer, params: NoiseParams,
                     stream: NoiseStream) -> FrameBuffer:
    """Heteroscedastic shot+read component: N(0, lambda_read + lambda_shot*x)."""
    if clean.domain != CLIPPED:
        raise DomainError("shot/read sampling requires a clipped-domain clean frame")
    raster = _shot_read_raster(clean.data, params.lambda_read, params.lambda_shot, stream)
    return FrameBuffer(raster, RESIDUAL)


def sample_row(height: int, width: int, variance: float,
               stream: NoiseStream) -> FrameBuffer:
    """One N(0, variance) draw per row, broadcast across that row."""
    if variance < 0:
        raise ValueError(f"row variance must be >= 0, got {variance}")
    offsets = _row_offsets(height, variance, stream)
    return FrameBuffer(np.broadcast_to(offsets[:, None], (height, width)), RESIDUAL)


def sample_quant(height: int, width: int, interval: float,
                 stream: NoiseStream) -> FrameBuffer:
    """Per-pixel uniform quantization noise on [-interval/2, +interval/2]."""
    if interval < 0:
        raise ValueError(f"quantization interval must be >= 0, got {interval}")
    return FrameBuffer(_quant_raster((height, width), interval, stream), RESIDUAL)


def sample_periodic(height: int, width: int, params: NoiseParams,
                    stream: NoiseStream) -> FrameBuffer:
    """Sum of three horizontal sinusoids with per-frame random amplitude/phase."""
    return FrameBuffer(_periodic_raster(height, width, params, stream), RESIDUAL)


# ---------------------------------------------------------------------------
# Frame / clip composition.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClipContext:
    """Per-frame synthesis context: ids for stream addressing plus the
    clip-constant row offsets (drawn once per clip, or None to disable)."""

    clip_id: int = 0
    frame_id: int = 0
    clip_row_offsets: np.ndarray | None = None


def synthesize_frame(clean: FrameBuffer, params: NoiseParams,
                     ctx: ClipContext, orientation: str = "row") -> FrameBuffer:
    """Compose all noise components onto a clean frame and clip to [0, 1]."""
    if clean.domain != CLIPPED:
        raise DomainError("synthesis requires a clipped-domain clean frame")
    if params.fixed_pattern is not None and params.fixed_pattern.shape != clean.shape:
        raise GeometryError(
            f"fixed pattern shape {params.fixed_pattern.shape} != frame {clean.shape}"
        )
    if orientation not in ("row", "column"):
        raise ValueError(f"orientation must be 'row' or 'column', got {orientation!r}")
    h, w = clean.shape
    base = NoiseStream(params.seed, ctx.clip_id, ctx.frame_id)
    out = clean.data.astype(np.float64)
    out = out + _shot_read_raster(
        clean.data, params.lambda_read, params.lambda_shot,
        base.child(component_id=streams.SHOT_READ))
    n_lines = h if orientation == "row" else w
    offsets = _row_offsets(n_lines, params.lambda_row,
                           base.child(component_id=streams.ROW))
    out = out + (offsets[:, None] if orientation == "row" else offsets[None, :])
    if ctx.clip_row_offsets is not None:
        off = np.asarray(ctx.clip_row_offsets, dtype=np.float64)
        if off.shape != (n_lines,):
            raise GeometryError(
                f"clip_row_offsets length {off.shape} != {orientation} count {n_lines}"
            )
        out = out + (off[:, None] if orientation == "row" else off[None, :])
    out = out + _quant_raster((h, w), params.lambda_quant,
                              base.child(component_id=streams.QUANT))
    out = out + _periodic_raster(h, w, params,
                                 base.child(component_id=streams.PERIODIC))
    if params.fixed_pattern is not None:
        out = out + params.fixed_pattern.data.astype(np.float64)
    return FrameBuffer(np.clip(out, 0.0, 1.0), CLIPPED)


def clip_row_offsets(params: NoiseParams, clip_id: int, n_lines: int) -> np.ndarray:
    """The clip-constant row offsets for a given clip id (deterministic)."""
    stream = NoiseStream(params.seed, clip_id, streams.CLIP_LEVEL,
                         streams.ROW_TEMPORAL)
    return _row_offsets(n_lines, params.lambda_row_t, stream)


def synthesize_clip(clean: Clip, params: NoiseParams, clip_id: int = 0,
                    orientation: str = "row", workers: int = 1) -> Clip:
    """Synthesize a noisy clip; clip-constant terms are drawn once.

    Frames may be synthesized in parallel (``workers`` > 1); the output is
    bit-identical regardless of schedule because every frame's draws are
    keyed only by (seed, clip_id, frame_id, component).
    """
    h, w = clean.shape
    n_lines = h if orientation == "row" else w
    offsets = clip_row_offsets(params, clip_id, n_lines)

    def one(frame_id: int) -> FrameBuffer:
        ctx = ClipContext(clip_id, frame_id, offsets)
        return synthesize_frame(clean.frames[frame_id], params, ctx, orientation)

    indices = range(len(clean))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = tuple(pool.map(one, indices))
    else:
        frames = tuple(one(i) for i in indices)
    return Clip(frames, clean.frame_rate)
