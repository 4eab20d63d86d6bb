"""Input-validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import GeometryError
from .frames import CLIPPED, Clip, FrameBuffer, PairedBurst


def as_frame(x, domain: str = CLIPPED) -> FrameBuffer:
    """Coerce a FrameBuffer or 2-D array into a FrameBuffer."""
    if isinstance(x, FrameBuffer):
        return x
    return FrameBuffer(np.asarray(x), domain)


def as_clip(x, frame_rate: float = 10.0) -> Clip:
    """Coerce a Clip, FrameBuffer, (T, H, W) array, or frame list into a Clip."""
    if isinstance(x, Clip):
        return x
    if isinstance(x, FrameBuffer):
        return Clip((x,), frame_rate)
    arr = np.asarray(x) if not isinstance(x, (list, tuple)) else None
    if arr is not None and arr.ndim == 3:
        return Clip(tuple(FrameBuffer(f) for f in arr), frame_rate)
    if isinstance(x, (list, tuple)):
        return Clip(tuple(as_frame(f) for f in x), frame_rate)
    raise GeometryError(f"cannot interpret {type(x).__name__} as a clip")


def check_bursts(x) -> list[PairedBurst]:
    if isinstance(x, PairedBurst):
        return [x]
    bursts = list(x)
    if not bursts:
        raise GeometryError("empty burst list")
    for b in bursts:
        if not isinstance(b, PairedBurst):
            raise GeometryError(
                f"expected PairedBurst entries, got {type(b).__name__}")
    return bursts


def check_same_geometry(a: FrameBuffer, b: FrameBuffer) -> None:
    if a.shape != b.shape:
        raise GeometryError(f"geometry mismatch: {a.shape} vs {b.shape}")
