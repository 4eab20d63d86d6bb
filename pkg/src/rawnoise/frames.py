"""RAW frame/clip data model and CFA geometry.

All types are immutable after construction (backing arrays are marked
read-only) and all operations are pure, so values can be shared freely
across threads.

Two value domains are distinguished explicitly: ``clipped`` rasters hold
sensor intensities in [0, 1]; ``residual`` rasters hold noisy-minus-clean
differences and may take any finite value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, FormatError, GeometryError

CLIPPED = "clipped"
RESIDUAL = "residual"
DOMAINS = (CLIPPED, RESIDUAL)

CHANNELS = ("R", "G", "B", "NIR")


@dataclass(frozen=True)
class CfaLayout:
    """2x2 color-filter-array tile of distinct channel tags.

    The default puts R/G on the top row and NIR/B on the bottom; any fixed
    assignment of the four distinct channels works for every algorithm here,
    so the arrangement is configurable rather than hardwired.
    """

    pattern: tuple[tuple[str, str], tuple[str, str]] = (("R", "G"), ("NIR", "B"))

    def __post_init__(self):
        tags = [t for row in self.pattern for t in row]
        if len(self.pattern) != 2 or any(len(r) != 2 for r in self.pattern):
            raise FormatError("cfa pattern must be a 2x2 grid")
        for t in tags:
            if t not in CHANNELS:
                raise FormatError(f"unknown channel tag {t!r}")
        if len(set(tags)) != 4:
            raise FormatError("cfa pattern tags must be distinct")

    def site(self, tag: str) -> tuple[int, int]:
        """Return the (row, col) offset of ``tag`` within the 2x2 tile."""
        for dy, row in enumerate(self.pattern):
            for dx, t in enumerate(row):
                if t == tag:
                    return dy, dx
        raise KeyError(f"channel {tag!r} not present in CFA layout")


DEFAULT_LAYOUT = CfaLayout()

# RFR container cfa_id values; only the default layout is assigned for now.
CFA_IDS = {0: DEFAULT_LAYOUT}


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class FrameBuffer:
    """One RAW frame: an (H, W) float32 raster plus its value domain."""

    data: np.ndarray
    domain: str = CLIPPED

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise GeometryError(f"frame raster must be 2-D, got shape {arr.shape}")
        h, w = arr.shape
        if h % 2 != 0:
            raise GeometryError(f"odd height {h}")
        if w % 2 != 0:
            raise GeometryError(f"odd width {w}")
        if h == 0 or w == 0:
            raise GeometryError("empty frame")
        if self.domain not in DOMAINS:
            raise DomainError(f"unknown domain tag {self.domain!r}")
        arr = _freeze(arr)
        if self.domain == CLIPPED:
            if not np.all(np.isfinite(arr)):
                raise DomainError("clipped frame contains non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DomainError("clipped frame has values outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def same_geometry(self, other: "FrameBuffer") -> bool:
        return self.shape == other.shape


@dataclass(frozen=True, eq=False)
class Clip:
    """Ordered frames sharing geometry and domain; frame_rate is metadata only."""

    frames: tuple[FrameBuffer, ...]
    frame_rate: float = 10.0

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise GeometryError("clip must contain at least one frame")
        first = frames[0]
        for i, f in enumerate(frames[1:], start=1):
            if f.shape != first.shape:
                raise GeometryError(f"frame {i} shape {f.shape} != {first.shape}")
            if f.domain != first.domain:
                raise DomainError(f"frame {i} domain {f.domain} != {first.domain}")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    @property
    def domain(self) -> str:
        return self.frames[0].domain

    def stack(self) -> np.ndarray:
        """Stack frame rasters into a (T, H, W) float32 array."""
        return np.stack([f.data for f in self.frames])


@dataclass(frozen=True, eq=False)
class PairedBurst:
    """One clean frame plus noisy frames of the same static scene.

    ``clip_lengths`` partitions the noisy list into contiguous clips; the
    clip-constant noise components are held fixed within each part.
    """

    clean: FrameBuffer
    noisy: tuple[FrameBuffer, ...]
    clip_lengths: tuple[int, ...] = field(default=())

    def __post_init__(self):
        noisy = tuple(self.noisy)
        if not noisy:
            raise GeometryError("burst must contain at least one noisy frame")
        lengths = tuple(self.clip_lengths) or (len(noisy),)
        if any(n <= 0 for n in lengths):
            raise FormatError("clip_lengths entries must be positive")
        if sum(lengths) != len(noisy):
            raise FormatError(
                f"clip_lengths sum {sum(lengths)} != noisy frame count {len(noisy)}"
            )
        for i, f in enumerate(noisy):
            if f.shape != self.clean.shape:
                raise GeometryError(
                    f"noisy frame {i} shape {f.shape} != clean {self.clean.shape}"
                )
        object.__setattr__(self, "noisy", noisy)
        object.__setattr__(self, "clip_lengths", lengths)

    @property
    def n_frames(self) -> int:
        return len(self.noisy)

    def clips(self):
        """Yield the noisy frames of each clip as a (F, H, W) array."""
        start = 0
        for n in self.clip_lengths:
            yield np.stack([f.data for f in self.noisy[start:start + n]])
            start += n

    def residual_clips(self):
        """Yield per-clip residual stacks noisy - clean, in float64."""
        clean = self.clean.data.astype(np.float64)
        for arr in self.clips():
            yield arr.astype(np.float64) - clean[None]


def channel_plane(frame: FrameBuffer, layout: CfaLayout, tag: str) -> np.ndarray:
    """Extract the (H/2, W/2) subsampled plane of the CFA sites matching ``tag``."""
    dy, dx = layout.site(tag)
    return np.array(frame.data[dy::2, dx::2])


def mosaic_planes(planes: dict[str, np.ndarray], layout: CfaLayout,
                  domain: str = CLIPPED) -> FrameBuffer:
    """Inverse of channel_plane: place four half-resolution planes onto their sites."""
    shapes = {p.shape for p in planes.values()}
    if len(planes) != 4 or set(planes) != set(CHANNELS):
        raise GeometryError("mosaic requires exactly the four channel planes")
    if len(shapes) != 1:
        raise GeometryError(f"channel planes disagree in shape: {shapes}")
    hh, hw = next(iter(shapes))
    out = np.empty((2 * hh, 2 * hw), dtype=np.float32)
    for tag, plane in planes.items():
        dy, dx = layout.site(tag)
        out[dy::2, dx::2] = plane
    return FrameBuffer(out, domain)
