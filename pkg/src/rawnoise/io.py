"""File I/O: the RFR frame container, 16-bit PGM, PPM display export,
clip directories, and the paired-burst dataset layout.

RFR container (little-endian):
    magic "RFR1" | u32 width | u32 height | u8 domain (0=clipped, 1=residual)
    | u8 cfa_id (0=default layout) | 2 reserved bytes
    | width*height float32, row-major.

The RFR round trip is bit-exact for every finite float32 value, including
residual-domain negatives.  PGM (binary P5, 16-bit) is import/export for
clipped frames only.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .exceptions import DomainError, FormatError, GeometryError
from .frames import CLIPPED, RESIDUAL, Clip, FrameBuffer, PairedBurst

_RFR_MAGIC = b"RFR1"
_RFR_HEADER = struct.Struct("<4sIIBBxx")
_DOMAIN_CODES = {CLIPPED: 0, RESIDUAL: 1}
_DOMAIN_NAMES = {0: CLIPPED, 1: RESIDUAL}


def write_frame(frame: FrameBuffer, path) -> None:
    """Write a FrameBuffer; format chosen by extension (.rfr or .pgm)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        _write_pgm(frame, path)
    else:
        _write_rfr(frame, path)


def read_frame(path) -> FrameBuffer:
    """Read a FrameBuffer from an RFR container or a binary 16-bit PGM."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    data = path.read_bytes()
    if data[:4] == _RFR_MAGIC:
        return _parse_rfr(data)
    if data[:2] == b"P5":
        return _parse_pgm(data)
    raise FormatError(f"bad magic in {path.name}: neither RFR1 nor P5")


def _write_rfr(frame: FrameBuffer, path: Path) -> None:
    header = _RFR_HEADER.pack(
        _RFR_MAGIC, frame.width, frame.height, _DOMAIN_CODES[frame.domain], 0
    )
    payload = np.ascontiguousarray(frame.data, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def _parse_rfr(data: bytes) -> FrameBuffer:
    if len(data) < _RFR_HEADER.size:
        raise FormatError("truncated header")
    magic, width, height, domain_code, cfa_id = _RFR_HEADER.unpack_from(data)
    if magic != _RFR_MAGIC:
        raise FormatError("bad magic")
    if width == 0 or width % 2 != 0:
        raise FormatError(f"odd width {width}" if width % 2 else "zero width")
    if height == 0 or height % 2 != 0:
        raise FormatError(f"odd height {height}" if height % 2 else "zero height")
    if domain_code not in _DOMAIN_NAMES:
        raise FormatError(f"unknown domain tag {domain_code}")
    if cfa_id != 0:
        raise FormatError(f"unknown cfa_id {cfa_id}")
    expected = width * height * 4
    payload = data[_RFR_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}"
        )
    raster = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return FrameBuffer(raster, _DOMAIN_NAMES[domain_code])


def _write_pgm(frame: FrameBuffer, path: Path) -> None:
    if frame.domain != CLIPPED:
        raise DomainError("PGM export requires a clipped-domain frame")
    dn = np.round(frame.data.astype(np.float64) * 65535.0).astype(">u2")
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    path.write_bytes(header + dn.tobytes())


def _parse_pgm(data: bytes) -> FrameBuffer:
    # Header: P5, whitespace/comment-separated width, height, maxval.
    pos = 2
    fields = []
    while len(fields) < 3:
        m = re.match(rb"(?:\s+|#[^\n]*\n)*(\d+)", data[pos:])
        if not m:
            raise FormatError("truncated header")
        fields.append(int(m.group(1)))
        pos += m.end()
    width, height, maxval = fields
    if maxval != 65535:
        raise FormatError(f"unsupported maxval {maxval}; only 16-bit PGM accepted")
    if width % 2 != 0:
        raise FormatError(f"odd width {width}")
    if height % 2 != 0:
        raise FormatError(f"odd height {height}")
    pos += 1  # single whitespace byte after maxval
    payload = data[pos:pos + width * height * 2]
    if len(payload) != width * height * 2:
        raise FormatError("truncated payload")
    raster = np.frombuffer(payload, dtype=">u2").reshape(height, width)
    return FrameBuffer(raster.astype(np.float32) / 65535.0, CLIPPED)


def write_ppm(rgb: np.ndarray, path) -> None:
    """Write an (3, H, W) [0,1] image as binary 8-bit PPM."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise GeometryError(f"PPM export needs (3, H, W), got {rgb.shape}")
    arr = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = arr.shape[1:]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.moveaxis(arr, 0, 2).tobytes())


# ---------------------------------------------------------------------------
# Clip directories: frame_%06d.rfr plus a clip.meta key=value file.
# ---------------------------------------------------------------------------

def write_clip(clip: Clip, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        write_frame(frame, directory / f"frame_{i:06d}.rfr")
    meta = f"frame_rate={clip.frame_rate!r}\ncount={len(clip)}\n"
    (directory / "clip.meta").write_text(meta, encoding="utf-8")


def read_clip(directory) -> Clip:
    directory = Path(directory)
    paths = sorted(directory.glob("frame_*.rfr"))
    if not paths:
        raise FormatError(f"no frame_*.rfr files in {directory}")
    frames = tuple(read_frame(p) for p in paths)
    frame_rate = 10.0
    meta = directory / "clip.meta"
    if meta.exists():
        for line in meta.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key.strip() == "frame_rate":
                frame_rate = float(value)
            elif key.strip() == "count":
                if int(value) != len(frames):
                    raise FormatError(
                        f"count {value} in clip.meta != {len(frames)} frames on disk"
                    )
    return Clip(frames, frame_rate)


# ---------------------------------------------------------------------------
# Paired-burst dataset layout:
#   <dataset>/<burst>/clean.rfr
#   <dataset>/<burst>/clips/clip_%03d/frame_%06d.rfr
# ---------------------------------------------------------------------------

def write_burst(burst: PairedBurst, directory, frame_rate: float = 10.0) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_frame(burst.clean, directory / "clean.rfr")
    start = 0
    for c, n in enumerate(burst.clip_lengths):
        clip = Clip(burst.noisy[start:start + n], frame_rate)
        write_clip(clip, directory / "clips" / f"clip_{c:03d}")
        start += n


def read_burst(directory) -> PairedBurst:
    directory = Path(directory)
    clean_path = directory / "clean.rfr"
    if not clean_path.exists():
        raise FormatError(f"missing clean.rfr in {directory}")
    clean = read_frame(clean_path)
    clip_dirs = sorted((directory / "clips").glob("clip_*"))
    if not clip_dirs:
        raise FormatError(f"no clips/clip_* directories in {directory}")
    noisy: list[FrameBuffer] = []
    lengths: list[int] = []
    for d in clip_dirs:
        clip = read_clip(d)
        noisy.extend(clip.frames)
        lengths.append(len(clip))
    return PairedBurst(clean, tuple(noisy), tuple(lengths))


def read_dataset(directory) -> list[PairedBurst]:
    """Read every burst subdirectory of a dataset directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"dataset directory {directory} does not exist")
    burst_dirs = sorted(
        d for d in directory.iterdir() if d.is_dir() and (d / "clean.rfr").exists()
    )
    if not burst_dirs:
        raise FormatError(f"no burst directories with clean.rfr under {directory}")
    return [read_burst(d) for d in burst_dirs]
