"""Closed-form moment estimators that initialize the noise parameters.

All estimators work on residuals (noisy - clean) in float64 and are pure.
Where clips hold at least two frames the shot/read fit uses *temporal*
per-pixel variance, which is blind to the fixed pattern and to the
clip-constant row offsets; with only single-frame clips it falls back to
pooled per-bucket variance (biased by those components, best effort).

Identities used:

* per-pixel temporal variance at clean value x:
      lambda_read + lambda_shot*x + lambda_row + lambda_quant^2/12
      + sum(lambda_fk^2)/2
  so the fitted slope is lambda_shot and the intercept carries the listed
  nuisance terms (subtracted later by the calibration driver).
* temporal variance of a row mean:  lambda_row + pixel_floor/width,
  because the bin-aligned periodic carriers sum to zero over full periods.
* across-clip variance of per-clip time-averaged row means:
      lambda_row_t + (lambda_row + pixel_floor/width)/n_frames,
  after the per-row mean over clips removed everything clip-independent
  (fixed-pattern rows included).
* per-frame projections of rows onto the periodic carriers have variance
  lambda_fk^2 / 2 per quadrature; the incoherent pixel-noise floor is
  subtracted in quadrature.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..exceptions import CalibrationError, GeometryError
from ..frames import RESIDUAL, FrameBuffer, PairedBurst

DEFAULT_BINS = 48
MIN_BUCKET_PIXELS = 64


def _weighted_line_fit(x: np.ndarray, y: np.ndarray, weights: np.ndarray):
    total = float(np.sum(weights))
    mx = float(np.sum(weights * x)) / total
    my = float(np.sum(weights * y)) / total
    sxx = float(np.sum(weights * (x - mx) ** 2))
    if sxx <= 0.0:
        raise CalibrationError(
            "insufficient intensity diversity: singular shot/read fit")
    slope = float(np.sum(weights * (x - mx) * (y - my))) / sxx
    return my - slope * mx, slope


def _bucket_statistics(bursts, n_bins: int, temporal: bool):
    """Per-intensity-bucket mean residual variance and pixel counts."""
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    for burst in bursts:
        clean = burst.clean.data.astype(np.float64)
        idx = np.clip(np.digitize(clean.ravel(), edges) - 1, 0, n_bins - 1)
        for residuals in burst.residual_clips():
            if temporal:
                if residuals.shape[0] < 2:
                    continue
                var = residuals.var(axis=0, ddof=1).ravel()
                sums += np.bincount(idx, weights=var, minlength=n_bins)
                counts += np.bincount(idx, minlength=n_bins)
            else:
                for res in residuals:
                    flat = res.ravel()
                    sums += np.bincount(idx, weights=flat * flat, minlength=n_bins)
                    counts += np.bincount(idx, minlength=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, sums, counts


def estimate_shot_read(bursts: list[PairedBurst], n_bins: int = DEFAULT_BINS):
    """Fit per-bucket residual variance = lambda_read + lambda_shot * x.

    Buckets whose clean level sits within 4 sigma of the clip bounds are
    excluded in a second pass, since the variance law only holds pre-clip.
    Negative fits are clamped to zero with a warning.
    """
    if not bursts:
        raise CalibrationError("no bursts provided")
    has_temporal = any(n >= 2 for b in bursts for n in b.clip_lengths)
    centers, sums, counts = _bucket_statistics(bursts, n_bins, has_temporal)
    ok = counts >= MIN_BUCKET_PIXELS
    if np.count_nonzero(ok) < 2:
        raise CalibrationError(
            "insufficient intensity diversity: fewer than 2 populated buckets")
    x = centers[ok]
    y = sums[ok] / counts[ok]
    wts = counts[ok]
    intercept, slope = _weighted_line_fit(x, y, wts)
    sigma = np.sqrt(np.maximum(intercept + slope * x, 0.0))
    keep = (x > 4.0 * sigma) & (x < 1.0 - 4.0 * sigma)
    if np.count_nonzero(keep) >= 2:
        intercept, slope = _weighted_line_fit(x[keep], y[keep], wts[keep])
    if intercept < 0.0 or slope < 0.0:
        warnings.warn("negative shot/read fit clamped to 0", stacklevel=2)
    return max(intercept, 0.0), max(slope, 0.0)


def estimate_row(bursts: list[PairedBurst], shot_read: tuple[float, float]):
    """Split row-offset variance into per-frame and clip-constant parts.

    Requires at least one clip with >= 2 frames (and >= 2 clips in total for
    the clip-constant term).  Both estimates are corrected for the
    (lambda_read + lambda_shot * x_mean) / width pixel-noise floor and
    clamped at zero.
    """
    lam_read, lam_shot = shot_read
    per_frame_terms: list[np.ndarray] = []
    clip_averages: list[np.ndarray] = []
    clip_attenuations: list[float] = []
    geometry = None
    for burst in bursts:
        h, w = burst.clean.shape
        if geometry is None:
            geometry = (h, w)
        elif geometry != (h, w):
            raise GeometryError("bursts disagree in geometry")
        row_mean_clean = burst.clean.data.astype(np.float64).mean(axis=1)
        floor = (lam_read + lam_shot * row_mean_clean) / w
        for residuals in burst.residual_clips():
            n_frames = residuals.shape[0]
            row_means = residuals.mean(axis=2)            # (F, H)
            clip_avg = row_means.mean(axis=0)
            if n_frames >= 2:
                per_frame_terms.append(row_means.var(axis=0, ddof=1) - floor)
                per_frame_count = n_frames
            else:
                per_frame_count = 1
            clip_averages.append(clip_avg)
            clip_attenuations.append((float(np.mean(floor)), per_frame_count))
    if not per_frame_terms:
        raise CalibrationError(
            "single-frame clips only: cannot split per-frame and "
            "clip-constant row variance")
    lam_row = max(float(np.mean(np.concatenate(per_frame_terms))), 0.0)
    if len(clip_averages) < 2:
        return lam_row, 0.0
    stacked = np.stack(clip_averages)                     # (C, H)
    across = float(stacked.var(axis=0, ddof=1).mean())
    attenuation = float(np.mean(
        [(lam_row + fl) / n for fl, n in clip_attenuations]))
    return lam_row, max(across - attenuation, 0.0)


def estimate_periodic(bursts: list[PairedBurst], freqs,
                      shot_read: tuple[float, float]):
    """Amplitude stds of the periodic carriers from per-frame row projections.

    Per frame, each row is projected onto cos/sin at every carrier; the
    projections are averaged across rows and their variance across frames
    estimates lambda_fk^2 / 2 per quadrature.  At the Nyquist frequency the
    sine quadrature vanishes, so the single visible quadrature is doubled.
    The pixel-noise floor is subtracted in quadrature and the result clamped
    at zero.
    """
    lam_read, lam_shot = shot_read
    width = bursts[0].clean.width
    height = bursts[0].clean.height
    cols = np.arange(width, dtype=np.float64)
    out = []
    mean_clean = float(np.mean([b.clean.data.mean() for b in bursts]))
    pixel_var = lam_read + lam_shot * mean_clean
    for freq in freqs:
        if abs(freq * width - round(freq * width)) > 1e-9:
            warnings.warn(
                f"frequency {freq} is not bin-aligned for width {width}; "
                "projection leakage will bias the estimate", stacklevel=2)
        cos = np.cos(2.0 * np.pi * freq * cols)
        sin = np.sin(2.0 * np.pi * freq * cols)
        cc = float(np.sum(cos * cos))
        ss = float(np.sum(sin * sin))
        u_frames: list[np.ndarray] = []
        v_frames: list[np.ndarray] = []
        for burst in bursts:
            for residuals in burst.residual_clips():
                u_frames.append((residuals @ cos).mean(axis=1) / cc)
                if ss > 1e-9:
                    v_frames.append((residuals @ sin).mean(axis=1) / ss)
        u = np.concatenate(u_frames)
        if len(u) < 2:
            raise CalibrationError("periodic estimation needs >= 2 frames")
        if ss > 1e-9:
            v = np.concatenate(v_frames)
            lam_sq = ((u.var(ddof=1) - pixel_var / (cc * height))
                      + (v.var(ddof=1) - pixel_var / (ss * height)))
        else:
            # Nyquist: only the cosine quadrature is observable.
            lam_sq = 2.0 * (u.var(ddof=1) - pixel_var / (cc * height))
        out.append(float(np.sqrt(max(lam_sq, 0.0))))
    return tuple(out)


def estimate_fixed_pattern(bursts: list[PairedBurst]) -> FrameBuffer:
    """Pixel-wise mean of residuals across all frames and clips."""
    total_frames = sum(b.n_frames for b in bursts)
    if total_frames < 2:
        raise CalibrationError("fixed-pattern estimation needs >= 2 frames")
    geometry = bursts[0].clean.shape
    acc = np.zeros(geometry, dtype=np.float64)
    for burst in bursts:
        if burst.clean.shape != geometry:
            raise GeometryError(
                f"burst geometry {burst.clean.shape} != {geometry}")
        clean = burst.clean.data.astype(np.float64)
        for noisy_stack in burst.clips():
            acc += noisy_stack.astype(np.float64).sum(axis=0)
            acc -= clean * noisy_stack.shape[0]
    return FrameBuffer(acc / total_frames, RESIDUAL)
