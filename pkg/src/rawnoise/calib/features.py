"""Differentiable patch statistics for the linear critic.

The statistic vector phi(patch) concatenates

    [mean, variance, variance of row means, variance of column means,
     K magnitude bins of the row-wise DFT (DC excluded),
     B Gaussian-kernel soft histogram counts]

and every entry is differentiable with respect to every patch pixel (the
DFT magnitude carries a small epsilon inside the square root).  These
statistics target exactly the structures the noise model produces: banding
shows up in the row-mean variance, periodic interference in the DFT bins,
and the amplitude distribution in the soft histogram.

Features can be standardized with per-feature center/scale fitted on real
patches; this only rescales the Jacobian and keeps the critic's
optimization well conditioned.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import GeometryError


class FeatureMap:
    """phi: (B, P, P) patches -> (B, d) statistics, with exact pixel Jacobians."""

    def __init__(self, patch: int = 64, fft_bins: int = 8, hist_bins: int = 16,
                 hist_range: tuple[float, float] = (-1.0, 1.0)):
        if patch % 2 != 0 or patch < 4:
            raise GeometryError(f"patch size must be even and >= 4, got {patch}")
        self.patch = patch
        self.fft_bins = int(fft_bins)
        self.hist_bins = int(hist_bins)
        self.hist_range = (float(hist_range[0]), float(hist_range[1]))
        centers = np.linspace(self.hist_range[0], self.hist_range[1], self.hist_bins)
        self._centers = centers
        self._kernel_width = float(centers[1] - centers[0])
        freqs = np.arange(1, patch // 2 + 1)            # exclude DC, keep Nyquist
        ang = 2.0 * np.pi * np.outer(freqs, np.arange(patch)) / patch
        self._cos = np.cos(ang)
        self._sin = np.sin(ang)
        self._bins = np.array_split(np.arange(len(freqs)), self.fft_bins)
        self._mag_eps = 1e-12
        self.dim = 4 + self.fft_bins + self.hist_bins
        self.center = np.zeros(self.dim)
        self.scale = np.ones(self.dim)

    # -- standardization ---------------------------------------------------
    def fit_normalization(self, patches: np.ndarray, floor: float = 1e-10) -> "FeatureMap":
        """Set per-feature center/scale from a reference patch set."""
        raw = self.raw(patches)
        self.center = raw.mean(axis=0)
        self.scale = np.maximum(raw.std(axis=0), floor)
        return self

    def reset_normalization(self) -> "FeatureMap":
        self.center = np.zeros(self.dim)
        self.scale = np.ones(self.dim)
        return self

    # -- forward -----------------------------------------------------------
    def _check(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 2:
            batch = batch[None]
        if batch.ndim != 3 or batch.shape[1] != self.patch or batch.shape[2] != self.patch:
            raise GeometryError(
                f"expected (B, {self.patch}, {self.patch}) patches, got {batch.shape}"
            )
        return batch

    def raw(self, batch: np.ndarray) -> np.ndarray:
        """Unstandardized statistics, shape (B, dim)."""
        batch = self._check(batch)
        b, h, w = batch.shape
        n = h * w
        mu = batch.mean(axis=(1, 2))
        var = np.mean((batch - mu[:, None, None]) ** 2, axis=(1, 2))
        row_means = batch.mean(axis=2)
        col_means = batch.mean(axis=1)
        var_rows = np.mean((row_means - mu[:, None]) ** 2, axis=1)
        var_cols = np.mean((col_means - mu[:, None]) ** 2, axis=1)
        re = (batch.reshape(b * h, w) @ self._cos.T).reshape(b, h, -1)
        im = (batch.reshape(b * h, w) @ self._sin.T).reshape(b, h, -1)
        mag = np.sqrt(re * re + im * im + self._mag_eps)
        fft = np.stack([mag[:, :, idx].mean(axis=(1, 2)) for idx in self._bins], axis=1)
        z = (batch.reshape(b, n)[:, :, None] - self._centers[None, None, :]) / self._kernel_width
        hist = np.exp(-0.5 * z * z).mean(axis=1)
        head = np.stack([mu, var, var_rows, var_cols], axis=1)
        return np.concatenate([head, fft, hist], axis=1)

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        return (self.raw(batch) - self.center) / self.scale

    # -- pixel Jacobian ----------------------------------------------------
    def jacobian(self, batch: np.ndarray) -> np.ndarray:
        """d phi_j / d pixel for every patch: shape (B, dim, P, P)."""
        batch = self._check(batch)
        b, h, w = batch.shape
        n = h * w
        out = np.empty((b, self.dim, h, w))
        mu = batch.mean(axis=(1, 2))
        out[:, 0] = 1.0 / n
        out[:, 1] = (2.0 / n) * (batch - mu[:, None, None])
        row_means = batch.mean(axis=2)
        col_means = batch.mean(axis=1)
        out[:, 2] = np.broadcast_to(
            ((2.0 / h) * (row_means - mu[:, None]) / w)[:, :, None], (b, h, w))
        out[:, 3] = np.broadcast_to(
            ((2.0 / w) * (col_means - mu[:, None]) / h)[:, None, :], (b, h, w))
        re = (batch.reshape(b * h, w) @ self._cos.T).reshape(b, h, -1)
        im = (batch.reshape(b * h, w) @ self._sin.T).reshape(b, h, -1)
        mag = np.sqrt(re * re + im * im + self._mag_eps)
        u = re / mag
        v = im / mag
        for k, idx in enumerate(self._bins):
            g = (u[:, :, idx].reshape(b * h, -1) @ self._cos[idx]).reshape(b, h, w)
            g += (v[:, :, idx].reshape(b * h, -1) @ self._sin[idx]).reshape(b, h, w)
            out[:, 4 + k] = g / (h * len(idx))
        z = (batch.reshape(b, n)[:, :, None] - self._centers[None, None, :]) / self._kernel_width
        kernel = np.exp(-0.5 * z * z)
        dhist = (-kernel * z / self._kernel_width) / n          # (B, N, hist_bins)
        out[:, 4 + self.fft_bins:] = np.moveaxis(dhist, 2, 1).reshape(
            b, self.hist_bins, h, w)
        return out / self.scale[None, :, None, None]
