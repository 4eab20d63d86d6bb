"""Fidelity metrics: pooled-histogram KL divergence, PSNR, SSIM, spectral
distance, and the component-ablation ladder runner.

KLD is computed on pooled scalar residual histograms (256 bins on [-1, 1],
1e-6 smoothing mass per bin) rather than per-patch; out-of-range values are
folded into the edge bins, so the estimate is defined for any input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .calib.patches import ResidualPatchSet, extract_residuals
from .exceptions import GeometryError
from .frames import Clip, FrameBuffer, PairedBurst
from .noisegen import synthesize_clip
from .params import NoiseParams

COMPONENTS = ("shot", "read", "quant", "row", "row_t", "periodic", "fixed")

_COMPONENT_LAMBDAS = {
    "shot": ("lambda_shot",),
    "read": ("lambda_read",),
    "quant": ("lambda_quant",),
    "row": ("lambda_row",),
    "row_t": ("lambda_row_t",),
    "periodic": ("lambda_f1", "lambda_f2", "lambda_f3"),
}


@dataclass(frozen=True)
class HistogramSpec:
    bin_count: int = 256
    lo: float = -1.0
    hi: float = 1.0
    smoothing_epsilon: float = 1e-6

    def __post_init__(self):
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")
        if not self.lo < self.hi:
            raise ValueError(f"range [{self.lo}, {self.hi}] is empty")
        if self.smoothing_epsilon <= 0:
            raise ValueError("smoothing_epsilon must be > 0")

    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bin_count + 1)


def smoothed_histogram(values: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    """Normalized histogram mass with epsilon smoothing; strictly positive."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("empty input")
    counts, _ = np.histogram(np.clip(values, spec.lo, spec.hi), bins=spec.edges())
    mass = counts / counts.sum() + spec.smoothing_epsilon
    return mass / mass.sum()


def kld_samples(real_values: np.ndarray, synth_values: np.ndarray,
                spec: HistogramSpec | None = None) -> float:
    """KL(real || synth) between pooled, smoothed sample histograms."""
    spec = spec or HistogramSpec()
    p = smoothed_histogram(real_values, spec)
    q = smoothed_histogram(synth_values, spec)
    return float(np.sum(p * np.log(p / q)))


def kld(real: ResidualPatchSet, synth: ResidualPatchSet,
        spec: HistogramSpec | None = None) -> float:
    """Pooled residual-histogram KL divergence between two patch sets."""
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("empty input")
    return kld_samples(real.values(), synth.values(), spec)


def psnr(a: FrameBuffer, b: FrameBuffer, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the frames are identical."""
    if a.shape != b.shape:
        raise GeometryError(f"geometry mismatch {a.shape} vs {b.shape}")
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse / (peak * peak))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a: FrameBuffer, b: FrameBuffer, peak: float = 1.0) -> float:
    """Single-scale structural similarity on the raw plane.

    Standard constants C1=(0.01*peak)^2, C2=(0.03*peak)^2 with an 11x11
    Gaussian window (sigma 1.5); the mean is taken over windows fully inside
    the frame.
    """
    if a.shape != b.shape:
        raise GeometryError(f"geometry mismatch {a.shape} vs {b.shape}")
    size = 11
    if a.height < size or a.width < size:
        raise GeometryError(f"frame {a.shape} smaller than {size}x{size} window")
    window = _gaussian_window(size, 1.5)
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def smooth(img):
        return ndimage.correlate(img, window, mode="nearest")

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y
    ssim_map = (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)))
    half = size // 2
    return float(ssim_map[half:-half, half:-half].mean())


def mean_row_spectrum(patches: np.ndarray) -> np.ndarray:
    """Mean row-wise rFFT magnitude spectrum, normalized to unit total mass."""
    spectrum = np.abs(np.fft.rfft(patches.astype(np.float64), axis=-1))
    mean = spectrum.mean(axis=tuple(range(spectrum.ndim - 1)))
    total = mean.sum()
    if total <= 0:
        return np.full_like(mean, 1.0 / len(mean))
    return mean / total


def spectral_distance(real: ResidualPatchSet, synth: ResidualPatchSet) -> float:
    """L1 distance between the sets' normalized mean row spectra."""
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("empty input")
    return float(np.abs(mean_row_spectrum(real.patches)
                        - mean_row_spectrum(synth.patches)).sum())


# ---------------------------------------------------------------------------
# Component-ablation ladder.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationVariant:
    """A named subset of noise components to leave enabled."""

    name: str
    components: frozenset

    def __post_init__(self):
        comps = frozenset(self.components)
        unknown = comps - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown components {sorted(unknown)}")
        object.__setattr__(self, "components", comps)

    def restrict(self, params: NoiseParams) -> NoiseParams:
        """Params with every disabled component's lambdas forced to 0 and the
        fixed pattern dropped unless enabled."""
        keep = set()
        for comp in self.components:
            keep.update(_COMPONENT_LAMBDAS.get(comp, ()))
        if "fixed" in self.components:
            keep.add("fixed")
        return params.zeroed(keep)


def default_ladder() -> list[AblationVariant]:
    """The cumulative component ladder, weakest model first."""
    steps = [
        ("read", {"read"}),
        ("read+shot", {"read", "shot"}),
        ("+quant", {"read", "shot", "quant"}),
        ("+row", {"read", "shot", "quant", "row", "row_t"}),
        ("+periodic", {"read", "shot", "quant", "row", "row_t", "periodic"}),
        ("full", set(COMPONENTS)),
    ]
    return [AblationVariant(name, frozenset(c)) for name, c in steps]


def run_ablation(variants: list[AblationVariant], params: NoiseParams,
                 real: ResidualPatchSet, clean: Clip,
                 spec: HistogramSpec | None = None,
                 clip_id: int = 0) -> list[dict]:
    """KLD of each variant's synthetic residuals against the real set.

    Rows are returned in input order as JSON-ready dicts.  Variants share
    the same master seed, so common random numbers cancel most of the Monte
    Carlo wiggle between neighbouring rungs.
    """
    if not variants:
        raise ValueError("no variants given")
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise ValueError("variant names must be unique within a run")
    spec = spec or HistogramSpec()
    rows = []
    for variant in variants:
        restricted = variant.restrict(params)
        noisy = synthesize_clip(clean, restricted, clip_id)
        burst = PairedBurst(clean.frames[0], noisy.frames)
        synth = extract_residuals(burst, real.patch)
        rows.append({"name": variant.name,
                     "components": sorted(variant.components),
                     "kld": kld(real, synth, spec)})
    return rows


def ablation_table_text(rows: list[dict]) -> str:
    width = max(len(r["name"]) for r in rows)
    lines = [f"{'variant'.ljust(width)}  KLD"]
    for r in rows:
        lines.append(f"{r['name'].ljust(width)}  {r['kld']:.4f}")
    return "\n".join(lines)


def ablation_table_json(rows: list[dict]) -> str:
    return json.dumps({"ablation": rows}, indent=2)
