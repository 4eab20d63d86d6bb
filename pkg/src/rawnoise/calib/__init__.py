"""Noise-parameter calibration: moment estimators plus adversarial refinement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import CalibrationError, GeometryError
from ..frames import PairedBurst
from ..params import DEFAULT_FREQS, NoiseParams
from .adversarial import (CriticState, PatchBase, SynthCorrection,
                          draw_patch_base, generator_loss,
                          generator_loss_gradients, refine_params,
                          synthesize_patches, wgan_gp_loss)
from .features import FeatureMap
from .moments import (estimate_fixed_pattern, estimate_periodic, estimate_row,
                      estimate_shot_read)
from .patches import ResidualPatchSet, extract_pattern_tiles, extract_residuals

__all__ = [
    "CalibrationConfig", "CriticState", "FeatureMap", "PatchBase",
    "ResidualPatchSet", "SynthCorrection", "calibrate", "draw_patch_base",
    "estimate_fixed_pattern", "estimate_periodic", "estimate_row",
    "estimate_shot_read", "extract_pattern_tiles", "extract_residuals",
    "generator_loss", "generator_loss_gradients", "refine_params",
    "synthesize_patches", "wgan_gp_loss",
]


@dataclass
class CalibrationConfig:
    """Knobs of the full calibration pipeline."""

    patch: int = 64
    stride: int | None = None
    bit_depth: int = 12
    n_bins: int = 48
    seed: int = 0
    freqs: tuple[float, float, float] = DEFAULT_FREQS
    max_patches: int = 4096
    trace_every: int = 10
    critic: CriticState = field(default_factory=CriticState)


def calibrate(bursts: list[PairedBurst],
              config: CalibrationConfig | None = None):
    """Estimate NoiseParams from paired bursts; returns (params, report).

    Moment estimators initialize every parameter except the quantization
    interval, which starts at full-scale / 2^bit_depth (capped by the
    observed residual spread so a noise-free dataset yields ~0); the
    adversarial refinement then tunes all eight scale parameters.  The
    measured fixed pattern is attached but never refined.
    """
    from .. import metrics  # avoid import cycle at module load

    if not bursts:
        raise CalibrationError("no bursts provided")
    config = config or CalibrationConfig()
    geometry = bursts[0].clean.shape
    for burst in bursts:
        if burst.clean.shape != geometry:
            raise GeometryError("bursts disagree in geometry")
    notes: list[str] = []
    total_frames = sum(b.n_frames for b in bursts)
    total_clips = sum(len(b.clip_lengths) for b in bursts)
    mean_clean = float(np.mean([b.clean.data.mean() for b in bursts]))

    intercept, lam_shot = estimate_shot_read(bursts, config.n_bins)

    try:
        lam_row, lam_row_t = estimate_row(bursts, (intercept, lam_shot))
        if total_clips < 2:
            notes.append("lambda_row_t not identifiable (single clip); set to 0")
    except CalibrationError:
        lam_row, lam_row_t = _row_fallback(bursts, (intercept, lam_shot)), 0.0
        notes.append("lambda_row_t not identifiable (single-frame clips); "
                     "set to 0, lambda_row from spatial row means")

    lam_f = estimate_periodic(bursts, config.freqs, (intercept, lam_shot))

    fixed = None
    if total_frames >= 2:
        fixed = estimate_fixed_pattern(bursts)
    else:
        notes.append("fixed pattern not measured (needs >= 2 frames)")

    # Quantization starts at the ADC step for the configured bit depth,
    # capped by the spread the data can support.
    total_var = intercept + lam_shot * mean_clean + lam_row_t
    quant_init = min(2.0 ** -config.bit_depth,
                     float(np.sqrt(12.0 * max(total_var, 0.0))))

    # The temporal-variance intercept carries every per-frame term; peel off
    # the ones estimated elsewhere to isolate the read variance.
    periodic_var = sum(f * f for f in lam_f) / 2.0
    lam_read = max(intercept - lam_row - periodic_var - quant_init**2 / 12.0, 0.0)

    init = NoiseParams(
        lambda_read=lam_read, lambda_shot=lam_shot, lambda_row=lam_row,
        lambda_row_t=lam_row_t, lambda_quant=quant_init,
        lambda_f1=lam_f[0], lambda_f2=lam_f[1], lambda_f3=lam_f[2],
        fixed_pattern=fixed, seed=config.seed, freqs=config.freqs)

    real = ResidualPatchSet.concatenate(
        [extract_residuals(b, config.patch, config.stride) for b in bursts])
    if len(real) > config.max_patches:
        rng = np.random.default_rng(config.seed)
        keep = rng.permutation(len(real))[:config.max_patches]
        real = ResidualPatchSet(real.patches[keep], real.source_intensity[keep])

    correction = SynthCorrection()
    if fixed is not None and total_clips >= 1:
        correction = SynthCorrection(
            row_t_var_scale=max(1.0 - 1.0 / total_clips, 0.0),
            read_var_offset=(intercept + lam_shot * mean_clean) / total_frames)

    spec = metrics.HistogramSpec()
    kld_before = _params_kld(init, real, correction, spec)
    if config.critic.steps > 0:
        final, refine_info = refine_params(init, real, config.critic,
                                           correction=correction,
                                           trace_every=config.trace_every)
        kld_after = _params_kld(final, real, correction, spec)
    else:
        final, refine_info = init, {"trace": [], "diverged": False,
                                    "steps_run": 0}
        kld_after = kld_before

    report = {
        "stages": {
            "shot_read": {"intercept": float(intercept),
                          "lambda_shot": float(lam_shot),
                          "lambda_read": float(lam_read)},
            "row": {"lambda_row": float(lam_row),
                    "lambda_row_t": float(lam_row_t)},
            "periodic": {f"lambda_f{i + 1}": float(v)
                         for i, v in enumerate(lam_f)},
            "quant_init": float(quant_init),
            "fixed_pattern": {
                "present": fixed is not None,
                "std": float(fixed.data.std()) if fixed is not None else 0.0},
        },
        "init": init.lambdas(),
        "refine": {"trace": refine_info["trace"],
                   "diverged": bool(refine_info["diverged"]),
                   "steps_run": int(refine_info["steps_run"])},
        "final": final.lambdas(),
        "kld_before": float(kld_before),
        "kld_after": float(kld_after),
        "notes": notes,
        "dataset": {"bursts": len(bursts), "clips": int(total_clips),
                    "frames": int(total_frames),
                    "geometry": list(geometry)},
    }
    return final, report


def _row_fallback(bursts, shot_read) -> float:
    """Spatial row-mean variance when no clip has two frames; the result
    conflates per-frame and clip-constant offsets plus fixed-pattern rows."""
    lam_read, lam_shot = shot_read
    terms = []
    for burst in bursts:
        w = burst.clean.width
        floor = (lam_read
                 + lam_shot * burst.clean.data.astype(np.float64).mean(axis=1)) / w
        for residuals in burst.residual_clips():
            row_means = residuals.mean(axis=2)
            terms.append(row_means.var(axis=1, ddof=1).mean() - floor.mean())
    return max(float(np.mean(terms)), 0.0)


def _params_kld(params: NoiseParams, real: ResidualPatchSet,
                correction: SynthCorrection, spec) -> float:
    """Pooled residual-histogram KLD between real patches and a synthetic
    batch drawn at the given parameters."""
    from .. import metrics
    from ..streams import REFINE, NoiseStream

    n = min(max(len(real), 64), 2048)
    rng = NoiseStream(params.seed, 1, 1, REFINE).generator()
    idx = rng.integers(0, len(real), n)
    tiles = (extract_pattern_tiles(params.fixed_pattern, real.patch)
             if params.fixed_pattern is not None else None)
    base = draw_patch_base(rng, n, real.patch,
                           len(tiles) if tiles is not None else 0)
    synth, _, _ = synthesize_patches(
        params.lambdas(), real.source_intensity[idx].astype(np.float64),
        base, params.freqs, tiles, correction, np.float32)
    return metrics.kld_samples(real.values(), synth.reshape(-1), spec)
