"""Adversarial refinement of the noise parameters.

A linear critic D(x) = w . phi(x) over the differentiable patch statistics
of :mod:`features` is trained with the gradient-penalty objective

    L = E[D(synth)] - E[D(real)] + gp * E[(||grad_x D(x_hat)||_2 - 1)^2]

where x_hat interpolates real/synthetic pairs.  The critic descends L; the
generator ascends E[D(synth)] through reparameterized draws, so every
scale parameter receives an exact pathwise gradient:

    d/d lambda of sigma(lambda) * eps        (Gaussian terms)
    d/d lambda of lambda * (u - 1/2)         (uniform quantization)
    d/d lambda of lambda * eps * cos(...)    (periodic amplitudes)

Clipping to [0, 1] uses a pass-through subgradient: the gradient is zeroed
wherever the pre-clip value left the interval.  The measured fixed pattern
is never updated; its tiles are added to synthetic patches verbatim.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..frames import FrameBuffer
from ..exceptions import CalibrationError, GeometryError
from ..params import LAMBDA_KEYS, NoiseParams
from ..streams import REFINE, NoiseStream
from .features import FeatureMap
from .patches import ResidualPatchSet, extract_pattern_tiles

logger = logging.getLogger(__name__)

# Keys whose lambda is a variance (reparameterized through sqrt); quant and
# f1..f3 are widths/stds and enter linearly.
_VAR_KEYS = ("lambda_read", "lambda_shot", "lambda_row", "lambda_row_t")


@dataclass
class CriticState:
    """Linear critic weights plus the optimization hyperparameters.

    gen_lr is a relative step: each generator update moves every parameter
    by at most gen_lr of its own scale (sqrt of variance-type lambdas), so
    parameters spanning several orders of magnitude train at comparable
    fractional rates.
    """

    weights: np.ndarray | None = None
    gp_coeff: float = 10.0
    critic_lr: float = 5e-2
    gen_lr: float = 4e-3
    steps: int = 150
    critic_steps: int = 5
    batch_size: int = 32

    def __post_init__(self):
        if self.gp_coeff < 0:
            raise ValueError("gp_coeff must be >= 0")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if not np.all(np.isfinite(w)):
                raise ValueError("critic weights must be finite")
            self.weights = w


# ---------------------------------------------------------------------------
# Reparameterized synthetic patch batches.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchBase:
    """Base randomness for one synthetic batch (common-random-number ready)."""

    pix: np.ndarray        # (B, P, P) standard normal
    row: np.ndarray        # (B, P)    standard normal
    row_t: np.ndarray      # (B, P)    standard normal
    quant: np.ndarray      # (B, P, P) uniform - 0.5
    amp: np.ndarray        # (B, 3)    standard normal
    phase: np.ndarray      # (B, 3)    uniform * 2pi
    pattern_idx: np.ndarray | None = None   # (B,) tile indices or None


def draw_patch_base(gen: np.random.Generator, batch: int, patch: int,
                    n_pattern_tiles: int = 0) -> PatchBase:
    return PatchBase(
        pix=gen.standard_normal((batch, patch, patch)),
        row=gen.standard_normal((batch, patch)),
        row_t=gen.standard_normal((batch, patch)),
        quant=gen.random((batch, patch, patch)) - 0.5,
        amp=gen.standard_normal((batch, 3)),
        phase=gen.random((batch, 3)) * 2.0 * np.pi,
        pattern_idx=(gen.integers(0, n_pattern_tiles, batch)
                     if n_pattern_tiles else None),
    )


@dataclass(frozen=True)
class SynthCorrection:
    """Compensation for noise the *measured* fixed pattern carries.

    The measured pattern is a finite average, so it retains the mean of the
    clip-constant row offsets (variance lambda_row_t / n_clips) and a small
    iid residue (variance ~ total/n_frames).  When its tiles are added to
    synthetic patches those variances would be counted twice; scaling the
    synthetic row_t variance by row_t_var_scale and subtracting
    read_var_offset from the pixel variance restores the match.
    """

    row_t_var_scale: float = 1.0
    read_var_offset: float = 0.0


def _lambda_vector(lambdas: dict[str, float]) -> dict[str, float]:
    return {k: max(float(lambdas[k]), 0.0) for k in LAMBDA_KEYS}


def synthesize_patches(lambdas: dict[str, float], intensity: np.ndarray,
                       base: PatchBase, freqs, pattern_tiles: np.ndarray | None = None,
                       correction: SynthCorrection = SynthCorrection(),
                       dtype=np.float64):
    """Build clipped residual patches from base noise.

    Returns (patches, clip_mask, cos_waves); cos_waves holds the three
    (B, P) cosine carriers reused by the gradient computation.
    """
    lam = _lambda_vector(lambdas)
    intensity = np.asarray(intensity, dtype=dtype)
    b, p, _ = base.pix.shape
    sigma_pix = np.sqrt(np.maximum(
        lam["lambda_read"] - correction.read_var_offset, 0.0)
        + lam["lambda_shot"] * intensity).astype(dtype)
    total = sigma_pix[:, None, None] * base.pix.astype(dtype)
    total += (np.sqrt(lam["lambda_row"]) * base.row.astype(dtype))[:, :, None]
    sigma_rt = np.sqrt(lam["lambda_row_t"] * correction.row_t_var_scale)
    total += (sigma_rt * base.row_t.astype(dtype))[:, :, None]
    total += lam["lambda_quant"] * base.quant.astype(dtype)
    cols = np.arange(p, dtype=dtype)
    cos_waves = []
    for k, freq in enumerate(freqs):
        wave = np.cos(2.0 * np.pi * freq * cols[None, :]
                      + base.phase[:, k].astype(dtype)[:, None])       # (B, P)
        cos_waves.append(wave)
        amp = (lam[f"lambda_f{k + 1}"] * base.amp[:, k].astype(dtype))[:, None]
        total += (amp * wave)[:, None, :]
    if pattern_tiles is not None and base.pattern_idx is not None:
        total += pattern_tiles[base.pattern_idx].astype(dtype)
    pre = intensity[:, None, None] + total
    mask = ((pre > 0.0) & (pre < 1.0)).astype(dtype)
    patches = np.clip(pre, 0.0, 1.0) - intensity[:, None, None]
    return patches, mask, cos_waves


def patch_lambda_gradients(lambdas: dict[str, float], intensity: np.ndarray,
                           base: PatchBase, mask: np.ndarray,
                           pixel_grad: np.ndarray, cos_waves,
                           correction: SynthCorrection = SynthCorrection()) -> dict[str, float]:
    """<pixel_grad, d patch / d lambda_k> averaged over the batch, per key.

    ``pixel_grad`` is the gradient of the batch objective with respect to
    each output pixel; the clip mask implements the pass-through subgradient.
    """
    lam = _lambda_vector(lambdas)
    gm = (pixel_grad * mask).astype(np.float64)
    intensity = np.asarray(intensity, dtype=np.float64)
    sigma_pix = np.sqrt(np.maximum(
        np.maximum(lam["lambda_read"] - correction.read_var_offset, 0.0)
        + lam["lambda_shot"] * intensity, 1e-30))
    inner_pix = np.einsum("bhw,bhw->b", gm, base.pix.astype(np.float64))
    grads = {
        "lambda_read": float(np.mean(inner_pix / (2.0 * sigma_pix))),
        "lambda_shot": float(np.mean(inner_pix * intensity / (2.0 * sigma_pix))),
    }
    row_sums = gm.sum(axis=2)                      # (B, P)
    inner_row = np.einsum("bh,bh->b", row_sums, base.row.astype(np.float64))
    inner_rt = np.einsum("bh,bh->b", row_sums, base.row_t.astype(np.float64))
    grads["lambda_row"] = float(np.mean(
        inner_row / (2.0 * np.sqrt(max(lam["lambda_row"], 1e-30)))))
    scale = correction.row_t_var_scale
    grads["lambda_row_t"] = float(np.mean(
        inner_rt * scale / (2.0 * np.sqrt(max(lam["lambda_row_t"] * scale, 1e-30)))))
    grads["lambda_quant"] = float(np.mean(
        np.einsum("bhw,bhw->b", gm, base.quant.astype(np.float64))))
    col_sums = gm.sum(axis=1)                      # (B, P)
    for k in range(3):
        grads[f"lambda_f{k + 1}"] = float(np.mean(
            base.amp[:, k].astype(np.float64)
            * np.einsum("bw,bw->b", col_sums, cos_waves[k].astype(np.float64))))
    return grads


# ---------------------------------------------------------------------------
# WGAN-GP objective.
# ---------------------------------------------------------------------------

def wgan_gp_loss(real: ResidualPatchSet | np.ndarray, synth: ResidualPatchSet | np.ndarray,
                 critic: CriticState, features: FeatureMap,
                 interp_draws: np.ndarray):
    """Evaluate the gradient-penalty objective for one real/synth batch.

    Returns (loss, critic_gradient, generator_feature_gradient) where the
    last term is d E[D(synth)] / d phi(synth): an (B, d) array whose rows
    are w / B.  All arithmetic is analytic; the critic gradient includes the
    penalty term chained through the feature map's pixel Jacobian.
    """
    real_p = real.patches if isinstance(real, ResidualPatchSet) else np.asarray(real)
    synth_p = synth.patches if isinstance(synth, ResidualPatchSet) else np.asarray(synth)
    if real_p.shape != synth_p.shape:
        raise GeometryError(
            f"real/synth batches must match, got {real_p.shape} vs {synth_p.shape}")
    w = np.asarray(critic.weights, dtype=np.float64)
    if w.shape != (features.dim,):
        raise GeometryError(
            f"critic weights dim {w.shape} != feature dim {features.dim}")
    t = np.asarray(interp_draws, dtype=np.float64)
    if t.shape != (real_p.shape[0],):
        raise GeometryError("interp_draws must hold one value per patch pair")
    phi_real = features(real_p)
    phi_synth = features(synth_p)
    loss, grad_w = _loss_terms(features, phi_real, phi_synth, real_p, synth_p,
                               w, critic.gp_coeff, t)
    gen_grad = np.tile(w / len(synth_p), (len(synth_p), 1))
    return loss, grad_w, gen_grad


def _loss_terms(features, phi_real, phi_synth, real_p, synth_p, w, gp, t):
    diff = phi_synth.mean(axis=0) - phi_real.mean(axis=0)
    x_hat = t[:, None, None] * real_p + (1.0 - t[:, None, None]) * synth_p
    jac = features.jacobian(x_hat)                        # (B, d, P, P)
    pix_grad = np.einsum("d,bdhw->bhw", w, jac)
    norms = np.sqrt(np.einsum("bhw,bhw->b", pix_grad, pix_grad))
    loss = float(diff @ w + gp * np.mean((norms - 1.0) ** 2))
    # d||.||/dw = J (J^T w / ||.||); at the norm's kink (w = 0) use subgradient 0
    safe = np.maximum(norms, 1e-30)
    jg = np.einsum("bdhw,bhw->bd", jac, pix_grad / safe[:, None, None])
    live = (norms > 1e-12).astype(np.float64)
    penalty_grad = gp * np.mean(
        2.0 * (norms - 1.0)[:, None] * jg * live[:, None], axis=0)
    return loss, diff + penalty_grad


def generator_loss(lambdas: dict[str, float], intensity: np.ndarray, base: PatchBase,
                   critic_w: np.ndarray, features: FeatureMap, freqs,
                   pattern_tiles: np.ndarray | None = None,
                   correction: SynthCorrection = SynthCorrection()) -> float:
    """Generator objective -E[D(synth(lambda))] under fixed base noise."""
    patches, _, _ = synthesize_patches(lambdas, intensity, base, freqs,
                                       pattern_tiles, correction)
    return float(-np.mean(features(patches) @ np.asarray(critic_w, dtype=np.float64)))


def generator_loss_gradients(lambdas: dict[str, float], intensity: np.ndarray,
                             base: PatchBase, critic_w: np.ndarray,
                             features: FeatureMap, freqs,
                             pattern_tiles: np.ndarray | None = None,
                             correction: SynthCorrection = SynthCorrection()):
    """(loss, d loss / d lambda_k) for the generator objective -E[D(synth)]."""
    w = np.asarray(critic_w, dtype=np.float64)
    patches, mask, cos_waves = synthesize_patches(
        lambdas, intensity, base, freqs, pattern_tiles, correction)
    loss = float(-np.mean(features(patches) @ w))
    jac = features.jacobian(patches)
    # d(-mean D)/d pixel: -(1/B) * J^T w per patch
    pix_grad = -np.einsum("d,bdhw->bhw", w, jac)
    grads = patch_lambda_gradients(lambdas, intensity, base, mask, pix_grad,
                                   cos_waves, correction)
    return loss, grads


# ---------------------------------------------------------------------------
# Refinement loop.
# ---------------------------------------------------------------------------

class _Adam:
    def __init__(self, n: int, beta1=0.9, beta2=0.999, eps=1e-12):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def direction(self, grad: np.ndarray) -> np.ndarray:
        """Adam-normalized direction (roughly unit scale per coordinate)."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def refine_params(init: NoiseParams, real: ResidualPatchSet,
                  critic_cfg: CriticState | None = None,
                  features: FeatureMap | None = None,
                  correction: SynthCorrection | None = None,
                  trace_every: int = 10):
    """Alternate critic/generator steps from a moment-estimate initialization.

    Returns (params, info).  info carries the loss/KLD trace, the final
    critic weights and a ``diverged`` flag; on a non-finite loss the loop
    aborts and the last finite iterate is returned.  The fixed pattern is
    never updated.  All lambdas are projected to >= 0 after every step.
    """
    from .. import metrics  # local import: metrics depends on calib.patches

    if len(real) == 0:
        raise CalibrationError("refinement requires a nonempty real patch set")
    cfg = critic_cfg or CriticState()
    correction = correction or SynthCorrection()
    patch = real.patch
    real32 = real.patches.astype(np.float32)
    intensity = real.source_intensity.astype(np.float64)

    # Training runs in float32 for speed; the contract-facing wgan_gp_loss /
    # gradient-check paths stay float64.
    if features is None:
        spread = max(4.0 * float(np.std(real32[: min(len(real32), 512)])), 1e-6)
        features = FeatureMap(patch=patch, hist_range=(-spread, spread))
        features.fit_normalization(real32[: min(len(real32), 1024)])
    train_feat = FeatureMap(patch=patch, fft_bins=features.fft_bins,
                            hist_bins=features.hist_bins,
                            hist_range=features.hist_range)
    train_feat.center = features.center.copy()
    train_feat.scale = features.scale.copy()

    pattern_tiles = None
    if init.fixed_pattern is not None:
        pattern_tiles = extract_pattern_tiles(init.fixed_pattern, patch)

    rng = NoiseStream(init.seed, 0, 0, REFINE).generator()
    phi_real_all = train_feat(real32)

    lambdas = init.lambdas()
    w = (np.zeros(train_feat.dim) if cfg.weights is None
         else np.asarray(cfg.weights, dtype=np.float64).copy())
    adam_w = _Adam(train_feat.dim)
    adam_g = _Adam(len(LAMBDA_KEYS))
    n_tiles = len(pattern_tiles) if pattern_tiles is not None else 0

    kld_spec = metrics.HistogramSpec()
    real_hist_sample = real32.reshape(-1)
    if real_hist_sample.size > 2_000_000:
        real_hist_sample = real_hist_sample[:2_000_000]

    def batch_kld(lam) -> float:
        nb = min(max(len(real), 64), 512)
        idx = rng.integers(0, len(real), nb)
        base = draw_patch_base(rng, nb, patch, n_tiles)
        synth, _, _ = synthesize_patches(lam, intensity[idx], base, init.freqs,
                                         pattern_tiles, correction, np.float32)
        return metrics.kld_samples(real_hist_sample, synth.reshape(-1), kld_spec)

    # Minimum step scale so a lambda clamped to zero can still climb back
    # (a purely multiplicative step would freeze it there).
    scale_floor = 1e-3 * max(float(np.std(real32[: min(len(real32), 256)])), 1e-9)

    trace = []
    diverged = False
    steps_run = 0
    last_good = dict(lambdas)
    for step in range(cfg.steps):
        loss = 0.0
        for _ in range(cfg.critic_steps):
            idx = rng.integers(0, len(real), cfg.batch_size)
            t = rng.random(cfg.batch_size)
            base = draw_patch_base(rng, cfg.batch_size, patch, n_tiles)
            synth, _, _ = synthesize_patches(lambdas, intensity[idx], base,
                                             init.freqs, pattern_tiles,
                                             correction, np.float32)
            loss, grad_w = _loss_terms(train_feat, phi_real_all[idx],
                                       train_feat(synth), real32[idx],
                                       synth, w, cfg.gp_coeff, t)
            if not np.isfinite(loss):
                diverged = True
                break
            w = w - cfg.critic_lr * adam_w.direction(grad_w)
        if diverged:
            break
        idx = rng.integers(0, len(real), cfg.batch_size)
        base = draw_patch_base(rng, cfg.batch_size, patch, n_tiles)
        synth, mask, cos_waves = synthesize_patches(lambdas, intensity[idx], base,
                                                    init.freqs, pattern_tiles,
                                                    correction, np.float32)
        jac = train_feat.jacobian(synth)
        pix_grad = -np.einsum("d,bdhw->bhw", w, jac)
        grads = patch_lambda_gradients(lambdas, intensity[idx], base, mask,
                                       pix_grad, cos_waves, correction)
        gvec = np.array([grads[k] for k in LAMBDA_KEYS])
        if not np.all(np.isfinite(gvec)):
            diverged = True
            break
        direction = np.clip(adam_g.direction(gvec), -1.0, 1.0)
        for i, key in enumerate(LAMBDA_KEYS):
            value = lambdas[key]
            if key in _VAR_KEYS:
                sigma = np.sqrt(max(value, 0.0))
                step_scale = max(sigma, scale_floor)
                sigma = max(sigma - cfg.gen_lr * step_scale * direction[i], 0.0)
                lambdas[key] = sigma * sigma
            else:
                step_scale = max(value, scale_floor)
                lambdas[key] = max(value - cfg.gen_lr * step_scale * direction[i], 0.0)
        last_good = dict(lambdas)
        steps_run = step + 1
        if trace_every and (step % trace_every == 0 or step == cfg.steps - 1):
            trace.append({"step": step, "loss": float(loss),
                          "kld": batch_kld(lambdas)})

    if diverged:
        logger.warning("refinement aborted on non-finite loss; "
                       "returning last finite iterate")
        lambdas = last_good
    info = {"trace": trace, "diverged": diverged, "critic_weights": w,
            "steps_run": steps_run}
    return init.with_lambdas(lambdas), info
