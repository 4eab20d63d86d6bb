"""Scikit-learn style facade: calibration as ``fit``, synthesis and display
processing as ``transform``, so the toolkit composes with sklearn pipelines
and tooling (get_params/set_params, clone, NotFittedError).
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .calib import CalibrationConfig, CriticState, calibrate
from .frames import Clip, FrameBuffer
from .noisegen import synthesize_clip
from .params import DEFAULT_FREQS, NoiseParams
from .pipeline import IspConfig, display_frame
from .validation import as_clip, check_bursts


class NoiseCalibrator(BaseEstimator):
    """Learn the eight noise parameters and the fixed pattern from bursts.

    fit(X) takes a list of PairedBurst; afterwards ``params_`` holds the
    calibrated NoiseParams and ``report_`` the per-stage calibration report.
    transform(X) then synthesizes noisy copies of clean clips under the
    fitted model.
    """

    def __init__(self, patch=64, stride=None, bit_depth=12, n_bins=48,
                 gp_coeff=10.0, critic_lr=5e-2, gen_lr=4e-3, steps=150,
                 critic_steps=5, batch_size=32, max_patches=4096,
                 freqs=DEFAULT_FREQS, seed=0):
        self.patch = patch
        self.stride = stride
        self.bit_depth = bit_depth
        self.n_bins = n_bins
        self.gp_coeff = gp_coeff
        self.critic_lr = critic_lr
        self.gen_lr = gen_lr
        self.steps = steps
        self.critic_steps = critic_steps
        self.batch_size = batch_size
        self.max_patches = max_patches
        self.freqs = freqs
        self.seed = seed

    def _config(self) -> CalibrationConfig:
        critic = CriticState(gp_coeff=self.gp_coeff, critic_lr=self.critic_lr,
                             gen_lr=self.gen_lr, steps=self.steps,
                             critic_steps=self.critic_steps,
                             batch_size=self.batch_size)
        return CalibrationConfig(patch=self.patch, stride=self.stride,
                                 bit_depth=self.bit_depth, n_bins=self.n_bins,
                                 seed=self.seed, freqs=tuple(self.freqs),
                                 max_patches=self.max_patches, critic=critic)

    def fit(self, X, y=None):
        bursts = check_bursts(X)
        self.params_, self.report_ = calibrate(bursts, self._config())
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("NoiseCalibrator must be fitted before transform")
        return NoiseSynthesizer(self.params_).transform(X)

    def synthesizer(self) -> "NoiseSynthesizer":
        if not hasattr(self, "params_"):
            raise NotFittedError("NoiseCalibrator must be fitted first")
        return NoiseSynthesizer(self.params_)


class NoiseSynthesizer(BaseEstimator, TransformerMixin):
    """Apply a fixed noise model: clean clips/frames -> noisy ones.

    Stateless given its parameters; fit is a no-op.  A list input is treated
    as a list of clips receiving consecutive clip ids starting at clip_id.
    """

    def __init__(self, params: NoiseParams | None = None, clip_id=0, workers=1):
        self.params = params
        self.clip_id = clip_id
        self.workers = workers

    def fit(self, X=None, y=None):
        if self.params is None:
            raise NotFittedError("NoiseSynthesizer needs NoiseParams")
        return self

    def transform(self, X):
        if self.params is None:
            raise NotFittedError("NoiseSynthesizer needs NoiseParams")
        if isinstance(X, list) and X and isinstance(X[0], (Clip, list, tuple)):
            return [self._one(as_clip(c), self.clip_id + i)
                    for i, c in enumerate(X)]
        if isinstance(X, FrameBuffer):
            return self._one(as_clip(X), self.clip_id).frames[0]
        return self._one(as_clip(X), self.clip_id)

    def _one(self, clip: Clip, clip_id: int) -> Clip:
        return synthesize_clip(clip, self.params, clip_id, workers=self.workers)


class RawPostProcessor(BaseEstimator, TransformerMixin):
    """Display-chain transform: RAW frames/clips -> RGB plane stacks."""

    def __init__(self, gamma=1.0 / 2.2, wb_gains="gray-world", equalize=True,
                 nir_in_display=False):
        self.gamma = gamma
        self.wb_gains = wb_gains
        self.equalize = equalize
        self.nir_in_display = nir_in_display

    def _config(self) -> IspConfig:
        return IspConfig(gamma=self.gamma, wb_gains=self.wb_gains,
                         equalize=self.equalize,
                         nir_in_display=self.nir_in_display)

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        config = self._config()
        if isinstance(X, FrameBuffer):
            return display_frame(X, config)
        clip = as_clip(X)
        return [display_frame(f, config) for f in clip.frames]
