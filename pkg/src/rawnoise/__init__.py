"""Physics-based extreme-low-light sensor noise for RAW video: synthesis of
seven noise components from eight scale parameters, calibration from paired
clean/noisy bursts (moment estimators plus adversarially refined scales),
and fidelity metrics (pooled-histogram KLD, PSNR, SSIM, spectral distance,
component ablations)."""

from .calib import (CalibrationConfig, CriticState, FeatureMap,
                    ResidualPatchSet, calibrate, estimate_fixed_pattern,
                    estimate_periodic, estimate_row, estimate_shot_read,
                    extract_residuals, refine_params, wgan_gp_loss)
from .estimators import NoiseCalibrator, NoiseSynthesizer, RawPostProcessor
from .exceptions import (CalibrationError, DivergenceError, DomainError,
                         FormatError, GeometryError, RawNoiseError)
from .frames import (CLIPPED, RESIDUAL, CfaLayout, Clip, DEFAULT_LAYOUT,
                     FrameBuffer, PairedBurst, channel_plane, mosaic_planes)
from .io import (read_burst, read_clip, read_dataset, read_frame, write_burst,
                 write_clip, write_frame, write_ppm)
from .metrics import (AblationVariant, HistogramSpec, default_ladder, kld,
                      kld_samples, psnr, run_ablation, spectral_distance, ssim)
from .noisegen import (ClipContext, clip_row_offsets, residual_variance,
                       sample_periodic, sample_quant, sample_row,
                       sample_shot_read, synthesize_clip, synthesize_frame)
from .params import (DEFAULT_FREQS, NoiseParams, load_params, save_params)
from .pipeline import (IspConfig, TrainingPair, demosaic, display_frame,
                       equalize, gamma_encode, make_training_pairs,
                       reference_denoise, unprocess, white_balance)
from .streams import NoiseStream

__version__ = "0.1.0"
