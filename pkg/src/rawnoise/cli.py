"""Command-line surface: calibrate, synthesize, evaluate, pipeline,
virtual-sensor.

Every command is deterministic given (config, seed) regardless of
--threads.  Exit codes: 0 success, 2 input/I-O, 3 numerical failure,
4 geometry mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, metrics, virtual
from .calib import (CalibrationConfig, CriticState, calibrate,
                    extract_residuals)
from .calib.patches import ResidualPatchSet
from .exceptions import (CalibrationError, DivergenceError, FormatError,
                         GeometryError)
from .frames import Clip, PairedBurst
from .noisegen import synthesize_clip
from .params import load_params, params_payload, save_params
from .pipeline import IspConfig, display_frame, make_training_pairs
from .virtual import make_fixed_pattern, write_virtual_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_GEOMETRY = 4

# Recognized config-file keys and their types; unknown keys are errors.
CONFIG_TYPES = {
    "dataset": str, "params": str, "out": str, "clean": str, "real": str,
    "input": str, "steps": int, "critic_steps": int, "batch_size": int,
    "patch": int, "stride": int, "bit_depth": int, "bins": int,
    "lo": float, "hi": float, "epsilon": float, "gp_coeff": float,
    "critic_lr": float, "gen_lr": float, "seed": int, "threads": int,
    "clips": int, "frames": int, "bursts": int, "width": int, "height": int,
    "scene": str, "fp_std": float, "gamma": float, "wb": str,
    "equalize": bool, "nir": bool, "pairs": bool, "ablate": bool,
    "clip_id": int, "frame_rate": float, "verbose": bool,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def load_config(path) -> dict:
    """Parse a UTF-8 key=value config file; unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise FormatError(f"config line {lineno}: missing '=' in {line!r}")
        if key not in CONFIG_TYPES:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        kind = CONFIG_TYPES[key]
        value = value.strip()
        if kind is bool:
            low = value.lower()
            if low in _BOOL_TRUE:
                out[key] = True
            elif low in _BOOL_FALSE:
                out[key] = False
            else:
                raise FormatError(f"config line {lineno}: bad boolean {value!r}")
        else:
            try:
                out[key] = kind(value)
            except ValueError as exc:
                raise FormatError(
                    f"config line {lineno}: bad {kind.__name__} {value!r}") from exc
    return out


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill argparse None values from --config; flags win over file entries."""
    if not getattr(args, "config", None):
        return args
    file_values = load_config(args.config)
    for key, value in file_values.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    out = Path(args.out)
    bursts = io.read_dataset(args.dataset)
    critic = CriticState(
        gp_coeff=args.gp_coeff if args.gp_coeff is not None else 10.0,
        critic_lr=args.critic_lr if args.critic_lr is not None else 5e-2,
        gen_lr=args.gen_lr if args.gen_lr is not None else 4e-3,
        steps=args.steps if args.steps is not None else 150,
        critic_steps=args.critic_steps if args.critic_steps is not None else 5,
        batch_size=args.batch_size if args.batch_size is not None else 32)
    config = CalibrationConfig(
        patch=args.patch if args.patch is not None else 64,
        stride=args.stride,
        bit_depth=args.bit_depth if args.bit_depth is not None else 12,
        seed=args.seed if args.seed is not None else 0,
        critic=critic)
    params, report = calibrate(bursts, config)
    save_params(params, out / "params.json")
    _write_json(out / "calibration_report.json", report)
    print(f"calibrated {len(bursts)} burst(s): "
          f"KLD {report['kld_before']:.4f} -> {report['kld_after']:.4f}")
    for key, value in params.lambdas().items():
        print(f"  {key} = {value:.6g}")
    for note in report["notes"]:
        print(f"  note: {note}")
    if report["refine"]["diverged"]:
        print("refinement diverged; report written", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_synthesize(args) -> int:
    out = Path(args.out)
    clean = io.read_clip(args.clean)
    params = load_params(args.params)
    if args.seed is not None:
        params = dataclasses.replace(params, seed=args.seed)
    workers = max(args.threads if args.threads is not None else 1, 1)
    clip_id = args.clip_id if args.clip_id is not None else 0
    noisy = synthesize_clip(clean, params, clip_id, workers=workers)
    io.write_clip(noisy, out / "noisy")
    print(f"wrote {len(noisy)} noisy frame(s) to {out / 'noisy'}")
    if args.pairs:
        pairs = make_training_pairs(clean, params, clip_id, workers=workers)
        for i, pair in enumerate(pairs):
            pair_dir = out / "pairs" / f"pair_{i:06d}"
            pair_dir.mkdir(parents=True, exist_ok=True)
            for j, frame in enumerate(pair.noisy_window.frames):
                io.write_frame(frame, pair_dir / f"noisy_{j}.rfr")
            io.write_frame(pair.clean_target, pair_dir / "target.rfr")
        print(f"wrote {len(pairs)} training pair(s) to {out / 'pairs'}")
    return EXIT_OK


def _synthetic_counterpart(burst: PairedBurst, params, clip_base: int,
                           patch: int) -> ResidualPatchSet:
    frames = []
    for c, length in enumerate(burst.clip_lengths):
        clip = Clip((burst.clean,) * length)
        frames.extend(synthesize_clip(clip, params, clip_base + c).frames)
    synth_burst = PairedBurst(burst.clean, tuple(frames), burst.clip_lengths)
    return extract_residuals(synth_burst, patch)


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    bursts = io.read_dataset(args.real)
    params = load_params(args.params)
    if args.seed is not None:
        params = dataclasses.replace(params, seed=args.seed)
    patch = args.patch if args.patch is not None else 64
    spec = metrics.HistogramSpec(
        bin_count=args.bins if args.bins is not None else 256,
        lo=args.lo if args.lo is not None else -1.0,
        hi=args.hi if args.hi is not None else 1.0,
        smoothing_epsilon=args.epsilon if args.epsilon is not None else 1e-6)
    # Synthetic clips use a disjoint clip-id range so the comparison is a
    # genuine two-sample test even on virtual data made with the same seed.
    synth_base = 1 << 22
    real_sets, synth_sets = [], []
    for b, burst in enumerate(bursts):
        real_sets.append(extract_residuals(burst, patch))
        synth_sets.append(_synthetic_counterpart(
            burst, params, synth_base + b * max(len(burst.clip_lengths), 1), patch))
    real_all = ResidualPatchSet.concatenate(real_sets)
    synth_all = ResidualPatchSet.concatenate(synth_sets)
    report = {
        "kld": metrics.kld(real_all, synth_all, spec),
        "spectral_distance": metrics.spectral_distance(real_all, synth_all),
        "samples": int(real_all.values().size),
        "spec": dataclasses.asdict(spec),
    }
    _write_json(out / "metrics.json", report)
    print(f"KLD {report['kld']:.4f}  spectral {report['spectral_distance']:.4f} "
          f"({report['samples']} pooled samples)")
    if args.ablate:
        clean_clip = Clip((bursts[0].clean,) * bursts[0].clip_lengths[0])
        rows = metrics.run_ablation(metrics.default_ladder(), params,
                                    real_all, clean_clip, spec,
                                    clip_id=synth_base // 2)
        _write_json(out / "ablation.json", {"ablation": rows})
        table = metrics.ablation_table_text(rows)
        (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
        print(table)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    clip = io.read_clip(args.input)
    wb = args.wb if args.wb is not None else "gray-world"
    if wb not in ("gray-world", "none"):
        gains = [float(g) for g in wb.split(",")]
        tags = ("R", "G", "B", "NIR")[: len(gains)]
        wb = dict(zip(tags, gains))
    config = IspConfig(
        gamma=args.gamma if args.gamma is not None else 1.0 / 2.2,
        wb_gains=wb,
        equalize=not args.no_equalize,
        nir_in_display=bool(args.nir))
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        planes = display_frame(frame, config)
        io.write_ppm(planes[:3], out / f"frame_{i:06d}.ppm")
    print(f"wrote {len(clip)} PPM frame(s) to {out}")
    return EXIT_OK


def cmd_virtual_sensor(args) -> int:
    out = Path(args.out)
    params = load_params(args.params)
    if args.seed is not None:
        params = dataclasses.replace(params, seed=args.seed)
    height = args.height if args.height is not None else 256
    width = args.width if args.width is not None else 256
    if args.fp_std is not None and args.fp_std > 0:
        pattern = make_fixed_pattern(height, width, args.fp_std, params.seed)
        params = dataclasses.replace(params, fixed_pattern=pattern)
    if (params.fixed_pattern is not None
            and params.fixed_pattern.shape != (height, width)):
        raise GeometryError(
            f"fixed pattern {params.fixed_pattern.shape} != scene "
            f"({height}, {width})")
    bursts = write_virtual_dataset(
        out, params,
        n_bursts=args.bursts if args.bursts is not None else 1,
        n_clips=args.clips if args.clips is not None else 4,
        frames_per_clip=args.frames if args.frames is not None else 16,
        height=height, width=width,
        scene=args.scene if args.scene is not None else "gradient")
    total = sum(b.n_frames for b in bursts)
    print(f"wrote {len(bursts)} burst(s), {total} noisy frame(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser / dispatch.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="rawnoise",
        description="Low-light sensor-noise synthesis, calibration, and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common],
                       help="estimate noise parameters from a paired-burst dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--critic-steps", dest="critic_steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--bit-depth", dest="bit_depth", type=int, default=None)
    p.add_argument("--gp-coeff", dest="gp_coeff", type=float, default=None)
    p.add_argument("--critic-lr", dest="critic_lr", type=float, default=None)
    p.add_argument("--gen-lr", dest="gen_lr", type=float, default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synthesize", parents=[common],
                       help="add synthetic noise to a clean clip")
    p.add_argument("--clean", required=True, help="clean clip directory")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-id", dest="clip_id", type=int, default=None)
    p.add_argument("--pairs", action="store_true",
                   help="also write 5-frame training pairs")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", parents=[common],
                       help="KLD/spectral fidelity of a noise model vs real bursts")
    p.add_argument("--real", required=True, help="paired-burst dataset directory")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--ablate", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common],
                       help="demosaic/white-balance/gamma/equalize to PPM")
    p.add_argument("--in", dest="input", required=True, help="clip directory")
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--wb", default=None,
                   help="'gray-world', 'none', or comma gains r,g,b[,nir]")
    p.add_argument("--no-equalize", dest="no_equalize", action="store_true")
    p.add_argument("--nir", action="store_true",
                   help="include NIR in the display set")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("virtual-sensor", parents=[common],
                       help="write a ground-truth paired-burst dataset")
    p.add_argument("--params", required=True, help="ground-truth params file")
    p.add_argument("--out", required=True)
    p.add_argument("--bursts", type=int, default=None)
    p.add_argument("--clips", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--scene", default=None, choices=list(virtual.SCENES) + ["mixed"])
    p.add_argument("--fp-std", dest="fp_std", type=float, default=None)
    p.set_defaults(func=cmd_virtual_sensor)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config(args)
        return args.func(args)
    except GeometryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, CalibrationError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
