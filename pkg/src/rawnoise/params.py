"""Noise-model parameters and their JSON file format.

The eight scalar parameters, the optional measured fixed-pattern frame and
the master seed fully define the generator.  The params file is a UTF-8
JSON object; the fixed pattern is stored as a relative path to an RFR
residual frame next to the file, so the round trip is lossless (floats
survive JSON exactly, the raster is bit-exact in RFR).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import io
from .exceptions import FormatError
from .frames import RESIDUAL, FrameBuffer

DEFAULT_FREQS = (0.5, 0.25, 0.125)

# Scale-parameter keys in file/report order.  read/shot/row/row_t are
# variances, quant is an interval width, f1..f3 are amplitude stds.
LAMBDA_KEYS = (
    "lambda_read",
    "lambda_shot",
    "lambda_row",
    "lambda_row_t",
    "lambda_quant",
    "lambda_f1",
    "lambda_f2",
    "lambda_f3",
)


@dataclass(frozen=True, eq=False)
class NoiseParams:
    lambda_read: float = 0.0
    lambda_shot: float = 0.0
    lambda_row: float = 0.0
    lambda_row_t: float = 0.0
    lambda_quant: float = 0.0
    lambda_f1: float = 0.0
    lambda_f2: float = 0.0
    lambda_f3: float = 0.0
    fixed_pattern: FrameBuffer | None = None
    seed: int = 0
    freqs: tuple[float, float, float] = DEFAULT_FREQS

    def __post_init__(self):
        for key in LAMBDA_KEYS:
            value = getattr(self, key)
            if not np.isfinite(value) or value < 0:
                raise FormatError(f"{key} must be finite and >= 0, got {value}")
        if not 0 <= int(self.seed) < 2**64:
            raise FormatError(f"seed {self.seed} outside unsigned 64-bit range")
        if self.fixed_pattern is not None and self.fixed_pattern.domain != RESIDUAL:
            raise FormatError("fixed_pattern must be a residual-domain frame")
        if len(self.freqs) != 3:
            raise FormatError("freqs must hold exactly 3 frequencies")
        object.__setattr__(self, "freqs", tuple(float(f) for f in self.freqs))

    def lambdas(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in LAMBDA_KEYS}

    def with_lambdas(self, lambdas: dict[str, float]) -> "NoiseParams":
        return replace(self, **{k: float(v) for k, v in lambdas.items()})

    def zeroed(self, keep: set[str] | None = None) -> "NoiseParams":
        """Copy with every lambda not in ``keep`` forced to 0 (fixed pattern kept
        only if 'fixed' is in ``keep``)."""
        keep = keep or set()
        lam = {k: (getattr(self, k) if k in keep else 0.0) for k in LAMBDA_KEYS}
        fp = self.fixed_pattern if "fixed" in keep else None
        return replace(self, **lam, fixed_pattern=fp)


def save_params(params: NoiseParams, path, pattern_name: str = "fixed_pattern.rfr") -> None:
    """Write the params file; the fixed pattern, when present, is written
    beside it and referenced by relative path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = params_payload(params, pattern_name)
    if params.fixed_pattern is not None:
        io.write_frame(params.fixed_pattern, path.parent / pattern_name)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def params_payload(params: NoiseParams, pattern_name: str | None) -> dict:
    payload = {k: float(getattr(params, k)) for k in LAMBDA_KEYS}
    payload["fixed_pattern"] = pattern_name if params.fixed_pattern is not None else None
    payload["seed"] = int(params.seed)
    payload["freqs"] = list(params.freqs)
    return payload


def load_params(path) -> NoiseParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"params file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("params file must hold a JSON object")
    kwargs = {}
    for key in LAMBDA_KEYS:
        if key not in payload:
            raise FormatError(f"missing key {key}")
        kwargs[key] = float(payload[key])
    pattern_ref = payload.get("fixed_pattern")
    if pattern_ref is not None:
        pattern = io.read_frame(path.parent / pattern_ref)
        if pattern.domain != RESIDUAL:
            raise FormatError("fixed_pattern frame must be residual-domain")
        kwargs["fixed_pattern"] = pattern
    kwargs["seed"] = int(payload.get("seed", 0))
    freqs = payload.get("freqs", list(DEFAULT_FREQS))
    kwargs["freqs"] = tuple(float(f) for f in freqs)
    return NoiseParams(**kwargs)
