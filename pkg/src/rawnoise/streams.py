"""Deterministic, splittable random substreams for noise synthesis.

Every stochastic draw in the generator is keyed by the tuple
(master_seed, clip_id, frame_id, component_id).  The tuple is packed into
the 128-bit key of a Philox counter-based generator, so distinct tuples
yield independent substreams, the same tuple always replays the identical
sample sequence, and no mutable RNG state is shared between frames.  This
makes clip synthesis reproducible under any parallel schedule.

Bit-exactness is guaranteed within this implementation, not across
libraries or languages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Component ids; disjoint per stochastic term of the noise model.
SHOT_READ = 0
ROW = 1
ROW_TEMPORAL = 2
QUANT = 3
PERIODIC = 4
FIXED_PATTERN = 5
SCENE = 6       # procedural clean scenes in the virtual-sensor harness
REFINE = 7      # adversarial-refinement batch draws

# frame_id used for once-per-clip draws (the clip-constant row offsets).
CLIP_LEVEL = 0xFFFFFF

_MASK24 = (1 << 24) - 1
_MASK16 = (1 << 16) - 1


@dataclass(frozen=True)
class NoiseStream:
    """Address of one substream, resolvable to a numpy Generator."""

    master_seed: int
    clip_id: int = 0
    frame_id: int = 0
    component_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed & (2**64 - 1), _pack(self.clip_id, self.frame_id, self.component_id)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, clip_id=None, frame_id=None, component_id=None) -> "NoiseStream":
        return NoiseStream(
            self.master_seed,
            self.clip_id if clip_id is None else clip_id,
            self.frame_id if frame_id is None else frame_id,
            self.component_id if component_id is None else component_id,
        )


def _pack(clip_id: int, frame_id: int, component_id: int) -> np.uint64:
    # 24 + 24 + 16 bits; disjoint fields make key collisions impossible
    # within the supported id ranges.
    if not 0 <= clip_id <= _MASK24:
        raise ValueError(f"clip_id {clip_id} outside [0, 2^24)")
    if not 0 <= frame_id <= _MASK24:
        raise ValueError(f"frame_id {frame_id} outside [0, 2^24)")
    if not 0 <= component_id <= _MASK16:
        raise ValueError(f"component_id {component_id} outside [0, 2^16)")
    packed = (clip_id << 40) | (frame_id << 16) | component_id
    return np.uint64(packed)
