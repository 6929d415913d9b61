"""Short-term-energy voice activity detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annot import Annotation, annotation_from_frame_labels
from .audio import FrameSet
from .errors import EmptyInputError

DEFAULT_VAD_RATIO = 0.06


@dataclass(frozen=True)
class VoicedMask:
    flags: np.ndarray
    shift_ms: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "flags", np.asarray(self.flags, dtype=bool))

    def __len__(self):
        return len(self.flags)

    @property
    def num_voiced(self) -> int:
        return int(self.flags.sum())

    def voiced_indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def to_annotation(self, utterance_id: str = "", total_duration=None, label: str = "speech") -> Annotation:
        """Voiced runs as ``label`` turns, unvoiced runs as ``sil``."""
        labels = [label if f else None for f in self.flags]
        return annotation_from_frame_labels(labels, self.shift_ms, utterance_id, total_duration)


def short_term_energy(frames: FrameSet) -> np.ndarray:
    """Mean-square energy of each frame."""
    if frames.num_frames == 0:
        raise EmptyInputError("no frames")
    return np.mean(np.square(frames.frames), axis=1)


def energy_vad(energy, ratio: float = DEFAULT_VAD_RATIO, shift_ms: float = 10.0) -> VoicedMask:
    """Mark frames whose energy is strictly above ``ratio`` times the utterance mean.

    The mean is taken over all frames, silent ones included. A digitally
    silent utterance therefore comes back entirely unvoiced.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    energy = np.asarray(energy, dtype=np.float64)
    if energy.size == 0:
        raise EmptyInputError("empty energy contour")
    threshold = ratio * energy.mean()
    return VoicedMask(energy > threshold, shift_ms)
