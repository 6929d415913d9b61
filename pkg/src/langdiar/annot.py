"""Annotation data model and RTTM reading/writing.

RTTM lines written here look like::

    SPEAKER utt1 1 0.000 5.000 <NA> <NA> L1 <NA> <NA>

The label ``sil`` is reserved for non-speech turns. It survives a round trip
through RTTM but the scorer never treats it as a speech class.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import FormatError, ParseError

logger = logging.getLogger(__name__)

SILENCE = "sil"
_QUANTUM = Decimal("0.001")


@dataclass(frozen=True, order=True)
class Turn:
    onset: float
    duration: float
    label: str
    utterance_id: str = ""

    def __post_init__(self):
        if not np.isfinite(self.onset) or self.onset < 0:
            raise FormatError(f"turn onset must be finite and >= 0, got {self.onset}")
        if not self.duration > 0:
            raise FormatError(f"turn duration must be > 0, got {self.duration}")

    @property
    def end(self) -> float:
        return self.onset + self.duration

    @property
    def is_speech(self) -> bool:
        return self.label != SILENCE


@dataclass
class Annotation:
    """Labeled turns of one utterance, kept sorted by onset."""

    utterance_id: str
    turns: List[Turn] = field(default_factory=list)

    def __post_init__(self):
        self.turns = sorted(
            (t if t.utterance_id == self.utterance_id else Turn(t.onset, t.duration, t.label, self.utterance_id))
            for t in self.turns
        )
        last_end: Dict[str, float] = {}
        for t in self.turns:
            # 1 us slack absorbs float noise from frame arithmetic
            if t.onset < last_end.get(t.label, -np.inf) - 1e-6:
                raise FormatError(
                    f"{self.utterance_id}: overlapping turns with label {t.label!r} at {t.onset:.3f}"
                )
            last_end[t.label] = max(last_end.get(t.label, -np.inf), t.end)

    def __len__(self):
        return len(self.turns)

    def __iter__(self):
        return iter(self.turns)

    @property
    def end(self) -> float:
        return max((t.end for t in self.turns), default=0.0)

    def labels(self, include_silence: bool = False) -> List[str]:
        return sorted({t.label for t in self.turns if include_silence or t.is_speech})

    def speech_turns(self) -> List[Turn]:
        return [t for t in self.turns if t.is_speech]

    def relabel(self, mapping: Dict[str, str]) -> "Annotation":
        return Annotation(
            self.utterance_id,
            [Turn(t.onset, t.duration, mapping.get(t.label, t.label), self.utterance_id) for t in self.turns],
        )

    def label_at(self, times: np.ndarray, default: str = SILENCE) -> List[str]:
        """Label active at each time (half-open turns; last writer wins on overlap)."""
        times = np.asarray(times, dtype=float)
        out = np.full(times.shape, default, dtype=object)
        for t in self.turns:
            out[(times >= t.onset) & (times < t.end)] = t.label
        return list(out)


def annotation_from_frame_labels(
    labels: Sequence[Optional[str]],
    shift_ms: float,
    utterance_id: str,
    total_duration: Optional[float] = None,
) -> Annotation:
    """Collapse per-frame labels into turns.

    Frame ``i`` spans ``[i*shift, (i+1)*shift)``. ``None`` means silence. When
    ``total_duration`` is given the final turn is stretched (or trimmed) so the
    turns tile ``[0, total_duration)``.
    """
    step = shift_ms / 1000.0
    turns = []
    n = len(labels)
    i = 0
    while i < n:
        lab = labels[i] if labels[i] is not None else SILENCE
        j = i + 1
        while j < n and (labels[j] if labels[j] is not None else SILENCE) == lab:
            j += 1
        onset, end = i * step, j * step
        if j == n and total_duration is not None:
            end = total_duration
        if end > onset:
            turns.append(Turn(onset, end - onset, lab, utterance_id))
        i = j
    if not turns and total_duration:
        turns.append(Turn(0.0, total_duration, SILENCE, utterance_id))
    return Annotation(utterance_id, turns)


def _fmt_time(x: float) -> str:
    return str(Decimal(repr(float(x))).quantize(_QUANTUM, rounding=ROUND_HALF_UP))


def format_rttm(annotations: Iterable[Annotation]) -> str:
    if isinstance(annotations, Annotation):
        annotations = [annotations]
    elif isinstance(annotations, dict):
        annotations = annotations.values()
    lines = []
    for ann in sorted(annotations, key=lambda a: a.utterance_id):
        rows = []
        for t in ann.turns:
            onset, end = Decimal(_fmt_time(t.onset)), Decimal(_fmt_time(t.end))
            if end <= onset:
                logger.warning("%s: dropping %s turn shorter than 1 ms at %s", ann.utterance_id, t.label, onset)
                continue
            rows.append((onset, end - onset, t.label))
        # order by the serialized values so that a reparsed file writes back identically
        for onset, dur, label in sorted(rows):
            lines.append(f"SPEAKER {ann.utterance_id} 1 {onset} {dur} <NA> <NA> {label} <NA> <NA>\n")
    return "".join(lines)


def write_rttm(annotations, path) -> None:
    """Write annotations as RTTM, sorted by (utterance id, onset).

    Times are quantized to 1 ms with round-half-up. The duration is derived
    from the quantized onset and end, so adjacent turns stay adjacent.
    """
    with open(path, "w") as fh:
        fh.write(format_rttm(annotations))


def parse_rttm_lines(lines: Iterable[str], path=None) -> Dict[str, Annotation]:
    grouped: Dict[str, List[Turn]] = defaultdict(list)
    order: List[str] = []
    skipped = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if fields[0] != "SPEAKER":
            skipped += 1
            continue
        # some writers (e.g. Kaldi) omit the trailing <NA>
        if len(fields) not in (9, 10):
            raise ParseError(f"expected 10 fields, got {len(fields)}", lineno, path)
        file_id, label = fields[1], fields[7]
        try:
            onset, dur = float(fields[3]), float(fields[4])
        except ValueError:
            raise ParseError(f"non-numeric onset/duration {fields[3]!r} {fields[4]!r}", lineno, path) from None
        if not (np.isfinite(onset) and np.isfinite(dur)):
            raise ParseError("onset/duration must be finite", lineno, path)
        if dur <= 0:
            raise ParseError(f"duration must be > 0, got {dur}", lineno, path)
        if onset < 0:
            raise ParseError(f"onset must be >= 0, got {onset}", lineno, path)
        if file_id not in grouped:
            order.append(file_id)
        grouped[file_id].append(Turn(onset, dur, label, file_id))
    if skipped:
        logger.warning("%s: ignored %d non-SPEAKER records", path or "<rttm>", skipped)
    return {fid: Annotation(fid, grouped[fid]) for fid in order}


def parse_rttm(path) -> Dict[str, Annotation]:
    """Parse an RTTM file into ``{utterance_id: Annotation}``."""
    with open(path) as fh:
        return parse_rttm_lines(fh, path=path)
