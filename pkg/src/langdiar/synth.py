"""Synthetic code-switch / multi-speaker utterances with exact ground truth.

Utterances are built by hard-splicing regions drawn from two mono-class
source pools, alternating between them. The reference annotation is
produced from the splice points, so it is exact to the sample.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .annot import Annotation, Turn, format_rttm
from .audio import AudioBuffer, read_wav, write_wav
from .errors import ConfigError, InsufficientAudioError

logger = logging.getLogger(__name__)

MANIFEST_HEADER = "#DIAR-MANIFEST v1 columns=utterance_id,duration_s,num_changes,seed"


@dataclass
class SourcePool:
    label: str
    clips: List[AudioBuffer]

    def __post_init__(self):
        if not self.clips:
            raise ConfigError(f"pool {self.label!r} has no clips")
        rates = {c.sample_rate for c in self.clips}
        if len(rates) != 1:
            raise ConfigError(f"pool {self.label!r} mixes sample rates {sorted(rates)}")

    @property
    def sample_rate(self) -> int:
        return self.clips[0].sample_rate

    @property
    def total_samples(self) -> int:
        return sum(len(c) for c in self.clips)


@dataclass(frozen=True)
class SynthParams:
    min_changes: int = 1
    max_changes: int = 5
    seg_min: float = 3.5
    seg_max: float = 6.5
    num_utterances: int = 4000
    seed: int = 0
    crossfade_ms: float = 0.0
    # duration ratio pool A : pool B, e.g. 4.0 for a 4:1 primary/secondary split
    ratio: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.min_changes <= self.max_changes:
            raise ConfigError("need 0 <= min_changes <= max_changes")
        if not 0 < self.seg_min <= self.seg_max:
            raise ConfigError("segment durations must satisfy 0 < seg_min <= seg_max")
        if self.ratio is not None and self.ratio <= 0:
            raise ConfigError("ratio must be positive")
        if self.crossfade_ms < 0:
            raise ConfigError("crossfade_ms must be >= 0")

    def duration_scale(self, pool_index: int) -> float:
        if self.ratio is None:
            return 1.0
        # keeps the mean over an A/B pair unchanged
        return 2 * self.ratio / (self.ratio + 1) if pool_index == 0 else 2 / (self.ratio + 1)


def _draw_region(pool: SourcePool, length: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(len(pool.clips)))
    clip = pool.clips[first].samples
    if len(clip) >= length:
        start = int(rng.integers(len(clip) - length + 1))
        return clip[start : start + length]
    # concatenate clips, cycling from a random start, each at most once
    pieces, have = [], 0
    for k in range(len(pool.clips)):
        piece = pool.clips[(first + k) % len(pool.clips)].samples
        pieces.append(piece[: length - have])
        have += len(pieces[-1])
        if have >= length:
            return np.concatenate(pieces)
    raise InsufficientAudioError(
        f"pool {pool.label!r} holds {pool.total_samples} samples, {length} requested"
    )


def _apply_fades(samples: np.ndarray, bounds: Sequence[int], fade: int) -> None:
    if fade <= 0:
        return
    ramp = np.linspace(0.0, 1.0, fade, endpoint=False)
    for b in bounds:
        lo = max(0, b - fade)
        samples[lo:b] *= ramp[::-1][: b - lo]
        hi = min(len(samples), b + fade)
        samples[b:hi] *= ramp[: hi - b]


def generate_utterance(
    pool_a: SourcePool,
    pool_b: SourcePool,
    params: SynthParams,
    rng: np.random.Generator,
    utterance_id: str = "utt",
) -> Tuple[AudioBuffer, Annotation]:
    """Splice one utterance with ``k`` change points, ``k`` uniform in the configured range."""
    if pool_a.sample_rate != pool_b.sample_rate:
        raise ConfigError("source pools must share a sample rate")
    sr = pool_a.sample_rate
    pools = (pool_a, pool_b)
    k = int(rng.integers(params.min_changes, params.max_changes + 1))
    first = int(rng.integers(2))

    pieces, turns, bounds = [], [], []
    pos = 0
    for s in range(k + 1):
        which = (first + s) % 2
        dur = rng.uniform(params.seg_min, params.seg_max) * params.duration_scale(which)
        length = max(1, int(round(dur * sr)))
        pieces.append(np.array(_draw_region(pools[which], length, rng), dtype=np.float64))
        turns.append(Turn(pos / sr, length / sr, pools[which].label, utterance_id))
        pos += length
        bounds.append(pos)
    samples = np.concatenate(pieces)
    _apply_fades(samples, bounds[:-1], int(round(params.crossfade_ms * sr / 1000)))
    return AudioBuffer(samples, sr, utterance_id), Annotation(utterance_id, turns)


def utterance_seed(seed: int, index: int) -> int:
    """Per-utterance seed; independent of generation order and job count."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    duration: float
    num_changes: int
    seed: int

    def format(self) -> str:
        return f"{self.utterance_id} {self.duration:.6f} {self.num_changes} {self.seed}"


def _generate_one(args):
    pool_a, pool_b, params, index, wav_dir = args
    uid = f"utt{index:05d}"
    sub = utterance_seed(params.seed, index)
    audio, ann = generate_utterance(pool_a, pool_b, params, np.random.default_rng(sub), uid)
    if wav_dir is not None:
        write_wav(os.path.join(wav_dir, uid + ".wav"), audio)
    return audio, ann, ManifestEntry(uid, audio.duration, len(ann) - 1, sub)


def generate_corpus(pool_a, pool_b, params: SynthParams, jobs: int = 1):
    """In-memory variant of :func:`generate_dataset`: list of (audio, annotation)."""
    tasks = [(pool_a, pool_b, params, i, None) for i in range(params.num_utterances)]
    results = _map(tasks, jobs)
    return [(a, ann) for a, ann, _ in results]


def _map(tasks, jobs):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_generate_one, tasks, chunksize=8))
    return [_generate_one(t) for t in tasks]


def generate_dataset(pool_a, pool_b, params: SynthParams, out_dir, jobs: int = 1) -> List[ManifestEntry]:
    """Write ``wav/<id>.wav``, ``ref.rttm`` and ``manifest.txt`` under ``out_dir``.

    Each utterance uses its own seed derived from ``(params.seed, index)``,
    so results do not depend on ``jobs``.
    """
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    tasks = [(pool_a, pool_b, params, i, wav_dir) for i in range(params.num_utterances)]
    results = _map(tasks, jobs)
    with open(os.path.join(out_dir, "ref.rttm"), "w") as fh:
        fh.write(format_rttm([ann for _, ann, _ in results]))
    entries = [entry for _, _, entry in results]
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(MANIFEST_HEADER + "\n")
        for e in entries:
            fh.write(e.format() + "\n")
    return entries


def read_manifest(path) -> List[ManifestEntry]:
    entries = []
    with open(path) as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            uid, dur, k, seed = line.split()
            entries.append(ManifestEntry(uid, float(dur), int(k), int(seed)))
    return entries


def load_pool(directory, label: Optional[str] = None) -> SourcePool:
    """All ``*.wav`` files of a directory, sorted by name."""
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".wav"))
    if not names:
        raise ConfigError(f"no .wav files in {directory}")
    label = label or os.path.basename(os.path.normpath(directory))
    return SourcePool(label, [read_wav(os.path.join(directory, n)) for n in names])


# -- toy "languages" ---------------------------------------------------------

def _syllabic_envelope(n: int, sr: int, rng) -> np.ndarray:
    rate = rng.uniform(3.0, 5.0)
    t = np.arange(n) / sr
    phase = rng.uniform(0, 2 * np.pi)
    return 0.7 + 0.3 * np.sin(2 * np.pi * rate * t + phase)


def _noise_clip(n, sr, rng) -> np.ndarray:
    lo = rng.uniform(2000.0, 2600.0)
    hi = rng.uniform(5000.0, 6000.0)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    x = signal.sosfilt(sos, rng.standard_normal(n))
    return x * _syllabic_envelope(n, sr, rng)


def _tone_clip(n, sr, rng) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(110.0, 220.0)
    vib_rate, vib_depth = rng.uniform(4.0, 6.0), rng.uniform(0.01, 0.03)
    inst_f0 = f0 * (1 + vib_depth * np.sin(2 * np.pi * vib_rate * t))
    phase = 2 * np.pi * np.cumsum(inst_f0) / sr
    x = np.zeros(n)
    for h in range(1, int(1800.0 // f0) + 1):
        x += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    x += 0.01 * rng.standard_normal(n)
    return x * _syllabic_envelope(n, sr, rng)


def toy_pools(
    seed: int = 0,
    sample_rate: int = 16000,
    clips_per_pool: int = 6,
    clip_seconds: float = 30.0,
    labels: Tuple[str, str] = ("A", "B"),
) -> Tuple[SourcePool, SourcePool]:
    """Two artificial, spectrally distinct "languages".

    Pool A is band-pass filtered noise (high band), pool B harmonic tone
    complexes with vibrato (low band). Both carry a slow syllable-rate
    envelope and are scaled to RMS 0.1.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70]))
    n = int(round(clip_seconds * sample_rate))
    pools = []
    for label, make in zip(labels, (_noise_clip, _tone_clip)):
        clips = []
        for i in range(clips_per_pool):
            x = make(n, sample_rate, rng)
            x *= 0.1 / np.sqrt(np.mean(x * x))
            clips.append(AudioBuffer(x, sample_rate, f"{label}{i}"))
        pools.append(SourcePool(label, clips))
    return pools[0], pools[1]
