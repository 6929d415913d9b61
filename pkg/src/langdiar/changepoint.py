"""Divergence-contour change-point detection.

Pipeline: sliding window embeddings, distance between adjacent windows,
Hamming smoothing, adaptive trailing-mean threshold, greedy peak picking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .embed import EmbeddingSequence, sliding_embeddings
from .errors import ConfigError, ShapeError, TooShortError
from .features import FeatureMatrix
from .score import CosineScorer, default_centering, pair_scores


@dataclass(frozen=True)
class Contour:
    values: np.ndarray
    index_to_frame: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        frames = np.asarray(self.index_to_frame, dtype=np.float64)
        if values.shape != frames.shape:
            raise ShapeError("contour values and frame map must have equal length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "index_to_frame", frames)

    def __len__(self):
        return len(self.values)

    def with_values(self, values) -> "Contour":
        return Contour(values, self.index_to_frame)


@dataclass(frozen=True)
class ChangePointParams:
    alpha: float = 3.2
    delta: float = 1.3
    gamma: float = 0.9
    n: int = 200

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if not self.delta >= 1:
            raise ConfigError("delta must be >= 1")
        if not 0 < self.gamma <= 2:
            raise ConfigError("gamma must lie in (0, 2]")
        if self.n < 2:
            raise ConfigError("analysis window must be >= 2 frames")

    @property
    def smooth_len(self) -> int:
        return smoothing_length(self.n, self.delta)

    @property
    def min_peak_distance(self) -> int:
        return max(1, int(round(self.gamma * self.n)))


LANGUAGE_PARAMS = ChangePointParams(alpha=3.2, delta=1.3, gamma=0.9, n=200)
SPEAKER_PARAMS = ChangePointParams(alpha=2.6, delta=1.3, gamma=0.9, n=50)


def smoothing_length(n: int, delta: float) -> int:
    return max(1, int(round(n / delta)))


def divergence_contour(seq: EmbeddingSequence, scorer=None, lag: int = 1, self_normalize: bool = False) -> Contour:
    """Distance between embeddings ``lag`` positions apart.

    ``values[i] = -s(e[i], e[i+lag])``. With ``self_normalize`` the distance
    becomes ``(s(e_i, e_i) + s(e_j, e_j)) / 2 - s(e_i, e_j)``, which is zero
    for identical embeddings and non-negative for cosine and PLDA scores;
    the adaptive threshold needs that floor. Each contour point is placed
    midway between the two window centers.
    """
    scorer = scorer or CosineScorer()
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if len(seq) < lag + 1:
        raise TooShortError(f"{len(seq)} embeddings cannot form a contour at lag {lag}")
    left, right = seq.vectors[:-lag], seq.vectors[lag:]
    values = -pair_scores(scorer, left, right)
    if self_normalize:
        values += 0.5 * (pair_scores(scorer, left, left) + pair_scores(scorer, right, right))
    frames = (seq.centers[:-lag] + seq.centers[lag:]) / 2.0
    return Contour(values, frames)


def hamming_weights(length: int) -> np.ndarray:
    return np.hamming(length) if length > 1 else np.ones(1)


def smooth_contour(contour: Contour, n: int, delta: float) -> Contour:
    """Centered, normalized Hamming moving average of length ``round(n / delta)``.

    Near the edges the weights are renormalized over the taps that fall
    inside the contour, so a constant contour passes through unchanged.
    """
    if len(contour) == 0:
        raise TooShortError("empty contour")
    width = smoothing_length(n, delta)
    if width > len(contour):
        raise TooShortError(f"smoothing window {width} longer than contour ({len(contour)})")
    w = hamming_weights(width)
    # kernel tap (width - 1) // 2 sits on the output sample; the window is symmetric
    num = np.convolve(contour.values, w, mode="full")
    den = np.convolve(np.ones(len(contour)), w, mode="full")
    start = (width - 1) // 2
    sl = slice(start, start + len(contour))
    return contour.with_values(num[sl] / den[sl])


def threshold_contour(contour: Contour, alpha: float, trail: int, guard: int = 0) -> Contour:
    """Adaptive threshold: ``alpha`` times a trailing mean of the contour.

    ``th[i] = alpha * mean(c[i - guard - trail : i - guard])`` with the window
    clipped at 0. With the default ``guard=0`` this is the mean of the
    previous ``trail`` values. A positive ``guard`` skips the most recent
    values, which keeps a peak's own rising flank out of its threshold.
    Where the window is empty the threshold is ``alpha * c[0]``.
    """
    if trail < 1:
        raise ValueError("trail must be >= 1")
    if guard < 0:
        raise ValueError("guard must be >= 0")
    c = contour.values
    if len(c) == 0:
        return contour
    csum = np.concatenate([[0.0], np.cumsum(c)])
    hi = np.arange(len(c)) - guard
    lo = np.maximum(0, hi - trail)
    hi = np.maximum(hi, 0)
    count = hi - lo
    mean = np.where(count > 0, (csum[hi] - csum[lo]) / np.maximum(count, 1), c[0])
    return contour.with_values(alpha * mean)


def peak_indices(values, threshold, min_dist: int) -> List[int]:
    """Contour indices of accepted peaks, in increasing order.

    Candidates are strict local maxima above the threshold. They are taken
    in decreasing height (lower index first on ties) and any candidate
    closer than ``min_dist`` to an accepted peak is dropped.
    """
    values = np.asarray(values, dtype=np.float64)
    threshold = np.asarray(threshold, dtype=np.float64)
    if values.shape != threshold.shape:
        raise ShapeError("contour and threshold lengths differ")
    if min_dist < 1:
        raise ValueError("min_dist must be >= 1")
    if len(values) < 3:
        return []
    inner = np.arange(1, len(values) - 1)
    is_peak = (values[1:-1] > values[:-2]) & (values[1:-1] > values[2:]) & (values[1:-1] > threshold[1:-1])
    candidates = inner[is_peak]
    order = sorted(candidates, key=lambda i: (-values[i], i))
    accepted: List[int] = []
    for i in order:
        if all(abs(i - j) >= min_dist for j in accepted):
            accepted.append(int(i))
    return sorted(accepted)


def pick_peaks(smoothed: Contour, threshold: Contour, min_dist: int) -> List[float]:
    """Peak positions as frame indices (through the contour's frame map)."""
    return [float(smoothed.index_to_frame[i]) for i in peak_indices(smoothed.values, threshold.values, min_dist)]


def change_contours(
    values: np.ndarray,
    params: ChangePointParams,
    scorer=None,
    center: Optional[bool] = None,
    shift_ms: float = 10.0,
):
    """Raw, smoothed and threshold contours over voiced rows.

    Adjacent non-overlapping windows are compared: the embedding of rows
    ``[i, i+N)`` against that of ``[i+N, i+2N)``, sliding by one row, so the
    contour frame map gives the boundary row between the two windows. The
    threshold averages ``w`` smoothed values behind a guard band of ``w``
    values, ``w`` being the smoothing length.

    ``center`` subtracts the mean window embedding before scoring; the
    default centers for every scorer except PLDA.
    """
    scorer = scorer or CosineScorer()
    if center is None:
        center = default_centering(scorer)
    feats = FeatureMatrix(values, shift_ms)
    if feats.num_rows < 2 * params.n:
        raise TooShortError(f"{feats.num_rows} voiced frames; need {2 * params.n} for two adjacent windows")
    seq = sliding_embeddings(feats, params.n, shift=1)
    if center:
        seq = EmbeddingSequence(seq.vectors - seq.vectors.mean(axis=0), seq.centers, seq.n, seq.shift, seq.shift_ms)
    raw = divergence_contour(seq, scorer, lag=params.n, self_normalize=True)
    width = params.smooth_len
    if width > len(raw):
        raise TooShortError(f"smoothing window {width} longer than contour ({len(raw)})")
    smoothed = smooth_contour(raw, params.n, params.delta)
    thresh = threshold_contour(smoothed, params.alpha, trail=width, guard=width)
    return raw, smoothed, thresh


def detect_change_rows(values, params: ChangePointParams, scorer=None, center: Optional[bool] = None) -> List[int]:
    """Change points as voiced-row indices (first row of each new segment)."""
    _, smoothed, thresh = change_contours(np.asarray(getattr(values, "values", values)), params, scorer, center)
    return [int(np.ceil(f)) for f in pick_peaks(smoothed, thresh, params.min_peak_distance)]


def detect_changes(
    feats: FeatureMatrix,
    params: ChangePointParams = LANGUAGE_PARAMS,
    scorer=None,
    index_map: Optional[np.ndarray] = None,
    center: Optional[bool] = None,
) -> List[float]:
    """Change points in seconds.

    ``feats`` holds voiced rows only; ``index_map`` (from ``select_voiced``)
    maps them back to original frames. Without it rows are taken to be
    consecutive frames.
    """
    rows = detect_change_rows(feats.values, params, scorer, center)
    frames = np.asarray(rows) if index_map is None else np.asarray(index_map)[rows]
    return [float(f) * feats.shift_ms / 1000.0 for f in frames]
