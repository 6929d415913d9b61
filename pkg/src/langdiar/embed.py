"""Window-level embeddings.

The default extractor is statistics pooling (per-dimension mean and
standard deviation over the window). Neural embeddings computed elsewhere
(x-vectors, wav2vec pooled outputs) enter through the text matrix format::

    #DIAR-EMB v1 n=200 shift=1 shift_ms=10 dim=512
    100 0.12 -0.5 ...
    101 0.10 -0.4 ...

Each payload row starts with the center frame index of its window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EmptyInputError, FormatError, ShapeError, TooShortError
from .features import FeatureMatrix

HEADER_TAG = "#DIAR-EMB"
FORMAT_VERSION = "v1"


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    center_frame: int
    window_len: int

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EmbeddingSequence:
    """Embeddings stacked row-wise with their window centers."""

    vectors: np.ndarray
    centers: np.ndarray
    n: int
    shift: int = 1
    shift_ms: float = 10.0

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        centers = np.asarray(self.centers, dtype=np.int64)
        if vectors.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got {vectors.shape}")
        if centers.shape != (vectors.shape[0],):
            raise ShapeError("one center frame per embedding required")
        if np.any(np.diff(centers) <= 0):
            raise FormatError("embedding centers must be strictly increasing")
        if not np.all(np.isfinite(vectors)):
            raise FormatError("embeddings must be finite")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "centers", centers)

    def __len__(self):
        return self.vectors.shape[0]

    def __getitem__(self, i) -> Embedding:
        return Embedding(self.vectors[i], int(self.centers[i]), self.n)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def stats_embedding(window) -> np.ndarray:
    """Mean and population standard deviation of each column, concatenated."""
    window = np.asarray(getattr(window, "values", window), dtype=np.float64)
    if window.ndim != 2 or window.shape[0] < 2:
        raise TooShortError("a statistics window needs at least 2 rows")
    return np.concatenate([window.mean(axis=0), window.std(axis=0)])


def window_count(rows: int, n: int, shift: int) -> int:
    return 0 if rows < n else (rows - n) // shift + 1


def _sliding_stats(values: np.ndarray, n: int, shift: int) -> np.ndarray:
    # running sums on centered data; centering keeps the variance subtraction well conditioned
    centered = values - values.mean(axis=0)
    zero = np.zeros((1, values.shape[1]))
    s1 = np.concatenate([zero, np.cumsum(centered, axis=0)])
    s2 = np.concatenate([zero, np.cumsum(centered * centered, axis=0)])
    starts = np.arange(window_count(len(values), n, shift)) * shift
    mean = (s1[starts + n] - s1[starts]) / n
    var = (s2[starts + n] - s2[starts]) / n - mean * mean
    return np.hstack([mean + values.mean(axis=0), np.sqrt(np.maximum(var, 0.0))])


def sliding_embeddings(
    feats: FeatureMatrix,
    n: int,
    shift: int = 1,
    extractor: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    index_map: Optional[np.ndarray] = None,
) -> EmbeddingSequence:
    """Embed windows of ``n`` rows starting at 0, shift, 2*shift, ...

    The center of a window starting at ``s`` is row ``s + n // 2``; with an
    ``index_map`` (from :func:`select_voiced`) centers are reported as
    original frame indices. ``extractor=None`` selects a vectorized
    statistics-pooling path equivalent to :func:`stats_embedding`.
    """
    values = np.asarray(getattr(feats, "values", feats), dtype=np.float64)
    if shift < 1:
        raise ValueError("shift must be >= 1")
    if n < 2:
        raise TooShortError("window length must be >= 2")
    if len(values) < n:
        raise TooShortError(f"{len(values)} rows is fewer than the window length {n}")
    count = window_count(len(values), n, shift)
    starts = np.arange(count) * shift
    if extractor is None:
        vectors = _sliding_stats(values, n, shift)
    else:
        vectors = np.stack([np.asarray(extractor(values[s : s + n]), dtype=np.float64) for s in starts])
    centers = starts + n // 2
    if index_map is not None:
        centers = np.asarray(index_map)[centers]
    shift_ms = getattr(feats, "shift_ms", 10.0)
    return EmbeddingSequence(vectors, centers, n, shift, shift_ms)


def format_embeddings(seq: EmbeddingSequence) -> str:
    lines = [f"{HEADER_TAG} {FORMAT_VERSION} n={seq.n} shift={seq.shift} shift_ms={seq.shift_ms:g} dim={seq.dim}\n"]
    for center, row in zip(seq.centers, seq.vectors):
        lines.append(f"{center} " + " ".join(repr(float(v)) for v in row) + "\n")
    return "".join(lines)


def write_embeddings(path, seq: EmbeddingSequence) -> None:
    with open(path, "w") as fh:
        fh.write(format_embeddings(seq))


def _parse_header(line: str, path) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != HEADER_TAG:
        raise FormatError(f"{path}: missing '{HEADER_TAG}' header")
    if parts[1] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {parts[1]!r}")
    header = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise FormatError(f"{path}: bad header item {item!r}")
        header[key] = value
    try:
        return {
            "n": int(header["n"]),
            "shift": int(header.get("shift", 1)),
            "shift_ms": float(header.get("shift_ms", 10.0)),
            "dim": int(header["dim"]) if "dim" in header else None,
        }
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None


def load_external_embeddings(path) -> EmbeddingSequence:
    """Read an embeddings file written by this toolkit or an external extractor."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = _parse_header(lines[0], path)
    centers, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        try:
            centers.append(int(fields[0]))
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value") from None
        expected = header["dim"] if header["dim"] is not None else len(rows[0])
        if len(rows[-1]) != expected:
            raise FormatError(f"{path}:{lineno}: row has dim {len(rows[-1])}, expected {expected}")
    if not rows:
        raise EmptyInputError(f"{path}: no embeddings")
    if any(b <= a for a, b in zip(centers, centers[1:])):
        raise FormatError(f"{path}: center frames are not strictly increasing")
    return EmbeddingSequence(np.array(rows), np.array(centers), header["n"], header["shift"], header["shift_ms"])


def write_feature_matrix(path, feats: FeatureMatrix, index_map: Optional[np.ndarray] = None) -> None:
    """Dump features in the embeddings format (one row per frame, n=1)."""
    frames = np.arange(feats.num_rows) if index_map is None else np.asarray(index_map)
    with open(path, "w") as fh:
        fh.write(f"{HEADER_TAG} {FORMAT_VERSION} n=1 shift=1 shift_ms={feats.shift_ms:g} dim={feats.dim}\n")
        for frame, row in zip(frames, feats.values):
            fh.write(f"{frame} " + " ".join(repr(float(v)) for v in row) + "\n")
