"""Diarization pipelines: change-point based, fixed-window clustering, and
label-sequence ingestion for end-to-end classifiers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .annot import SILENCE, Annotation, Turn, annotation_from_frame_labels
from .audio import AudioBuffer, frame_signal
from .changepoint import LANGUAGE_PARAMS, ChangePointParams, detect_change_rows
from .embed import EmbeddingSequence, sliding_embeddings, stats_embedding
from .errors import ConfigError, EmptyInputError, FormatError, ParseError, ShapeError, TooShortError
from .features import FeatureMatrix, MfccConfig, extract_features, select_voiced
from .score import CosineScorer, PldaModel, PldaScorer, default_centering, score_matrix
from .vad import DEFAULT_VAD_RATIO, VoicedMask, energy_vad, short_term_energy

logger = logging.getLogger(__name__)

LABELS_HEADER_TAG = "#DIAR-LAB"
SILENCE_TOKENS = frozenset({"sil", "SIL", "Sil", "<sil>", "silence"})
DEFAULT_LABEL_VOCAB = ("P", "S")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def ahc(similarity, k: int = 2) -> ClusterAssignment:
    """Average-linkage agglomerative clustering down to ``k`` clusters.

    At each step the pair of clusters with the highest mean pairwise
    similarity is merged; ties go to the lexicographically smallest pair of
    cluster ids, where a cluster's id is its smallest member index. Output
    cluster ids are numbered in order of first appearance.
    """
    sim = np.asarray(similarity, dtype=np.float64)
    n = sim.shape[0]
    if sim.shape != (n, n):
        raise ShapeError("similarity matrix must be square")
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity matrix must be finite")
    if k < 1:
        raise ConfigError("k must be >= 1")
    if n < k:
        raise ConfigError(f"cannot form {k} clusters from {n} items")

    total = sim.copy()  # summed similarity between clusters
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    owner = np.arange(n)

    def avg_row(i):
        row = total[i] / (size[i] * size)
        row[~active] = -np.inf
        row[i] = -np.inf
        return row

    best = np.zeros(n, dtype=int)
    best_val = np.full(n, -np.inf)
    for i in range(n):
        row = avg_row(i)
        best[i] = int(np.argmax(row))
        best_val[i] = row[best[i]]

    for _ in range(n - k):
        vals = np.where(active, best_val, -np.inf)
        i = int(np.argmax(vals))
        j = int(best[i])
        i, j = min(i, j), max(i, j)
        # fold j into i
        total[i] += total[j]
        total[:, i] += total[:, j]
        total[i, i] = 0.0
        size[i] += size[j]
        active[j] = False
        best_val[j] = -np.inf
        owner[owner == j] = i

        row_i = avg_row(i)
        best[i] = int(np.argmax(row_i))
        best_val[i] = row_i[best[i]]
        others = active.copy()
        others[i] = False
        stale = others & ((best == i) | (best == j))
        fresh = others & ~stale
        better = fresh & ((row_i > best_val) | ((row_i == best_val) & (i < best)))
        best[better] = i
        best_val[better] = row_i[better]
        for m in np.flatnonzero(stale):
            row = avg_row(m)
            best[m] = int(np.argmax(row))
            best_val[m] = row[best[m]]

    _, first_seen = np.unique(owner, return_index=True)
    order = np.argsort(first_seen)
    roots = np.unique(owner)[order]
    remap = {int(r): c for c, r in enumerate(roots)}
    return ClusterAssignment(np.array([remap[int(o)] for o in owner]), len(roots))


def _resolve_scorer(scorer=None, plda: Optional[PldaModel] = None):
    if plda is not None:
        return PldaScorer(plda)
    return scorer if scorer is not None else CosineScorer()


@dataclass(frozen=True)
class FrontEnd:
    """VAD mask plus voiced feature rows for one utterance."""

    mask: VoicedMask
    voiced: FeatureMatrix
    index_map: np.ndarray
    num_frames: int
    duration: float
    shift_ms: float


def front_end(
    audio: AudioBuffer,
    frame_len_ms: float = 20.0,
    shift_ms: float = 10.0,
    vad_ratio: float = DEFAULT_VAD_RATIO,
    mfcc_cfg: MfccConfig = MfccConfig(),
) -> FrontEnd:
    frames = frame_signal(audio, frame_len_ms, shift_ms)
    mask = energy_vad(short_term_energy(frames), vad_ratio, shift_ms)
    feats = extract_features(frames, mfcc_cfg)
    voiced, index_map = select_voiced(feats, mask)
    return FrontEnd(mask, voiced, index_map, frames.num_frames, audio.duration, shift_ms)


def _cluster_names(k: int) -> List[str]:
    return [f"L{c}" for c in range(k)]


def _rows_to_annotation(fe: FrontEnd, row_labels: Sequence[str], utterance_id: str) -> Annotation:
    labels: List[Optional[str]] = [None] * fe.num_frames
    for frame, lab in zip(fe.index_map, row_labels):
        labels[frame] = lab
    return annotation_from_frame_labels(labels, fe.shift_ms, utterance_id, fe.duration)


def _silence_only(audio: AudioBuffer) -> Annotation:
    logger.warning("%s: no voiced frames, emitting a silence-only annotation", audio.id or "<audio>")
    return Annotation(audio.id, [Turn(0.0, audio.duration, SILENCE, audio.id)])


def segment_windows(bounds: Sequence[int], n: int) -> List[slice]:
    """Rows used to embed each segment: ``n`` rows centered on its midpoint.

    ``bounds`` are consecutive segment edges in voiced-row space. Segments
    shorter than ``n`` use all of their rows.
    """
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo <= n:
            out.append(slice(lo, hi))
            continue
        start = (lo + hi) // 2 - n // 2
        start = min(max(start, lo), hi - n)
        out.append(slice(start, start + n))
    return out


def changepoint_diarize(
    audio: AudioBuffer,
    params: ChangePointParams = LANGUAGE_PARAMS,
    scorer=None,
    plda: Optional[PldaModel] = None,
    num_clusters: int = 2,
    vad_ratio: float = DEFAULT_VAD_RATIO,
    frame_len_ms: float = 20.0,
    shift_ms: float = 10.0,
    mfcc_cfg: MfccConfig = MfccConfig(),
    center: Optional[bool] = None,
) -> Annotation:
    """Change detection, one embedding per segment, AHC, RTTM-ready turns.

    Unvoiced frames become ``sil`` turns; speech turns are labeled ``L0``,
    ``L1``, ... by cluster. ``center`` as in :func:`change_contours`; segment
    embeddings are centered with the mean sliding-window embedding.
    """
    scorer = _resolve_scorer(scorer, plda)
    if center is None:
        center = default_centering(scorer)
    fe = front_end(audio, frame_len_ms, shift_ms, vad_ratio, mfcc_cfg)
    rows = fe.voiced.num_rows
    if rows == 0:
        return _silence_only(audio)
    try:
        changes = detect_change_rows(fe.voiced.values, params, scorer, center)
    except TooShortError as exc:
        logger.info("%s: %s; treating as a single segment", audio.id, exc)
        changes = []
    bounds = [0] + [c for c in changes if 0 < c < rows] + [rows]
    windows = segment_windows(bounds, params.n)
    embeds = np.stack([_embed_rows(fe.voiced.values[w]) for w in windows])
    if center and len(windows) > 1:
        embeds -= _mean_window_embedding(fe.voiced, params.n)
    k = min(num_clusters, len(windows))
    assign = ahc(score_matrix(scorer, embeds), k)
    names = _cluster_names(assign.k)
    row_labels = np.empty(rows, dtype=object)
    for seg, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        row_labels[lo:hi] = names[assign.labels[seg]]
    return _rows_to_annotation(fe, row_labels, audio.id)


def _mean_window_embedding(feats: FeatureMatrix, n: int) -> np.ndarray:
    if feats.num_rows < 2:
        return np.zeros(2 * feats.dim)
    return sliding_embeddings(feats, min(n, feats.num_rows)).vectors.mean(axis=0)


def _embed_rows(rows: np.ndarray) -> np.ndarray:
    if len(rows) < 2:
        rows = np.vstack([rows, rows])
    return stats_embedding(rows)


def nearest_window(centers: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each position; ties go to the earlier window."""
    centers = np.asarray(centers, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    right = np.clip(np.searchsorted(centers, positions, side="left"), 0, len(centers) - 1)
    left = np.clip(right - 1, 0, len(centers) - 1)
    use_left = np.abs(positions - centers[left]) <= np.abs(centers[right] - positions)
    return np.where(use_left, left, right)


def cluster_frame_labels(seq: EmbeddingSequence, positions, scorer=None, num_clusters: int = 2) -> List[str]:
    """Cluster window embeddings and label each position by its nearest window."""
    scorer = scorer or CosineScorer()
    k = min(num_clusters, len(seq))
    assign = ahc(score_matrix(scorer, seq.vectors), k)
    names = _cluster_names(assign.k)
    idx = nearest_window(seq.centers, positions)
    return [names[assign.labels[i]] for i in idx]


def uniform_diarize(
    audio: AudioBuffer,
    n: int = 200,
    shift: int = 1,
    scorer=None,
    plda: Optional[PldaModel] = None,
    num_clusters: int = 2,
    vad_ratio: float = DEFAULT_VAD_RATIO,
    frame_len_ms: float = 20.0,
    shift_ms: float = 10.0,
    mfcc_cfg: MfccConfig = MfccConfig(),
    embeddings: Optional[EmbeddingSequence] = None,
    center: Optional[bool] = None,
) -> Annotation:
    """Fixed-length sliding windows clustered with AHC; no temporal smoothing.

    Every voiced frame takes the cluster of the window whose center is
    nearest. ``embeddings`` replaces the built-in extractor; its centers
    must be original frame indices.
    """
    scorer = _resolve_scorer(scorer, plda)
    if center is None:
        center = default_centering(scorer)
    fe = front_end(audio, frame_len_ms, shift_ms, vad_ratio, mfcc_cfg)
    rows = fe.voiced.num_rows
    if rows == 0:
        return _silence_only(audio)
    if embeddings is None:
        win = min(n, rows)
        if win < 2:
            raise TooShortError(f"{audio.id}: only {rows} voiced frame(s)")
        seq = sliding_embeddings(fe.voiced, win, shift)
        positions = np.arange(rows)
    else:
        seq = embeddings
        positions = fe.index_map
    if center and len(seq) > 1:
        seq = EmbeddingSequence(seq.vectors - seq.vectors.mean(axis=0), seq.centers, seq.n, seq.shift, seq.shift_ms)
    row_labels = cluster_frame_labels(seq, positions, scorer, num_clusters)
    return _rows_to_annotation(fe, row_labels, audio.id)


# -- end-to-end label sequences ---------------------------------------------

@dataclass(frozen=True)
class LabelSequence:
    labels: List[str]
    step_ms: float = 200.0

    def __post_init__(self):
        if not self.step_ms > 0:
            raise ConfigError("step_ms must be > 0")


def labels_to_annotation(
    seq: LabelSequence,
    utterance_id: str = "",
    vocab: Iterable[str] = DEFAULT_LABEL_VOCAB,
) -> Annotation:
    """Maximal runs of equal labels become turns; silence tokens become ``sil``."""
    if not seq.labels:
        raise EmptyInputError("empty label sequence")
    allowed = set(vocab)
    norm = []
    for lab in seq.labels:
        if lab in SILENCE_TOKENS:
            norm.append(None)
        elif lab in allowed:
            norm.append(lab)
        else:
            raise FormatError(f"unknown label {lab!r} (expected one of {sorted(allowed)} or 'sil')")
    return annotation_from_frame_labels(norm, seq.step_ms, utterance_id)


def annotation_to_labels(ann: Annotation, step_ms: float = 200.0, total_duration: Optional[float] = None) -> LabelSequence:
    """Sample an annotation at step centers (inverse of :func:`labels_to_annotation`)."""
    end = ann.end if total_duration is None else total_duration
    steps = int(round(end * 1000.0 / step_ms))
    centers = (np.arange(steps) + 0.5) * step_ms / 1000.0
    return LabelSequence(ann.label_at(centers), step_ms)


def read_label_file(path) -> LabelSequence:
    """Read ``#DIAR-LAB v1 step_ms=200`` followed by one label per line."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith(LABELS_HEADER_TAG):
        raise ParseError(f"missing '{LABELS_HEADER_TAG}' header", 1, path)
    header = lines[0].split()
    if len(header) < 2 or header[1] != "v1":
        raise ParseError("unsupported label file version", 1, path)
    step_ms = 200.0
    for item in header[2:]:
        key, _, value = item.partition("=")
        if key == "step_ms":
            try:
                step_ms = float(value)
            except ValueError:
                raise ParseError(f"bad step_ms {value!r}", 1, path) from None
    return LabelSequence(lines[1:], step_ms)


def write_label_file(path, seq: LabelSequence) -> None:
    with open(path, "w") as fh:
        fh.write(f"{LABELS_HEADER_TAG} v1 step_ms={seq.step_ms:g}\n")
        for lab in seq.labels:
            fh.write(f"{lab}\n")
