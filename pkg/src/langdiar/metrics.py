"""Diarization scoring: optimal label mapping, DER, JER, frame accuracy and
confusion, EER, plus corpus-level aggregation.

Speech classes are the non-``sil`` labels. Hypothesis labels are mapped to
reference labels by the one-to-one assignment that maximizes total overlap,
and the same mapping is shared by DER, JER and the frame scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .annot import SILENCE, Annotation
from .errors import ShapeError, UndefinedMetricError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelMapping:
    mapping: Dict[str, str]  # reference label -> hypothesis label
    total: float

    def inverse(self) -> Dict[str, str]:
        return {h: r for r, h in self.mapping.items()}


@dataclass(frozen=True)
class DerReport:
    miss: float
    false_alarm: float
    confusion: float
    total_ref_speech: float

    @property
    def der(self) -> float:
        if self.total_ref_speech <= 0:
            raise UndefinedMetricError("no reference speech")
        return 100.0 * (self.miss + self.false_alarm + self.confusion) / self.total_ref_speech

    def __add__(self, other: "DerReport") -> "DerReport":
        return DerReport(
            self.miss + other.miss,
            self.false_alarm + other.false_alarm,
            self.confusion + other.confusion,
            self.total_ref_speech + other.total_ref_speech,
        )


@dataclass(frozen=True)
class JerReport:
    per_label: Dict[str, float]

    @property
    def jer(self) -> float:
        return float(np.mean(list(self.per_label.values())))


def _speech_intervals(ann: Annotation) -> Dict[str, np.ndarray]:
    out: Dict[str, list] = {}
    for t in ann.turns:
        if t.is_speech:
            out.setdefault(t.label, []).append((t.onset, t.end))
    return {k: np.array(v, dtype=np.float64) for k, v in out.items()}


def _intersection(a: np.ndarray, b: np.ndarray) -> float:
    """Total intersection length of two interval lists."""
    if len(a) == 0 or len(b) == 0:
        return 0.0
    lo = np.maximum(a[:, None, 0], b[None, :, 0])
    hi = np.minimum(a[:, None, 1], b[None, :, 1])
    return float(np.sum(np.maximum(hi - lo, 0.0)))


def _total(a: np.ndarray) -> float:
    return float(np.sum(a[:, 1] - a[:, 0])) if len(a) else 0.0


def overlap_matrix(ref: Annotation, hyp: Annotation) -> Tuple[List[str], List[str], np.ndarray]:
    """Reference-label x hypothesis-label overlap durations (seconds)."""
    r_int, h_int = _speech_intervals(ref), _speech_intervals(hyp)
    r_labels, h_labels = sorted(r_int), sorted(h_int)
    m = np.zeros((len(r_labels), len(h_labels)))
    for i, r in enumerate(r_labels):
        for j, h in enumerate(h_labels):
            m[i, j] = _intersection(r_int[r], h_int[h])
    return r_labels, h_labels, m


def max_weight_assignment(weights) -> Tuple[List[Tuple[int, int]], float]:
    """Maximum-total one-to-one assignment on a (possibly rectangular) matrix."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError("weight matrix must be 2-D")
    if w.size == 0:
        return [], 0.0
    rows, cols = linear_sum_assignment(w, maximize=True)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, float(w[rows, cols].sum())


# weight of the Jaccard tie-breaker, in seconds per unit of Jaccard index
_TIE_WEIGHT = 1e-5


def optimal_mapping(ref: Annotation, hyp: Annotation) -> LabelMapping:
    """Injective reference->hypothesis label map maximizing total overlap.

    Mappings whose overlap totals are tied (e.g. a reference label nested
    inside several hypothesis turns) are separated by the larger summed
    Jaccard index, which keeps JER well defined. Pairs with zero overlap
    are left unmapped.
    """
    r_labels, h_labels, m = overlap_matrix(ref, hyp)
    if m.size == 0:
        return LabelMapping({}, 0.0)
    r_int, h_int = _speech_intervals(ref), _speech_intervals(hyp)
    r_tot = np.array([_total(r_int[r]) for r in r_labels])
    h_tot = np.array([_total(h_int[h]) for h in h_labels])
    jaccard = m / (r_tot[:, None] + h_tot[None, :] - m)
    pairs, _ = max_weight_assignment(m + _TIE_WEIGHT * jaccard)
    mapping = {r_labels[i]: h_labels[j] for i, j in pairs if m[i, j] > 0}
    return LabelMapping(mapping, float(sum(m[i, j] for i, j in pairs)))


def _elementary_intervals(ref: Annotation, hyp: Annotation, extra=()):
    points = {0.0}
    for ann in (ref, hyp):
        for t in ann.speech_turns():
            points.update((t.onset, t.end))
    points.update(p for p in extra if p >= 0)
    edges = np.array(sorted(points))
    return edges[:-1], edges[1:]


def _active(intervals: Dict[str, np.ndarray], mids: np.ndarray) -> Dict[str, np.ndarray]:
    out = {}
    for label, iv in intervals.items():
        out[label] = np.any((mids[:, None] >= iv[None, :, 0]) & (mids[:, None] < iv[None, :, 1]), axis=1)
    return out


def der(ref: Annotation, hyp: Annotation, collar: float = 0.0, mapping: Optional[LabelMapping] = None) -> DerReport:
    """Diarization error components in seconds.

    A band of ``collar`` seconds on each side of every reference speech
    boundary is left out of scoring.
    """
    if collar < 0:
        raise ValueError("collar must be >= 0")
    mapping = mapping or optimal_mapping(ref, hyp)
    inverse = mapping.inverse()
    r_int, h_int = _speech_intervals(ref), _speech_intervals(hyp)

    bounds = sorted({x for t in ref.speech_turns() for x in (t.onset, t.end)})
    extra = [b + s * collar for b in bounds for s in (-1, 1)] if collar > 0 else []
    lo, hi = _elementary_intervals(ref, hyp, extra)
    if len(lo) == 0:
        return _check_total(DerReport(0.0, 0.0, 0.0, 0.0))
    dur = hi - lo
    mids = (lo + hi) / 2
    if collar > 0 and bounds:
        b = np.array(bounds)
        near = np.any(np.abs(mids[:, None] - b[None, :]) < collar, axis=1)
        dur = np.where(near, 0.0, dur)

    r_act, h_act = _active(r_int, mids), _active(h_int, mids)
    n_ref = sum(r_act.values(), np.zeros(len(mids), dtype=int))
    n_hyp = sum(h_act.values(), np.zeros(len(mids), dtype=int))
    correct = np.zeros(len(mids), dtype=int)
    for h, act in h_act.items():
        r = inverse.get(h)
        if r is not None and r in r_act:
            correct += act & r_act[r]
    report = DerReport(
        miss=float(np.sum(dur * np.maximum(n_ref - n_hyp, 0))),
        false_alarm=float(np.sum(dur * np.maximum(n_hyp - n_ref, 0))),
        confusion=float(np.sum(dur * (np.minimum(n_ref, n_hyp) - correct))),
        total_ref_speech=float(np.sum(dur * n_ref)),
    )
    return _check_total(report)


def _check_total(report: DerReport) -> DerReport:
    if report.total_ref_speech <= 0:
        raise UndefinedMetricError("reference contains no scored speech; DER is undefined")
    return report


def jer(ref: Annotation, hyp: Annotation, mapping: Optional[LabelMapping] = None) -> JerReport:
    """Jaccard error per reference label (100 for unmapped labels) and their mean."""
    r_int, h_int = _speech_intervals(ref), _speech_intervals(hyp)
    if not r_int:
        raise UndefinedMetricError("reference contains no speech; JER is undefined")
    mapping = mapping or optimal_mapping(ref, hyp)
    per = {}
    for r, iv in r_int.items():
        h = mapping.mapping.get(r)
        if h is None:
            per[r] = 100.0
            continue
        inter = _intersection(iv, h_int[h])
        union = _total(iv) + _total(h_int[h]) - inter
        per[r] = 100.0 * (1.0 - inter / union)
    return JerReport(per)


@dataclass(frozen=True)
class FrameScores:
    """Frame-level comparison. ``counts[i, j]``: frames of reference class
    ``ref_classes[i]`` labeled ``classes[j]`` by the (mapped) hypothesis."""

    ref_classes: List[str]
    classes: List[str]
    counts: np.ndarray

    @property
    def num_frames(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        correct = sum(self.counts[i, self.classes.index(c)] for i, c in enumerate(self.ref_classes))
        return 100.0 * correct / self.num_frames if self.num_frames else float("nan")

    @property
    def fer(self) -> float:
        return 100.0 - self.accuracy

    @property
    def confusion(self) -> np.ndarray:
        """Row-normalized percentages; rows without frames are NaN."""
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, 100.0 * self.counts / np.where(rows > 0, rows, 1), np.nan)

    def __add__(self, other: "FrameScores") -> "FrameScores":
        ref_classes = list(dict.fromkeys(self.ref_classes + other.ref_classes))
        classes = list(dict.fromkeys(ref_classes + self.classes + other.classes))
        counts = np.zeros((len(ref_classes), len(classes)), dtype=np.int64)
        for fs in (self, other):
            for i, r in enumerate(fs.ref_classes):
                for j, c in enumerate(fs.classes):
                    counts[ref_classes.index(r), classes.index(c)] += fs.counts[i, j]
        return FrameScores(ref_classes, classes, counts)


def frame_scores(
    ref: Annotation,
    hyp: Annotation,
    step_ms: float = 10.0,
    mapping: Optional[LabelMapping] = None,
    end: Optional[float] = None,
) -> FrameScores:
    """Compare labels sampled at the centers of ``step_ms`` steps.

    Silence is an explicit class. Hypothesis labels are renamed to their
    mapped reference label; unmapped ones keep their name prefixed ``hyp:``.
    """
    if not step_ms > 0:
        raise ValueError("step_ms must be > 0")
    mapping = mapping or optimal_mapping(ref, hyp)
    inverse = mapping.inverse()
    end = max(ref.end, hyp.end) if end is None else end
    steps = int(np.floor(end * 1000.0 / step_ms + 1e-9))
    centers = (np.arange(steps) + 0.5) * step_ms / 1000.0
    r_lab = ref.label_at(centers)
    h_lab = [lab if lab == SILENCE else inverse.get(lab, f"hyp:{lab}") for lab in hyp.label_at(centers)]

    ref_classes = ref.labels() + [SILENCE]
    extra = sorted({lab for lab in h_lab if lab not in ref_classes})
    classes = ref_classes + extra
    col = {c: j for j, c in enumerate(classes)}
    row = {c: i for i, c in enumerate(ref_classes)}
    counts = np.zeros((len(ref_classes), len(classes)), dtype=np.int64)
    np.add.at(counts, ([row[r] for r in r_lab], [col[h] for h in h_lab]), 1)
    return FrameScores(ref_classes, classes, counts)


def eer(scores, labels) -> float:
    """Equal error rate in percent.

    ``labels`` are 1 for target trials. A trial is accepted when its score
    is >= the threshold; the false-accept and false-reject curves are swept
    over all score values and interpolated linearly where they cross.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels differ in length")
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("EER needs both target and non-target trials")
    thresholds = np.append(np.unique(scores), np.inf)
    pos, neg = np.sort(scores[labels]), np.sort(scores[~labels])
    # accepted when score >= t
    fa = (n_neg - np.searchsorted(neg, thresholds, side="left")) / n_neg
    fr = np.searchsorted(pos, thresholds, side="left") / n_pos
    diff = fa - fr
    k = int(np.argmax(diff <= 0))  # fa decreases and fr increases along thresholds
    if k == 0 or diff[k] == 0:
        return 100.0 * float(fa[k] + fr[k]) / 2
    w = diff[k - 1] / (diff[k - 1] - diff[k])
    return 100.0 * float(fa[k - 1] + w * (fa[k] - fa[k - 1]))


def confusion_matrix(ref: Annotation, hyp: Annotation, step_ms: float = 10.0) -> Tuple[List[str], List[str], np.ndarray]:
    """Row-normalized percent confusion (rows: reference classes incl. ``sil``)."""
    fs = frame_scores(ref, hyp, step_ms)
    return fs.ref_classes, fs.classes, fs.confusion


# -- corpus level -------------------------------------------------------------

@dataclass
class UtteranceScore:
    utterance_id: str
    der: DerReport
    jer: JerReport
    frames: FrameScores


@dataclass
class DiarizationReport:
    utterances: List[UtteranceScore] = field(default_factory=list)
    eer: Optional[float] = None

    @property
    def totals(self) -> DerReport:
        total = DerReport(0.0, 0.0, 0.0, 0.0)
        for u in self.utterances:
            total = total + u.der
        return total

    @property
    def der(self) -> float:
        return self.totals.der

    @property
    def jer(self) -> float:
        """Mean of per-utterance JERs."""
        return float(np.mean([u.jer.jer for u in self.utterances]))

    @property
    def frames(self) -> FrameScores:
        acc = self.utterances[0].frames
        for u in self.utterances[1:]:
            acc = acc + u.frames
        return acc

    def key_values(self) -> List[str]:
        t = self.totals
        fs = self.frames
        lines = [
            f"DER={self.der:.3f}",
            f"JER={self.jer:.3f}",
            f"MISS={100 * t.miss / t.total_ref_speech:.3f}",
            f"FA={100 * t.false_alarm / t.total_ref_speech:.3f}",
            f"CONF={100 * t.confusion / t.total_ref_speech:.3f}",
            f"ACC={fs.accuracy:.3f}",
            f"FER={fs.fer:.3f}",
            f"UTTERANCES={len(self.utterances)}",
        ]
        if self.eer is not None:
            lines.append(f"EER={self.eer:.3f}")
        return lines

    def format_table(self) -> str:
        header = f"{'utterance':<20} {'DER%':>8} {'JER%':>8} {'miss(s)':>9} {'fa(s)':>9} {'conf(s)':>9} {'speech(s)':>10}"
        rows = [header, "-" * len(header)]
        for u in self.utterances:
            d = u.der
            rows.append(
                f"{u.utterance_id:<20} {d.der:8.2f} {u.jer.jer:8.2f} {d.miss:9.3f} {d.false_alarm:9.3f} "
                f"{d.confusion:9.3f} {d.total_ref_speech:10.3f}"
            )
        t = self.totals
        rows.append("-" * len(header))
        rows.append(
            f"{'*** OVERALL ***':<20} {self.der:8.2f} {self.jer:8.2f} {t.miss:9.3f} {t.false_alarm:9.3f} "
            f"{t.confusion:9.3f} {t.total_ref_speech:10.3f}"
        )
        fs = self.frames
        rows.append("")
        rows.append("confusion (% of reference frames)")
        rows.append(f"{'':<10}" + "".join(f"{c:>10}" for c in fs.classes))
        for name, line in zip(fs.ref_classes, fs.confusion):
            rows.append(f"{name:<10}" + "".join(f"{v:10.2f}" for v in line))
        return "\n".join(rows)


def score_corpus(
    refs: Mapping[str, Annotation],
    hyps: Mapping[str, Annotation],
    collar: float = 0.0,
    step_ms: float = 10.0,
) -> DiarizationReport:
    """Score every reference utterance; a missing hypothesis counts as all silence."""
    extra = sorted(set(hyps) - set(refs))
    if extra:
        logger.warning("ignoring %d hypothesis utterance(s) without reference: %s", len(extra), extra[:5])
    report = DiarizationReport()
    for uid in sorted(refs):
        ref = refs[uid]
        hyp = hyps.get(uid, Annotation(uid, []))
        mapping = optimal_mapping(ref, hyp)
        report.utterances.append(
            UtteranceScore(
                uid,
                der(ref, hyp, collar, mapping),
                jer(ref, hyp, mapping),
                frame_scores(ref, hyp, step_ms, mapping),
            )
        )
    if not report.utterances:
        raise UndefinedMetricError("no reference utterances to score")
    return report
