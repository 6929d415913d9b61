"""Independent reference implementations used to cross-check the package.

Nothing here imports scoring code from ``langdiar``; only the Annotation
data model is shared.
"""

from itertools import combinations, permutations

import numpy as np

from langdiar.annot import Annotation, Turn

STEP = 0.001


def random_annotation(rng, uid="u", num_labels=None, num_turns=None, max_end=60.0, prefix="L", grid=None):
    """Random speech turns; turns of one label never overlap, different labels may.

    With ``grid`` (seconds) every boundary is snapped to that grid, as RTTM
    serialization does at 1 ms.
    """
    num_labels = num_labels or int(rng.integers(2, 5))
    num_turns = num_turns or int(rng.integers(5, 21))
    owner = rng.integers(0, num_labels, size=num_turns)
    owner[:num_labels] = np.arange(num_labels)  # every label used at least once
    turns = []
    for lab in range(num_labels):
        k = int(np.sum(owner == lab))
        cuts = np.sort(rng.uniform(0, max_end, size=2 * k))
        if grid:
            cuts = np.round(cuts / grid) * grid
        for a, b in zip(cuts[0::2], cuts[1::2]):
            if b - a > 1e-3 - 1e-9:
                turns.append(Turn(float(a), float(b - a), f"{prefix}{lab}", uid))
    return Annotation(uid, turns)


def paint(ann: Annotation, n_frames: int):
    """Boolean activity per label at 1 ms frame centers."""
    centers = (np.arange(n_frames) + 0.5) * STEP
    out = {}
    for t in ann.speech_turns():
        act = out.setdefault(t.label, np.zeros(n_frames, dtype=bool))
        act |= (centers >= t.onset) & (centers < t.end)
    return out


def brute_force_assignment(weights):
    """Best total over all injective row->column maps (rows <= cols or transposed)."""
    w = np.asarray(weights, dtype=float)
    if w.shape[0] > w.shape[1]:
        w = w.T
    r, c = w.shape
    best = -np.inf
    for perm in permutations(range(c), r):
        best = max(best, sum(w[i, perm[i]] for i in range(r)))
    return best


def _best_map(r_act, h_act):
    r_labels, h_labels = sorted(r_act), sorted(h_act)
    best, best_map = (-1, -1.0), {}
    n = min(len(r_labels), len(h_labels))
    for rs in combinations(r_labels, n):
        for hs in permutations(h_labels, n):
            # most overlapping frames first, then the largest summed Jaccard index
            total = sum(int(np.sum(r_act[r] & h_act[h])) for r, h in zip(rs, hs))
            jac = sum(np.sum(r_act[r] & h_act[h]) / np.sum(r_act[r] | h_act[h]) for r, h in zip(rs, hs))
            if (total, jac) > best:
                best, best_map = (total, jac), dict(zip(rs, hs))
    return {r: h for r, h in best_map.items() if np.any(r_act[r] & h_act[h])}


def frame_der_jer(ref: Annotation, hyp: Annotation):
    """DER and JER (percent) by painting 1 ms frames."""
    n = int(np.ceil(max(ref.end, hyp.end) / STEP)) + 1
    r_act, h_act = paint(ref, n), paint(hyp, n)
    mapping = _best_map(r_act, h_act)
    zero = np.zeros(n, dtype=int)
    n_ref = sum((a.astype(int) for a in r_act.values()), zero)
    n_hyp = sum((a.astype(int) for a in h_act.values()), zero)
    correct = sum(((r_act[r] & h_act[h]).astype(int) for r, h in mapping.items()), zero)
    miss = np.maximum(n_ref - n_hyp, 0).sum()
    fa = np.maximum(n_hyp - n_ref, 0).sum()
    conf = (np.minimum(n_ref, n_hyp) - correct).sum()
    der = 100.0 * (miss + fa + conf) / n_ref.sum()
    errs = []
    for r, act in r_act.items():
        if r not in mapping:
            errs.append(100.0)
            continue
        h = h_act[mapping[r]]
        errs.append(100.0 * (1 - np.sum(act & h) / np.sum(act | h)))
    return der, float(np.mean(errs))


def delta_by_hand(x, window):
    """Regression delta with clamped indices, one element at a time."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.zeros_like(x)
    denom = 2 * sum(k * k for k in range(1, window + 1))
    for t in range(n):
        acc = 0.0
        for k in range(1, window + 1):
            acc += k * (x[min(t + k, n - 1)] - x[max(t - k, 0)])
        out[t] = acc / denom
    return out


def eer_exhaustive(scores, labels):
    """EER by scanning every midpoint threshold and interpolating the FA/FR crossing."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    cand = np.concatenate([[-np.inf], np.sort(scores), [np.inf]])
    pts = []
    for t in cand:
        fa = np.mean(scores[~labels] >= t)
        fr = np.mean(scores[labels] < t)
        pts.append((fa, fr))
    for (fa0, fr0), (fa1, fr1) in zip(pts, pts[1:]):
        d0, d1 = fa0 - fr0, fa1 - fr1
        if d0 >= 0 >= d1:
            if d0 == d1:
                return 100 * (fa0 + fr0) / 2
            w = d0 / (d0 - d1)
            return 100 * (fa0 + w * (fa1 - fa0))
    raise AssertionError("no crossing")
