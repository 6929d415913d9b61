"""Pairwise embedding scoring: two-covariance PLDA and cosine similarity.

Higher scores mean "more likely the same class". PLDA scores are
log-likelihood ratios between the same-class and different-class
hypotheses under the model

    x = mu + y + e,   y ~ N(0, B) (class),   e ~ N(0, W) (within class)
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClassError, FormatError, ShapeError

PLDA_MAGIC = b"DIAR-PLDA1"
RIDGE = 1e-6
STRONG_RIDGE = 1e-3


@dataclass(frozen=True)
class PldaModel:
    mu: np.ndarray
    between: np.ndarray
    within: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        b = np.asarray(self.between, dtype=np.float64)
        w = np.asarray(self.within, dtype=np.float64)
        d = mu.shape[0]
        if mu.ndim != 1 or b.shape != (d, d) or w.shape != (d, d):
            raise ShapeError("PLDA parameters must be mu (D,), B (D, D), W (D, D)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "between", (b + b.T) / 2)
        object.__setattr__(self, "within", (w + w.T) / 2)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def train_plda(embeddings, labels) -> PldaModel:
    """Closed-form two-covariance PLDA from labeled embeddings.

    ``mu`` is the global mean, ``W`` the pooled within-class covariance and
    ``B`` the covariance of the class means around ``mu`` (each class counted
    once). Both get a ridge of ``1e-6 * (tr B + tr W) / D``; when there are
    fewer samples than dimensions the ridge is raised to ``1e-3`` times that
    scale.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ShapeError("need an (n, D) embedding matrix and n labels")
    classes, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if len(classes) < 2:
        raise DegenerateClassError("PLDA training needs at least 2 classes")
    if np.any(counts < 2):
        raise DegenerateClassError(f"class {classes[np.argmin(counts)]!r} has fewer than 2 samples")
    n, d = x.shape

    mu = x.mean(axis=0)
    means = np.zeros((len(classes), d))
    np.add.at(means, inverse, x)
    means /= counts[:, None]
    resid = x - means[inverse]
    within = resid.T @ resid / n
    dev = means - mu
    between = dev.T @ dev / len(classes)

    scale = (np.trace(within) + np.trace(between)) / d
    if scale <= 0:
        scale = 1.0
    ridge = RIDGE
    if d > n:
        warnings.warn(f"PLDA: {d} dimensions but only {n} samples; using a stronger ridge", RuntimeWarning)
        ridge = STRONG_RIDGE
    eye = np.eye(d) * ridge * scale
    return PldaModel(mu, between + eye, within + eye)


@dataclass(frozen=True)
class _PldaForm:
    # LLR(a, b) = 0.5 a'Qa + 0.5 b'Qb + a'Pb + const, on mean-removed vectors
    q: np.ndarray
    p: np.ndarray
    const: float


def _quadratic_form(model: PldaModel) -> _PldaForm:
    b, w = model.between, model.within
    total = b + w
    total_inv = np.linalg.inv(total)
    # inverse of [[T, B], [B, T]] has diagonal block A = (T - B T^-1 B)^-1 ...
    a = np.linalg.inv(total - b @ total_inv @ b)
    # ... and off-diagonal block -T^-1 B A
    p = total_inv @ b @ a
    p = (p + p.T) / 2
    q = total_inv - a
    q = (q + q.T) / 2
    _, logdet_same = np.linalg.slogdet(np.block([[total, b], [b, total]]))
    _, logdet_total = np.linalg.slogdet(total)
    const = -0.5 * (logdet_same - 2 * logdet_total)
    return _PldaForm(q, p, const)


class PldaScorer:
    """Vectorized PLDA log-likelihood-ratio scorer for a fixed model."""

    def __init__(self, model: PldaModel, length_norm: bool = False):
        self.model = model
        self.length_norm = length_norm
        self._form = _quadratic_form(model)

    def _prep(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.model.dim:
            raise ShapeError(f"embedding dim {x.shape[1]} != model dim {self.model.dim}")
        if self.length_norm:
            x = length_normalize(x)
        return x - self.model.mu

    def __call__(self, a, b) -> float:
        return float(self.pairs(a, b)[0])

    def pairs(self, x, y) -> np.ndarray:
        """Row-wise scores ``s(x[i], y[i])``."""
        x, y = self._prep(x), self._prep(y)
        f = self._form
        return (
            0.5 * np.einsum("ij,jk,ik->i", x, f.q, x)
            + 0.5 * np.einsum("ij,jk,ik->i", y, f.q, y)
            + np.einsum("ij,jk,ik->i", x, f.p, y)
            + f.const
        )

    def matrix(self, x) -> np.ndarray:
        """All-pairs score matrix."""
        x = self._prep(x)
        f = self._form
        diag = 0.5 * np.einsum("ij,jk,ik->i", x, f.q, x)
        m = diag[:, None] + diag[None, :] + x @ f.p @ x.T + f.const
        return (m + m.T) / 2


def length_normalize(x, mu=None) -> np.ndarray:
    """Center (optionally) and rescale rows to norm sqrt(D)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if mu is not None:
        x = x - mu
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return x * np.sqrt(x.shape[1]) / norms


def plda_score(model: PldaModel, a, b) -> float:
    """Same-class vs different-class log-likelihood ratio of ``a`` and ``b``."""
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if a.shape != (model.dim,) or b.shape != (model.dim,):
        raise ShapeError(f"expected {model.dim}-dim embeddings, got {a.shape} and {b.shape}")
    return PldaScorer(model)(a, b)


def cosine_score(a, b) -> float:
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    b = np.asarray(getattr(b, "values", b), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


class CosineScorer:
    """Cosine similarity, vectorized."""

    @staticmethod
    def _unit(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("cosine similarity is undefined for a zero vector")
        return x / norms

    def __call__(self, a, b) -> float:
        return cosine_score(a, b)

    def pairs(self, x, y) -> np.ndarray:
        return np.clip(np.sum(self._unit(x) * self._unit(y), axis=1), -1.0, 1.0)

    def matrix(self, x) -> np.ndarray:
        u = self._unit(x)
        return np.clip(u @ u.T, -1.0, 1.0)


def default_centering(scorer) -> bool:
    """Whether pipelines should mean-center embeddings before ``scorer``.

    PLDA removes its own trained mean; other scorers (cosine) get the
    per-utterance mean embedding subtracted.
    """
    return not isinstance(scorer, PldaScorer)


def pair_scores(scorer, x, y) -> np.ndarray:
    """Row-wise scores for any scorer (vectorized when it provides ``pairs``)."""
    if hasattr(scorer, "pairs"):
        return np.asarray(scorer.pairs(x, y), dtype=np.float64)
    return np.array([scorer(a, b) for a, b in zip(x, y)], dtype=np.float64)


def score_matrix(scorer, x) -> np.ndarray:
    if hasattr(scorer, "matrix"):
        return np.asarray(scorer.matrix(x), dtype=np.float64)
    n = len(x)
    m = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            m[i, j] = m[j, i] = scorer(x[i], x[j])
    return m


def save_plda(path, model: PldaModel) -> None:
    """Binary layout: magic, uint64 D, then mu, B, W as little-endian float64 (row-major)."""
    with open(path, "wb") as fh:
        fh.write(PLDA_MAGIC)
        fh.write(struct.pack("<Q", model.dim))
        for arr in (model.mu, model.between, model.within):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_plda(path) -> PldaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(PLDA_MAGIC):
        raise FormatError(f"{path}: not a PLDA model file")
    offset = len(PLDA_MAGIC)
    if len(blob) < offset + 8:
        raise FormatError(f"{path}: truncated header")
    (d,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    expected = 8 * (d + 2 * d * d)
    if len(blob) - offset != expected:
        raise FormatError(f"{path}: expected {expected} payload bytes for D={d}, got {len(blob) - offset}")
    data = np.frombuffer(blob, dtype="<f8", offset=offset).astype(np.float64)
    return PldaModel(data[:d], data[d : d + d * d].reshape(d, d), data[d + d * d :].reshape(d, d))
