"""MFCC extraction, delta features and voiced-frame selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .audio import FrameSet
from .errors import ConfigError, EmptyInputError, ShapeError
from .vad import VoicedMask


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    shift_ms: float = 10.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.num_rows


@dataclass(frozen=True)
class MfccConfig:
    num_ceps: int = 13
    num_mel_filters: int = 26
    fft_size: Optional[int] = None  # next power of two >= frame length
    low_hz: float = 0.0
    high_hz: Optional[float] = None  # Nyquist
    delta_window: int = 2
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def resolve(self, samples_per_frame: int, sample_rate: int) -> "MfccConfig":
        """Fill in data-dependent defaults and validate."""
        fft_size = self.fft_size
        if fft_size is None:
            fft_size = 1 << max(0, int(samples_per_frame - 1).bit_length())
        if fft_size < samples_per_frame or fft_size & (fft_size - 1):
            raise ConfigError(f"fft_size {fft_size} must be a power of two >= frame length {samples_per_frame}")
        high = sample_rate / 2.0 if self.high_hz is None else float(self.high_hz)
        if not (0 <= self.low_hz < high <= sample_rate / 2.0):
            raise ConfigError(f"need 0 <= low_hz < high_hz <= {sample_rate / 2}, got {self.low_hz}, {high}")
        if not (1 <= self.num_ceps <= self.num_mel_filters):
            raise ConfigError("need 1 <= num_ceps <= num_mel_filters")
        return MfccConfig(
            self.num_ceps, self.num_mel_filters, fft_size, self.low_hz, high,
            self.delta_window, self.pre_emphasis, self.log_floor,
        )


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=float) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, fft_size: int, sample_rate: int, low_hz: float, high_hz: float) -> np.ndarray:
    """Triangular mel filters, shape ``(num_filters, fft_size // 2 + 1)``.

    Filter edges are placed on the continuous frequency axis rather than
    snapped to FFT bins, so narrow low-frequency filters never collapse to
    zero width.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_filters + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis; row ``k`` is the k-th cosine."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] /= np.sqrt(2.0)
    return basis


def mfcc(frames: FrameSet, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """Static cepstra (c0 included), ``cfg.num_ceps`` columns.

    Per frame: pre-emphasis, Hamming window, magnitude spectrum, mel
    filterbank, log with floor, orthonormal DCT-II.
    """
    if frames.num_frames == 0:
        raise EmptyInputError("no frames")
    size = frames.samples_per_frame
    cfg = cfg.resolve(size, frames.sample_rate)

    x = frames.frames
    if cfg.pre_emphasis:
        x = np.concatenate([x[:, :1], x[:, 1:] - cfg.pre_emphasis * x[:, :-1]], axis=1)
    x = x * np.hamming(size)
    spectrum = np.abs(np.fft.rfft(x, n=cfg.fft_size, axis=1))
    fbank = mel_filterbank(cfg.num_mel_filters, cfg.fft_size, frames.sample_rate, cfg.low_hz, cfg.high_hz)
    log_energies = np.log(np.maximum(spectrum @ fbank.T, cfg.log_floor))
    ceps = log_energies @ dct_matrix(cfg.num_mel_filters)[: cfg.num_ceps].T
    return FeatureMatrix(ceps, frames.shift_ms)


def _delta(values: np.ndarray, window: int) -> np.ndarray:
    n = values.shape[0]
    padded = np.concatenate([np.repeat(values[:1], window, axis=0), values, np.repeat(values[-1:], window, axis=0)])
    out = np.zeros_like(values)
    for k in range(1, window + 1):
        out += k * (padded[window + k : window + k + n] - padded[window - k : window - k + n])
    return out / (2.0 * sum(k * k for k in range(1, window + 1)))


def add_deltas(feats: FeatureMatrix, window: int = 2) -> FeatureMatrix:
    """Append first and second order regression deltas (edges replicated)."""
    if feats.num_rows < 1:
        raise EmptyInputError("no feature rows")
    if window < 1:
        raise ConfigError("delta window must be >= 1")
    d1 = _delta(feats.values, window)
    d2 = _delta(d1, window)
    return FeatureMatrix(np.hstack([feats.values, d1, d2]), feats.shift_ms)


def select_voiced(feats: FeatureMatrix, mask: VoicedMask) -> Tuple[FeatureMatrix, np.ndarray]:
    """Keep voiced rows.

    Returns:
        The reduced matrix and an index map: entry ``j`` is the original
        frame index of voiced row ``j``.
    """
    flags = np.asarray(mask.flags if isinstance(mask, VoicedMask) else mask, dtype=bool)
    if flags.shape[0] != feats.num_rows:
        raise ShapeError(f"mask has {flags.shape[0]} entries for {feats.num_rows} feature rows")
    index_map = np.flatnonzero(flags)
    return FeatureMatrix(feats.values[index_map], feats.shift_ms), index_map


def extract_features(frames: FrameSet, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """Static + delta + delta-delta MFCCs (39 columns at the defaults)."""
    return add_deltas(mfcc(frames, cfg), cfg.delta_window)
