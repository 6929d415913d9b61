"""Audio ingestion and frame decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import EmptyInputError, FormatError, TooShortError, UnsupportedChannelError


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedChannelError("AudioBuffer holds mono audio only")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameSet:
    """Overlapping analysis frames cut from an AudioBuffer.

    Row ``i`` covers samples ``[i * shift, i * shift + samples_per_frame)``.
    """

    frames: np.ndarray
    frame_len_ms: float
    shift_ms: float
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def samples_per_frame(self) -> int:
        return self.frames.shape[1]

    @property
    def shift_samples(self) -> int:
        return samples_for_ms(self.shift_ms, self.sample_rate)

    def start_times(self) -> np.ndarray:
        """Frame start times in seconds."""
        return np.arange(self.num_frames) * self.shift_ms / 1000.0


def samples_for_ms(ms: float, sample_rate: int) -> int:
    return int(round(ms * sample_rate / 1000.0))


def read_wav(path) -> AudioBuffer:
    """Read a mono PCM WAV file into an AudioBuffer normalized to [-1, 1].

    8-bit (unsigned), 16/32-bit signed integer and 32/64-bit float files are
    accepted. Integer data is divided by the symmetric full-scale value
    (``2**(bits-1)``), so 16-bit 32767 becomes 32767/32768.
    """
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise FormatError(f"{path}: not a readable PCM WAV file ({exc})") from exc

    if data.ndim > 1:
        if data.shape[1] != 1:
            raise UnsupportedChannelError(f"{path}: {data.shape[1]} channels, only mono is supported")
        data = data[:, 0]
    if data.size == 0:
        raise EmptyInputError(f"{path}: empty data chunk")

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")

    stem = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    if stem.lower().endswith(".wav"):
        stem = stem[:-4]
    return AudioBuffer(samples, int(rate), stem)


def write_wav(path, audio: AudioBuffer) -> None:
    """Write 16-bit PCM. Values outside [-1, 1) are clipped."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    wavfile.write(path, audio.sample_rate, pcm)


def frame_signal(audio: AudioBuffer, frame_len_ms: float = 20.0, shift_ms: float = 10.0) -> FrameSet:
    """Cut ``audio`` into overlapping frames; a trailing partial frame is dropped."""
    if not (frame_len_ms >= shift_ms > 0):
        raise ValueError(f"need frame_len_ms >= shift_ms > 0, got {frame_len_ms}/{shift_ms}")
    size = samples_for_ms(frame_len_ms, audio.sample_rate)
    hop = samples_for_ms(shift_ms, audio.sample_rate)
    if hop < 1:
        raise ValueError(f"shift of {shift_ms} ms is below one sample")
    n = len(audio.samples)
    if n < size:
        raise TooShortError(f"{n} samples is shorter than one {size}-sample frame")
    num = (n - size) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(audio.samples, size)[::hop][:num]
    return FrameSet(np.ascontiguousarray(view), float(frame_len_ms), float(shift_ms), audio.sample_rate)
