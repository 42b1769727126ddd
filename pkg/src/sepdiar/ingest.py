"""WAV input and sliding-window generation."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.io import wavfile

from .core import AudioWindow

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    """The file is a WAV but not one this engine accepts."""


@dataclass(frozen=True)
class AudioStream:
    """Mono 16 kHz audio exposed through pull-style ``read`` calls."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError("expected mono")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"unsupported sample rate: {self.sample_rate} Hz")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def read(self, offset: int, count: int) -> np.ndarray:
        """Return ``count`` samples from ``offset``, zero-filled past the end."""
        out = np.zeros(count, dtype=np.float64)
        chunk = self.samples[offset : offset + count]
        out[: len(chunk)] = chunk
        return out

    def truncate(self, seconds: float) -> "AudioStream":
        return AudioStream(self.samples[: int(round(seconds * self.sample_rate))], self.sample_rate)


def open_wav(path: str | os.PathLike) -> AudioStream:
    """Read a mono 16 kHz PCM16 or float32 WAV file.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        AudioFormatError: wrong sample rate, channel count or sample type.
        OSError: the file is truncated.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"file not found: {path}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(path)
        except wavfile.WavFileWarning as exc:
            raise OSError(f"truncated WAV file {path}: {exc}") from exc
        except ValueError as exc:
            raise OSError(f"unreadable WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise AudioFormatError(f"expected mono, got {data.shape[1]} channels")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"unsupported sample rate: {rate} Hz (expected {SAMPLE_RATE})")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported sample type: {data.dtype}")
    return AudioStream(samples, rate)


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float samples as a 32-bit float WAV."""
    wavfile.write(os.fspath(path), sample_rate, np.asarray(samples, dtype=np.float32))


def slide(stream: AudioStream, window: float = 5.0, step: float = 0.5) -> Iterator[AudioWindow]:
    """Yield fixed-length windows starting every ``step`` seconds.

    Windows start at ``k * step`` while that is before the end of the stream;
    the ones that run past the end are zero-padded on the right.
    """
    if not window >= step > 0:
        raise ValueError(f"need window >= step > 0, got window={window}, step={step}")
    rate = stream.sample_rate
    win = int(round(window * rate))
    hop = int(round(step * rate))
    total = stream.num_samples
    for k in range(num_windows(total, hop)):
        offset = k * hop
        padded = max(0, offset + win - total)
        yield AudioWindow(
            start=offset / rate,
            samples=stream.read(offset, win),
            sample_rate=rate,
            padded_tail=padded / rate,
        )


def num_windows(total_samples: int, hop_samples: int) -> int:
    return math.ceil(total_samples / hop_samples)
