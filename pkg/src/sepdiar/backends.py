"""Separation, VAD and embedding backends.

The pipeline only relies on the three protocols below. The concrete classes
are deterministic signal-processing stand-ins; trained separation, VAD or
embedding models can be dropped in by implementing the same methods.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.ndimage import median_filter

from .core import FRAME_RATE, AudioWindow

ZERO_LEVEL = 1e-8


class CapacityError(RuntimeError):
    """More simultaneously active sources than separator outputs."""


class BackendConfigError(ValueError):
    pass


class NoSpeechError(ValueError):
    """All frame weights are zero; there is nothing to embed."""


@dataclass(frozen=True)
class SourceEstimate:
    samples: np.ndarray
    start: float
    sample_rate: int = 16000


@dataclass(frozen=True)
class Embedding:
    vector: np.ndarray
    speech_duration: float

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding must be unit norm, got {norm}")
        if self.speech_duration < 0:
            raise ValueError("speech_duration must be non-negative")


@runtime_checkable
class Separator(Protocol):
    num_outputs: int

    def separate(self, window: AudioWindow) -> list[SourceEstimate]: ...


@runtime_checkable
class Vad(Protocol):
    frame_rate: float

    def detect(self, source: SourceEstimate) -> np.ndarray: ...


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(
        self, source: SourceEstimate | AudioWindow, weights: np.ndarray, tau_active: float = 0.5
    ) -> Embedding: ...


def _stable_hash(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


class OracleSeparator:
    """Returns ground-truth stems cropped to the window.

    Output order follows a hash of (stem label, window position) rather than
    energy, so downstream stitching still has to resolve the permutation.
    """

    def __init__(
        self,
        stems: Mapping[str, np.ndarray],
        num_outputs: int,
        sample_rate: int = 16000,
        activity_floor: float = ZERO_LEVEL,
    ) -> None:
        if num_outputs < 1:
            raise BackendConfigError("num_outputs must be >= 1")
        self.stems = {k: np.asarray(v, dtype=np.float64) for k, v in stems.items()}
        self.num_outputs = num_outputs
        self.sample_rate = sample_rate
        self.activity_floor = activity_floor

    def separate(self, window: AudioWindow) -> list[SourceEstimate]:
        offset = window.start_sample
        n = len(window.samples)
        active = []
        for label, stem in self.stems.items():
            crop = np.zeros(n)
            chunk = stem[offset : offset + n]
            crop[: len(chunk)] = chunk
            if np.sqrt(np.mean(crop**2)) > self.activity_floor:
                active.append((label, crop))
        if len(active) > self.num_outputs:
            raise CapacityError(
                f"window at {window.start:.2f}s has {len(active)} active stems "
                f"but the separator has {self.num_outputs} outputs"
            )
        slots = [(_stable_hash(f"{label}@{offset}"), crop) for label, crop in active]
        for j in range(self.num_outputs - len(active)):
            slots.append((_stable_hash(f"<empty{j}>@{offset}"), np.zeros(n)))
        slots.sort(key=lambda item: item[0])
        return [SourceEstimate(crop, window.start, window.sample_rate) for _, crop in slots]


class BandSplitSeparator:
    """Splits the window into frequency bands by FFT masking."""

    def __init__(self, bands: Sequence[tuple[float, float]], sample_rate: int = 16000) -> None:
        nyquist = sample_rate / 2
        bands = [(float(lo), float(hi)) for lo, hi in bands]
        if not bands:
            raise BackendConfigError("at least one band is required")
        for lo, hi in bands:
            if not 0 <= lo < hi <= nyquist:
                raise BackendConfigError(f"band [{lo}, {hi}] must lie within [0, {nyquist}] Hz")
        ordered = sorted(bands)
        for (_, hi), (lo, _) in zip(ordered, ordered[1:]):
            if lo < hi:
                raise BackendConfigError(f"bands overlap: {ordered}")
        self.bands = bands
        self.sample_rate = sample_rate
        self.num_outputs = len(bands)

    def _masks(self, n: int) -> list[np.ndarray]:
        freqs = np.fft.rfftfreq(n, 1.0 / self.sample_rate)
        nyquist = self.sample_rate / 2
        masks = []
        for lo, hi in self.bands:
            mask = (freqs >= lo) & (freqs < hi)
            if hi == nyquist:
                mask |= freqs == nyquist
            masks.append(mask)
        return masks

    def separate(self, window: AudioWindow) -> list[SourceEstimate]:
        n = len(window.samples)
        spectrum = np.fft.rfft(window.samples)
        return [
            SourceEstimate(np.fft.irfft(spectrum * mask, n), window.start, window.sample_rate)
            for mask in self._masks(n)
        ]


class ShuffledSeparator:
    """Wraps a separator and permutes its outputs per window (seeded)."""

    def __init__(self, inner: Separator, seed: int = 0) -> None:
        self.inner = inner
        self.seed = seed
        self.num_outputs = inner.num_outputs

    def separate(self, window: AudioWindow) -> list[SourceEstimate]:
        sources = self.inner.separate(window)
        rng = np.random.default_rng([self.seed, window.start_sample])
        return [sources[i] for i in rng.permutation(len(sources))]


class EnergyVad:
    """Frame-RMS threshold detector with median smoothing.

    Args:
        threshold_db: activity threshold in dBFS (full scale = 1.0).
        hangover: half-width in frames of the median filter; 0 disables it.
    """

    def __init__(self, threshold_db: float = -40.0, hangover: int = 0, frame_rate: float = FRAME_RATE):
        if threshold_db >= 0:
            raise BackendConfigError("threshold_db must be negative")
        if hangover < 0:
            raise BackendConfigError("hangover must be >= 0")
        self.threshold_db = threshold_db
        self.hangover = hangover
        self.frame_rate = frame_rate

    def frame_levels(self, samples: np.ndarray, sample_rate: int) -> np.ndarray:
        hop = int(round(sample_rate / self.frame_rate))
        frames = len(samples) // hop
        blocks = np.asarray(samples[: frames * hop], dtype=np.float64).reshape(frames, hop)
        rms = np.sqrt(np.mean(blocks**2, axis=1))
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(rms)

    def detect(self, source: SourceEstimate) -> np.ndarray:
        active = self.frame_levels(source.samples, source.sample_rate) >= self.threshold_db
        if self.hangover:
            active = median_filter(active.astype(np.uint8), size=2 * self.hangover + 1, mode="nearest")
        return active.astype(np.float64)


def energy_vad(source: SourceEstimate, threshold_db: float = -40.0, hangover: int = 0) -> np.ndarray:
    return EnergyVad(threshold_db, hangover).detect(source)


def weighted_embed(
    features: np.ndarray,
    weights: np.ndarray,
    tau_active: float = 0.5,
    frame_rate: float = FRAME_RATE,
) -> Embedding:
    """Activity-weighted mean of frame features, L2-normalised.

    ``speech_duration`` counts frames whose weight reaches ``tau_active``.

    Raises:
        NoSpeechError: the weights sum to zero (or the mean vanishes).
    """
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if features.shape[0] != weights.shape[0]:
        raise ValueError(f"{features.shape[0]} feature frames but {weights.shape[0]} weights")
    total = weights.sum()
    if total <= 0:
        raise NoSpeechError("frame weights sum to zero")
    mean = weights @ features / total
    norm = np.linalg.norm(mean)
    if norm == 0 or not np.isfinite(norm):
        raise NoSpeechError("weighted mean feature vector is zero")
    duration = float(np.count_nonzero(weights >= tau_active)) / frame_rate
    return Embedding(mean / norm, duration)


def mel_filterbank(num_bands: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None):
    """Triangular filters equally spaced on the HTK mel scale."""
    fmax = sample_rate / 2 if fmax is None else fmax

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)

    def to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)

    edges = to_hz(np.linspace(to_mel(fmin), to_mel(fmax), num_bands + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    bank = np.zeros((num_bands, len(freqs)))
    for i in range(num_bands):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


@dataclass
class MelEmbedder:
    """Reference speaker embedder: mean-normalised log mel energies per frame.

    Each 10 ms frame is described by 20 log filter-bank energies taken from a
    25 ms Hann window, floored ``dynamic_range_db`` below the frame peak and
    centred across bands, which makes the features gain-invariant.
    """

    sample_rate: int = 16000
    dimension: int = 20
    frame_rate: float = FRAME_RATE
    win_length: int = 400
    n_fft: int = 512
    dynamic_range_db: float = 60.0
    _bank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._bank = mel_filterbank(self.dimension, self.n_fft, self.sample_rate)
        self._window = np.hanning(self.win_length)

    def features(self, samples: np.ndarray) -> np.ndarray:
        hop = int(round(self.sample_rate / self.frame_rate))
        frames = len(samples) // hop
        pad = (self.win_length - hop) // 2
        padded = np.pad(np.asarray(samples, dtype=np.float64), (pad, self.win_length))
        view = np.lib.stride_tricks.sliding_window_view(padded, self.win_length)[::hop][:frames]
        power = np.abs(np.fft.rfft(view * self._window, self.n_fft)) ** 2
        log_energy = np.log(power @ self._bank.T + 1e-20)
        floor = log_energy.max(axis=1, keepdims=True) - self.dynamic_range_db * np.log(10) / 10
        log_energy = np.maximum(log_energy, floor)
        return log_energy - log_energy.mean(axis=1, keepdims=True)

    def embed(
        self, source: SourceEstimate | AudioWindow, weights: np.ndarray, tau_active: float = 0.5
    ) -> Embedding:
        feats = self.features(source.samples)
        return weighted_embed(feats, weights, tau_active, self.frame_rate)


def build_separator(name: str, params: Mapping | None = None, stems: Mapping[str, np.ndarray] | None = None):
    """Construct a separator by name ("oracle" or "band-split")."""
    params = dict(params or {})
    if name == "oracle":
        if stems is None:
            raise BackendConfigError("the oracle separator needs ground-truth stems")
        return OracleSeparator(stems, int(params.get("num_outputs", len(stems))))
    if name == "band-split":
        bands = params.get("bands")
        if not bands:
            raise BackendConfigError("the band-split separator needs 'bands'")
        return BandSplitSeparator([tuple(b) for b in bands])
    raise BackendConfigError(f"unknown separator: {name!r} (choose oracle or band-split)")


def build_vad(name: str, params: Mapping | None = None) -> EnergyVad:
    params = dict(params or {})
    if name != "energy":
        raise BackendConfigError(f"unknown vad: {name!r} (choose energy)")
    return EnergyVad(float(params.get("threshold_db", -40.0)), int(params.get("hangover", 0)))


def build_embedder(name: str, params: Mapping | None = None) -> MelEmbedder:
    params = dict(params or {})
    if name != "mel":
        raise BackendConfigError(f"unknown embedder: {name!r} (choose mel)")
    return MelEmbedder(**params)
