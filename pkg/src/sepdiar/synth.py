"""Synthetic meeting scenarios built from band-limited modulated tones.

Every speaker lives in its own frequency band, so a band-split separator has
a regime where it genuinely works and ground truth is unambiguous: a speaker
is active exactly where its stem is non-zero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import Annotation, Segment, merge_segments, overlap_regions
from .ingest import SAMPLE_RATE, AudioStream, open_wav, write_wav

SPEAKER_BANDS: tuple[tuple[float, float], ...] = (
    (0.0, 1000.0),
    (1000.0, 2000.0),
    (2000.0, 3500.0),
    (3500.0, 5500.0),
    (5500.0, 8000.0),
)
MAX_SPEAKERS = len(SPEAKER_BANDS)
RAMP = 0.005
GRID = 0.01


class ScenarioConfigError(ValueError):
    pass


@dataclass
class Scenario:
    num_speakers: int
    duration: float
    stems: dict[str, np.ndarray]
    annotation: Annotation
    overlap_ratio: float
    bands: dict[str, tuple[float, float]]
    sample_rate: int = SAMPLE_RATE
    measured_overlap: float = 0.0

    @property
    def mixture(self) -> np.ndarray:
        total = np.zeros(int(round(self.duration * self.sample_rate)))
        for label in sorted(self.stems):
            total = total + self.stems[label]
        return total

    def stream(self) -> AudioStream:
        return AudioStream(self.mixture, self.sample_rate)


def overlap_fraction(annotation: Annotation) -> float:
    """Overlapped time divided by total (union) speech time."""
    speech = merge_segments(seg for seg, _ in annotation)
    total = sum(s.duration for s in speech)
    if total == 0:
        return 0.0
    return sum(s.duration for s in overlap_regions(annotation)) / total


def _label(k: int) -> str:
    return f"spk{k + 1}"


def _tone(band: tuple[float, float], n: int, rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    lo, hi = band
    carrier = 0.5 * (lo + hi) if lo > 0 else 0.5 * hi
    rate = rng.uniform(3.0, 6.0)
    amplitude = rng.uniform(0.05, 0.15)
    t = np.arange(n) / sample_rate
    envelope = 1.0 + 0.5 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    return amplitude * envelope * np.sin(2 * np.pi * carrier * t + rng.uniform(0, 2 * np.pi))


def _gate(segments: list[Segment], n: int, sample_rate: int) -> np.ndarray:
    gate = np.zeros(n)
    ramp_len = int(round(RAMP * sample_rate))
    ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp_len) + 0.5) / ramp_len)
    for seg in segments:
        a = int(round(seg.start * sample_rate))
        b = min(n, int(round(seg.end * sample_rate)))
        gate[a:b] = 1.0
        r = min(ramp_len, (b - a) // 2)
        gate[a : a + r] *= ramp[:r]
        gate[b - r : b] *= ramp[:r][::-1]
    return gate


def _quantize(t: float) -> float:
    return round(round(t / GRID) * GRID, 2)


@dataclass
class _Turns:
    speakers: list[int]
    durations: list[float]
    gaps: list[float]
    pulls: list[float]

    def layout(self, shift: float, duration: float) -> Annotation:
        spans: dict[int, list[Segment]] = {}
        prev_start = prev_end = None
        for i, (spk, dur) in enumerate(zip(self.speakers, self.durations)):
            if prev_end is None:
                start = self.gaps[0]
            else:
                pull = shift * self.pulls[i] * min(dur, self.durations[i - 1])
                start = max(prev_start + 0.1, prev_end + self.gaps[i] - pull)
            start = _quantize(start)
            end = _quantize(start + dur)
            prev_start, prev_end = start, end
            if start >= duration:
                break
            spans.setdefault(spk, []).append(Segment(start, min(end, duration)))
        entries = [
            (seg, _label(spk))
            for spk in sorted(spans)
            for seg in merge_segments(spans[spk])
        ]
        return Annotation(tuple(entries))


def _draw_turns(num_speakers: int, duration: float, rng: np.random.Generator) -> _Turns:
    turns = _Turns([], [], [], [])
    nominal = 0.0
    speaker = int(rng.integers(num_speakers))
    while nominal < 2 * duration + 10:
        turns.speakers.append(speaker)
        dur = _quantize(rng.uniform(1.0, 4.0))
        gap = _quantize(rng.uniform(0.2, 1.0))
        turns.durations.append(dur)
        turns.gaps.append(gap)
        turns.pulls.append(rng.uniform(0.3, 1.0))
        nominal += dur + gap
        if num_speakers > 1:
            others = [k for k in range(num_speakers) if k != speaker]
            speaker = int(others[rng.integers(len(others))])
    return turns


def generate(
    num_speakers: int,
    duration: float,
    overlap_ratio: float = 0.0,
    seed: int = 0,
    sample_rate: int = SAMPLE_RATE,
) -> Scenario:
    """Generate a conversation whose overlap fraction is within 0.05 of the target.

    Raises:
        ScenarioConfigError: speaker count out of range or unreachable overlap target.
    """
    if not 1 <= num_speakers <= MAX_SPEAKERS:
        raise ScenarioConfigError(f"num_speakers must lie in [1, {MAX_SPEAKERS}]: {num_speakers}")
    if not 0.0 <= overlap_ratio < 1.0:
        raise ScenarioConfigError(f"overlap_ratio must lie in [0, 1): {overlap_ratio}")
    if num_speakers == 1 and overlap_ratio > 0:
        raise ScenarioConfigError("a single speaker cannot overlap with anyone")
    if duration <= 0:
        raise ScenarioConfigError("duration must be positive")

    rng = np.random.default_rng(seed)
    turns = _draw_turns(num_speakers, duration, rng)

    best = turns.layout(0.0, duration)
    best_ratio = overlap_fraction(best)
    if overlap_ratio > 0:
        lo, hi = 0.0, 3.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            candidate = turns.layout(mid, duration)
            ratio = overlap_fraction(candidate)
            if abs(ratio - overlap_ratio) < abs(best_ratio - overlap_ratio):
                best, best_ratio = candidate, ratio
            if ratio < overlap_ratio:
                lo = mid
            else:
                hi = mid
    if abs(best_ratio - overlap_ratio) > 0.05:
        raise ScenarioConfigError(
            f"could not reach overlap ratio {overlap_ratio} (best {best_ratio:.3f}) "
            f"with {num_speakers} speakers over {duration}s"
        )

    n = int(round(duration * sample_rate))
    segments = best.by_label()
    stems = {}
    bands = {}
    for k in range(num_speakers):
        label = _label(k)
        bands[label] = SPEAKER_BANDS[k]
        tone = _tone(SPEAKER_BANDS[k], n, rng, sample_rate)
        stems[label] = tone * _gate(segments.get(label, []), n, sample_rate)
    return Scenario(
        num_speakers=num_speakers,
        duration=duration,
        stems=stems,
        annotation=best,
        overlap_ratio=overlap_ratio,
        bands=bands,
        sample_rate=sample_rate,
        measured_overlap=best_ratio,
    )


def fully_overlapped(num_speakers: int, duration: float = 3.0, seed: int = 0, sample_rate: int = SAMPLE_RATE) -> Scenario:
    """All speakers talk for the whole mixture; bands drawn at random."""
    if not 1 <= num_speakers <= MAX_SPEAKERS:
        raise ScenarioConfigError(f"num_speakers must lie in [1, {MAX_SPEAKERS}]: {num_speakers}")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(MAX_SPEAKERS, size=num_speakers, replace=False).tolist())
    n = int(round(duration * sample_rate))
    whole = [Segment(0.0, duration)]
    stems, bands, entries = {}, {}, []
    for k in chosen:
        label = _label(k)
        bands[label] = SPEAKER_BANDS[k]
        stems[label] = _tone(SPEAKER_BANDS[k], n, rng, sample_rate) * _gate(whole, n, sample_rate)
        entries.append((whole[0], label))
    return Scenario(num_speakers, duration, stems, Annotation(tuple(entries)), 1.0, bands, sample_rate, 1.0 if num_speakers > 1 else 0.0)


@dataclass(frozen=True)
class MismatchRow:
    n_spks: int
    all_outputs: float
    pis_eval: float


def mismatch_suite(
    separator_factory: Callable[[Scenario], object],
    max_speakers: int = MAX_SPEAKERS,
    seed: int = 0,
    duration: float = 3.0,
) -> list[MismatchRow]:
    """Score an M-output separator on fully overlapped mixtures of M..2 speakers.

    ``separator_factory`` receives the scenario (so an oracle can see the
    stems) and must return a separator with ``max_speakers`` outputs.
    """
    from .core import AudioWindow
    from .metrics import all_outputs_eval, pis_eval

    rows = []
    for n_spks in range(max_speakers, 1, -1):
        scenario = fully_overlapped(n_spks, duration, seed=seed + n_spks)
        separator = separator_factory(scenario)
        if separator.num_outputs != max_speakers:
            raise ValueError(
                f"separator has {separator.num_outputs} outputs, expected {max_speakers}"
            )
        window = AudioWindow(0.0, scenario.mixture, scenario.sample_rate)
        estimates = [est.samples for est in separator.separate(window)]
        references = [scenario.stems[k] for k in sorted(scenario.stems)]
        rows.append(
            MismatchRow(
                n_spks,
                all_outputs_eval(estimates, references).mean_si_sdr,
                pis_eval(estimates, references, n_spks).mean_si_sdr,
            )
        )
    return rows


def save_scenario(scenario: Scenario, outdir: str | os.PathLike, file_id: str = "mixture") -> dict[str, Path]:
    """Write mixture WAV, one WAV per stem and the ground-truth RTTM."""
    from .rttm_io import write_rttm

    out = Path(outdir)
    (out / "stems").mkdir(parents=True, exist_ok=True)
    paths = {"mixture": out / f"{file_id}.wav", "rttm": out / f"{file_id}.rttm"}
    write_wav(paths["mixture"], scenario.mixture, scenario.sample_rate)
    for label, stem in scenario.stems.items():
        path = out / "stems" / f"{label}.wav"
        write_wav(path, stem, scenario.sample_rate)
        paths[label] = path
    paths["rttm"].write_text(write_rttm({file_id: scenario.annotation}))
    return paths


def load_stems(directory: str | os.PathLike) -> dict[str, np.ndarray]:
    stems = {}
    for path in sorted(Path(directory).glob("*.wav")):
        stems[path.stem] = open_wav(path).samples
    if not stems:
        raise FileNotFoundError(f"file not found: no stem WAVs in {directory}")
    return stems
