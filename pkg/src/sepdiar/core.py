"""Domain types and timeline arithmetic.

Times are seconds as floats. Segments are half-open ``[start, end)`` so that
contiguous regions tile without double counting.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

FRAME_RATE = 100.0


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    end: float

    def __post_init__(self) -> None:
        if not self.end > self.start:
            raise ValueError(f"segment end must exceed start: [{self.start}, {self.end})")
        if self.start < 0:
            raise ValueError(f"segment start must be non-negative: {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def intersect(self, other: "Segment") -> "Segment | None":
        start = max(self.start, other.start)
        end = min(self.end, other.end)
        if end > start:
            return Segment(start, end)
        return None


@dataclass(frozen=True)
class Annotation:
    """Speaker-labelled segments. Distinct speakers may overlap in time."""

    entries: tuple[tuple[Segment, str], ...] = ()

    @classmethod
    def from_dict(cls, mapping: Mapping[str, Iterable[tuple[float, float]]]) -> "Annotation":
        entries = [
            (Segment(float(s), float(e)), str(label))
            for label, spans in mapping.items()
            for s, e in spans
        ]
        return cls(tuple(entries))

    def __iter__(self) -> Iterator[tuple[Segment, str]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def labels(self) -> list[str]:
        return sorted({label for _, label in self.entries})

    def by_label(self) -> dict[str, list[Segment]]:
        out: dict[str, list[Segment]] = defaultdict(list)
        for seg, label in self.entries:
            out[label].append(seg)
        for segs in out.values():
            segs.sort()
        return dict(out)

    def to_dict(self) -> dict[str, list[tuple[float, float]]]:
        return {k: [(s.start, s.end) for s in v] for k, v in self.by_label().items()}

    def support(self) -> "Annotation":
        """Merge overlapping or touching segments of the same speaker."""
        entries = []
        for label, segs in sorted(self.by_label().items()):
            for seg in merge_segments(segs):
                entries.append((seg, label))
        return Annotation(tuple(entries))

    def total_duration(self) -> float:
        return float(sum(seg.duration for seg, _ in self.entries))

    def speaker_duration(self, label: str) -> float:
        return float(sum(seg.duration for seg, lab in self.entries if lab == label))

    def crop(self, extent: Segment) -> "Annotation":
        return crop(self, extent)

    def relabel(self, mapping: Mapping[str, str]) -> "Annotation":
        return Annotation(tuple((seg, mapping.get(label, label)) for seg, label in self.entries))

    def extent(self) -> Segment | None:
        if not self.entries:
            return None
        return Segment(
            min(seg.start for seg, _ in self.entries),
            max(seg.end for seg, _ in self.entries),
        )


@dataclass(frozen=True)
class ActivityMatrix:
    """Per-speaker, per-frame speech activities in [0, 1]."""

    frame_rate: float
    start: float
    values: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("activities must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None and len(self.labels) != values.shape[0]:
            raise ValueError("one label per activity row is required")

    @property
    def num_speakers(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]

    def row_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(str(i) for i in range(self.num_speakers))


@dataclass(frozen=True)
class AudioWindow:
    start: float
    samples: np.ndarray
    sample_rate: int
    padded_tail: float = 0.0

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def start_sample(self) -> int:
        return int(round(self.start * self.sample_rate))


@dataclass(frozen=True)
class PipelineConfig:
    window: float = 5.0
    step: float = 0.5
    latency: float = 0.5
    tau_active: float = 0.5
    delta_new: float = 1.0
    rho_update: float = 0.1
    frame_rate: float = FRAME_RATE
    # map channels active only in the window's context part onto existing
    # centroids (never founds or updates); see stitch.assign_context
    map_context: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.step <= self.window:
            raise ValueError(f"step must lie in (0, window]: step={self.step}, window={self.window}")
        if not self.step <= self.latency <= self.window:
            raise ValueError(
                f"latency must lie in [{self.step}, {self.window}]: latency={self.latency}"
            )
        if not 0.0 < self.tau_active < 1.0:
            raise ValueError(f"tau_active must lie in (0, 1): {self.tau_active}")
        if not 0.0 <= self.delta_new <= 2.0:
            raise ValueError(f"delta_new must lie in [0, 2]: {self.delta_new}")
        if self.rho_update < 0:
            raise ValueError(f"rho_update must be non-negative: {self.rho_update}")
        if self.frame_rate <= 0:
            raise ValueError(f"frame_rate must be positive: {self.frame_rate}")
        for name in ("window", "step", "latency"):
            frames = getattr(self, name) * self.frame_rate
            if abs(frames - round(frames)) > 1e-6:
                raise ValueError(f"{name} must be a whole number of frames at {self.frame_rate} fps")
        if self.window_frames % self.step_frames or self.lag_frames % self.step_frames:
            raise ValueError("window and latency must be whole multiples of step")

    @property
    def window_frames(self) -> int:
        return int(round(self.window * self.frame_rate))

    @property
    def step_frames(self) -> int:
        return int(round(self.step * self.frame_rate))

    @property
    def lag_frames(self) -> int:
        """Frames of delay beyond the minimum latency of one step."""
        return int(round((self.latency - self.step) * self.frame_rate))


def merge_segments(segments: Iterable[Segment]) -> list[Segment]:
    """Union of segments, touching ones joined."""
    ordered = sorted(segments)
    merged: list[list[float]] = []
    for seg in ordered:
        if merged and seg.start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], seg.end)
        else:
            merged.append([seg.start, seg.end])
    return [Segment(s, e) for s, e in merged]


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as half-open ``(first, stop)`` index pairs."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b)) for a, b in zip(edges[0::2], edges[1::2])]


def binarize(activities: ActivityMatrix, tau_active: float) -> Annotation:
    """Threshold activities (``>= tau_active``) into speaker segments."""
    if not 0.0 < tau_active <= 1.0:
        raise ValueError(f"tau_active must lie in (0, 1]: {tau_active}")
    entries = []
    rate = activities.frame_rate
    for label, row in zip(activities.row_labels(), activities.values):
        for a, b in runs(row >= tau_active):
            entries.append((Segment(activities.start + a / rate, activities.start + b / rate), label))
    return Annotation(tuple(entries))


def crop(annotation: Annotation, extent: Segment) -> Annotation:
    entries = []
    for seg, label in annotation:
        inter = seg.intersect(extent)
        if inter is not None:
            entries.append((inter, label))
    return Annotation(tuple(entries))


def crop_to(annotation: Annotation, regions: Sequence[Segment]) -> Annotation:
    """Restrict an annotation to a set of disjoint regions."""
    entries = []
    for seg, label in annotation:
        for region in regions:
            inter = seg.intersect(region)
            if inter is not None:
                entries.append((inter, label))
    return Annotation(tuple(entries))


def overlap_regions(annotation: Annotation) -> list[Segment]:
    """Maximal disjoint regions where two or more distinct speakers talk."""
    events: list[tuple[float, int]] = []
    for seg in annotation.support().entries:
        events.append((seg[0].start, 1))
        events.append((seg[0].end, -1))
    # ends before starts at equal times: half-open segments that merely touch do not overlap
    events.sort(key=lambda e: (e[0], e[1]))
    regions: list[Segment] = []
    active = 0
    opened: float | None = None
    for time, delta in events:
        before = active
        active += delta
        if before < 2 <= active:
            opened = time
        elif before >= 2 > active and opened is not None:
            if time > opened:
                if regions and regions[-1].end == opened:
                    regions[-1] = Segment(regions[-1].start, time)
                else:
                    regions.append(Segment(opened, time))
            opened = None
    return regions


def subtract(regions: Sequence[Segment], holes: Iterable[Segment]) -> list[Segment]:
    """Remove ``holes`` from disjoint sorted ``regions``."""
    holes = merge_segments(holes)
    out: list[Segment] = []
    for region in regions:
        cursor = region.start
        for hole in holes:
            if hole.end <= cursor or hole.start >= region.end:
                continue
            if hole.start > cursor:
                out.append(Segment(cursor, hole.start))
            cursor = max(cursor, hole.end)
            if cursor >= region.end:
                break
        if cursor < region.end:
            out.append(Segment(cursor, region.end))
    return out
