"""NIST RTTM (SPEAKER lines) and UEM reading/writing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .core import Annotation, Segment, merge_segments


class RttmParseError(ValueError):
    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class RttmRecord:
    file_id: str
    channel: int
    onset: float
    duration: float
    speaker: str

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration must be positive: {self.duration}")
        if self.onset < 0:
            raise ValueError(f"onset must be non-negative: {self.onset}")

    def line(self) -> str:
        return (
            f"SPEAKER {self.file_id} {self.channel} {self.onset:.3f} {self.duration:.3f} "
            f"<NA> <NA> {self.speaker} <NA> <NA>"
        )


def parse_rttm(text: str) -> dict[str, Annotation]:
    entries: dict[str, list[tuple[Segment, str]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields or fields[0] != "SPEAKER":
            continue
        if len(fields) < 9:
            raise RttmParseError(lineno, f"expected 10 fields, got {len(fields)}")
        try:
            onset = float(fields[3])
            duration = float(fields[4])
            int(fields[2])
        except ValueError as exc:
            raise RttmParseError(lineno, str(exc)) from None
        if duration <= 0:
            raise RttmParseError(lineno, f"non-positive duration {duration}")
        if onset < 0:
            raise RttmParseError(lineno, f"negative onset {onset}")
        entries.setdefault(fields[1], []).append((Segment(onset, onset + duration), fields[7]))
    return {file_id: Annotation(tuple(items)) for file_id, items in entries.items()}


def records(annotations: Mapping[str, Annotation], channel: int = 1) -> list[RttmRecord]:
    out = []
    for file_id, ann in annotations.items():
        for seg, label in ann:
            onset = round(seg.start, 3)
            duration = round(round(seg.end, 3) - onset, 3)
            if duration <= 0:
                continue
            out.append(RttmRecord(file_id, channel, onset, duration, label))
    out.sort(key=lambda r: (r.file_id, r.onset, r.speaker))
    return out


def write_rttm(annotations: Mapping[str, Annotation]) -> str:
    """Render annotations as RTTM, times quantised to 1 ms.

    Segments shorter than the quantum after rounding are dropped.
    """
    return "".join(rec.line() + "\n" for rec in records(annotations))


def parse_uem(text: str) -> dict[str, list[Segment]]:
    regions: dict[str, list[Segment]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields or fields[0].startswith(";;"):
            continue
        if len(fields) != 4:
            raise RttmParseError(lineno, f"expected 4 UEM fields, got {len(fields)}")
        try:
            int(fields[1])
            start, end = float(fields[2]), float(fields[3])
            seg = Segment(start, end)
        except ValueError as exc:
            raise RttmParseError(lineno, str(exc)) from None
        regions.setdefault(fields[0], []).append(seg)
    return {file_id: merge_segments(segs) for file_id, segs in regions.items()}


def write_uem(regions: Mapping[str, list[Segment]], channel: int = 1) -> str:
    lines = []
    for file_id in sorted(regions):
        for seg in merge_segments(regions[file_id]):
            lines.append(f"{file_id} {channel} {seg.start:.3f} {seg.end:.3f}\n")
    return "".join(lines)
