"""Diarization and separation scoring.

DER follows rich-transcription conventions: overlapped speech counts once per
simultaneous speaker, the hypothesis-to-reference speaker map is the optimal
one-to-one assignment on overlap time, and no collar is applied unless asked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Annotation, Segment, crop_to, merge_segments, overlap_regions, subtract

SI_SDR_CAP = 120.0
ZERO_SIGNAL_EPS = 1e-8


class UndefinedDERError(ValueError):
    """The scored region contains no reference speech."""


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class DerReport:
    der: float
    false_alarm: float
    missed: float
    confusion: float
    total_speech: float
    speaker_map: dict[str, str]
    false_alarm_time: float = 0.0
    missed_time: float = 0.0
    confusion_time: float = 0.0
    scored_regions: tuple[Segment, ...] = ()

    @property
    def scored_duration(self) -> float:
        return float(sum(r.duration for r in self.scored_regions))


def _elementary(ref: Annotation, hyp: Annotation):
    """Yield ``(duration, ref_labels, hyp_labels)`` over constant-activity spans."""
    events: list[tuple[float, int, int, str]] = []
    for side, ann in ((0, ref), (1, hyp)):
        for seg, label in ann:
            events.append((seg.start, 1, side, label))
            events.append((seg.end, -1, side, label))
    events.sort(key=lambda e: e[0])
    active: tuple[dict[str, int], dict[str, int]] = ({}, {})
    prev = None
    i = 0
    while i < len(events):
        time = events[i][0]
        if prev is not None and time > prev:
            refs = frozenset(k for k, v in active[0].items() if v > 0)
            hyps = frozenset(k for k, v in active[1].items() if v > 0)
            if refs or hyps:
                yield time - prev, refs, hyps
        while i < len(events) and events[i][0] == time:
            _, delta, side, label = events[i]
            active[side][label] = active[side].get(label, 0) + delta
            i += 1
        prev = time


def _optimal_map(overlap: dict[tuple[str, str], float], hyp_labels: list[str], ref_labels: list[str]) -> dict[str, str]:
    if not hyp_labels or not ref_labels:
        return {}
    n_h, n_r = len(hyp_labels), len(ref_labels)
    # overlap in whole microseconds dominates; the small term breaks ties towards
    # lexicographically smaller reference labels for earlier hypothesis labels
    scale = n_h * n_r + 1
    cost = np.zeros((n_h, n_r))
    for i, h in enumerate(hyp_labels):
        for j, r in enumerate(ref_labels):
            micros = round(overlap.get((h, r), 0.0) * 1e6)
            cost[i, j] = -micros * scale + j * (n_h - i)
    rows, cols = linear_sum_assignment(cost)
    return {
        hyp_labels[i]: ref_labels[j]
        for i, j in zip(rows, cols)
        if overlap.get((hyp_labels[i], ref_labels[j]), 0.0) > 0
    }


def scored_regions(
    reference: Annotation,
    hypothesis: Annotation,
    uem: Sequence[Segment] | None = None,
    collar: float = 0.0,
    overlap_only: bool = False,
) -> list[Segment]:
    if uem is not None:
        regions = merge_segments(uem)
    else:
        spans = [seg for seg, _ in reference] + [seg for seg, _ in hypothesis]
        regions = [Segment(min(s.start for s in spans), max(s.end for s in spans))] if spans else []
    if overlap_only:
        ovl = overlap_regions(crop_to(reference, regions))
        regions = [r for r in (a.intersect(b) for a in regions for b in ovl) if r is not None]
    if collar > 0:
        half = collar / 2
        holes = []
        for seg, _ in reference.support():
            for b in (seg.start, seg.end):
                lo, hi = max(0.0, b - half), b + half
                if hi > lo:
                    holes.append(Segment(lo, hi))
        regions = subtract(regions, holes)
    return regions


def der(
    reference: Annotation,
    hypothesis: Annotation,
    uem: Sequence[Segment] | None = None,
    collar: float = 0.0,
    overlap_only: bool = False,
) -> DerReport:
    """Diarization error rate with its false alarm / missed / confusion split.

    Raises:
        UndefinedDERError: no reference speech inside the scored region.
    """
    if collar < 0:
        raise ValueError(f"collar must be non-negative: {collar}")
    regions = scored_regions(reference, hypothesis, uem, collar, overlap_only)
    ref = crop_to(reference, regions).support()
    hyp = crop_to(hypothesis, regions).support()

    spans = list(_elementary(ref, hyp))
    overlap: dict[tuple[str, str], float] = {}
    for dur, refs, hyps in spans:
        for h in hyps:
            for r in refs:
                overlap[(h, r)] = overlap.get((h, r), 0.0) + dur
    mapping = _optimal_map(overlap, hyp.labels(), ref.labels())

    total = fa = ms = sc = 0.0
    for dur, refs, hyps in spans:
        n_ref, n_hyp = len(refs), len(hyps)
        correct = sum(1 for h in hyps if mapping.get(h) in refs)
        total += n_ref * dur
        ms += max(0, n_ref - n_hyp) * dur
        fa += max(0, n_hyp - n_ref) * dur
        sc += (min(n_ref, n_hyp) - correct) * dur
    if total <= 0:
        raise UndefinedDERError("no reference speech in the scored region; DER is undefined")
    fa_r, ms_r, sc_r = fa / total, ms / total, sc / total
    return DerReport(
        der=fa_r + ms_r + sc_r,
        false_alarm=fa_r,
        missed=ms_r,
        confusion=sc_r,
        total_speech=total,
        speaker_map=mapping,
        false_alarm_time=fa,
        missed_time=ms,
        confusion_time=sc,
        scored_regions=tuple(regions),
    )


@dataclass(frozen=True)
class SepScore:
    """Separation score under the best estimate-to-reference assignment.

    ``assignment[j]`` is the index of the estimate paired with reference ``j``.
    """

    mean_si_sdr: float
    assignment: tuple[int, ...]
    per_source: tuple[float, ...]


def _check_pair(estimate: np.ndarray, reference: np.ndarray) -> None:
    if estimate.shape != reference.shape or estimate.ndim != 1:
        raise ShapeError(f"shape mismatch: estimate {estimate.shape} vs reference {reference.shape}")


def si_sdr(estimate, reference, eps: float = ZERO_SIGNAL_EPS) -> float:
    """Scale-invariant SDR in dB, clipped to +/-120.

    ``eps`` is the amplitude treated as silence. A silent estimate scores the
    cap against a silent reference and minus the cap against anything else;
    otherwise ``eps**2`` regularises both energies.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    _check_pair(estimate, reference)
    floor = eps * (1 + 1e-6)
    if np.sqrt(np.mean(estimate**2)) <= floor:
        return SI_SDR_CAP if np.sqrt(np.mean(reference**2)) <= floor else -SI_SDR_CAP
    reg = eps * eps
    alpha = np.dot(estimate, reference) / (np.dot(reference, reference) + reg)
    target = alpha * reference
    noise = estimate - target
    ratio = (np.dot(target, target) + reg) / (np.dot(noise, noise) + reg)
    return float(np.clip(10.0 * np.log10(ratio), -SI_SDR_CAP, SI_SDR_CAP))


def _pairwise(estimates: Sequence[np.ndarray], references: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([[si_sdr(e, r) for r in references] for e in estimates])


def _best_selection(scores: np.ndarray, num_refs: int) -> SepScore:
    best = None
    best_mean = -np.inf
    for chosen in itertools.permutations(range(scores.shape[0]), num_refs):
        mean = float(np.mean([scores[e, j] for j, e in enumerate(chosen)]))
        if mean > best_mean:
            best, best_mean = chosen, mean
    per_source = tuple(float(scores[e, j]) for j, e in enumerate(best))
    return SepScore(float(np.mean(per_source)), tuple(best), per_source)


def pit_si_sdr(estimates: Sequence, references: Sequence) -> SepScore:
    """Mean SI-SDR under the best of all M! estimate permutations."""
    estimates = [np.asarray(e, dtype=np.float64) for e in estimates]
    references = [np.asarray(r, dtype=np.float64) for r in references]
    if len(estimates) != len(references) or not estimates:
        raise ShapeError(f"{len(estimates)} estimates vs {len(references)} references")
    return _best_selection(_pairwise(estimates, references), len(references))


def all_outputs_eval(estimates: Sequence, references: Sequence, epsilon: float = ZERO_SIGNAL_EPS) -> SepScore:
    """Score every output, padding missing references with constant ``epsilon`` signals."""
    if len(references) > len(estimates):
        raise ShapeError(f"{len(references)} references exceed {len(estimates)} estimates")
    length = len(np.asarray(estimates[0]))
    padded = list(references) + [np.full(length, epsilon)] * (len(estimates) - len(references))
    return pit_si_sdr(estimates, padded)


def pis_eval(estimates: Sequence, references: Sequence, n_spks: int | None = None) -> SepScore:
    """Score only the ``n_spks`` estimates that best match the references."""
    estimates = [np.asarray(e, dtype=np.float64) for e in estimates]
    references = [np.asarray(r, dtype=np.float64) for r in references]
    if n_spks is not None and n_spks != len(references):
        raise ShapeError(f"n_spks={n_spks} but {len(references)} references were given")
    if len(references) > len(estimates) or not references:
        raise ShapeError(f"{len(references)} references vs {len(estimates)} estimates")
    return _best_selection(_pairwise(estimates, references), len(references))
