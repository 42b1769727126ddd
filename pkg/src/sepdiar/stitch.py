"""Online stitching of local window predictions into a global diarization.

Per window: separate, run VAD on every source, embed the active sources,
match them to speaker centroids, then average the mapped activities of all
windows covering a frame once the configured latency has elapsed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .backends import Embedder, Embedding, NoSpeechError, Separator, Vad
from .core import ActivityMatrix, Annotation, AudioWindow, PipelineConfig, Segment, runs
from .ingest import AudioStream, slide


class OrderingError(ValueError):
    """Windows must reach the aggregator in increasing start order."""


@dataclass
class Centroid:
    id: str
    sum_vector: np.ndarray
    count: int = 1
    provisional: bool = False

    @property
    def mean(self) -> np.ndarray:
        return self.sum_vector / self.count

    @property
    def direction(self) -> np.ndarray:
        mean = self.mean
        return mean / np.linalg.norm(mean)


@dataclass
class ClusterState:
    centroids: list[Centroid] = field(default_factory=list)

    def copy(self) -> "ClusterState":
        return ClusterState([replace(c, sum_vector=c.sum_vector.copy()) for c in self.centroids])

    @property
    def labels(self) -> list[str]:
        return [c.id for c in self.centroids]

    def __len__(self) -> int:
        return len(self.centroids)


@dataclass(frozen=True)
class LocalPrediction:
    """Activities of all separator outputs plus embeddings of the active ones.

    ``embeddings`` holds channels active inside the emission region (these
    take part in clustering); ``context`` holds channels active only earlier
    in the window.
    """

    activities: ActivityMatrix
    embeddings: list[tuple[int, Embedding]]
    context: list[tuple[int, Embedding]] = field(default_factory=list)


def local_predict(
    window: AudioWindow,
    separator: Separator,
    vad: Vad,
    embedder: Embedder,
    cfg: PipelineConfig,
    full_emission: bool = False,
) -> LocalPrediction:
    expected = int(round(cfg.window * window.sample_rate))
    if len(window.samples) != expected:
        raise ValueError(f"window holds {len(window.samples)} samples, expected {expected}")
    sources = separator.separate(window)
    rows = []
    eligible, context = [], []
    first = 0 if full_emission else cfg.window_frames - cfg.step_frames
    for channel, source in enumerate(sources):
        row = np.clip(np.asarray(vad.detect(source), dtype=np.float64), 0.0, 1.0)
        if len(row) != cfg.window_frames:
            raise ValueError(f"VAD returned {len(row)} frames, expected {cfg.window_frames}")
        rows.append(row)
        active = row >= cfg.tau_active
        if not active.any():
            continue
        try:
            emb = embedder.embed(source, row, cfg.tau_active)
        except NoSpeechError:
            continue
        (eligible if active[first:].any() else context).append((channel, emb))
    activities = ActivityMatrix(cfg.frame_rate, window.start, np.array(rows).reshape(len(sources), -1))
    return LocalPrediction(activities, eligible, context)


def _cost(local: list[tuple[int, Embedding]], centroids: list[Centroid]) -> np.ndarray:
    emb = np.array([e.vector for _, e in local])
    cen = np.array([c.direction for c in centroids])
    return 1.0 - emb @ cen.T


def assign(
    local: list[tuple[int, Embedding]],
    state: ClusterState,
    delta_new: float,
    rho_update: float,
) -> tuple[dict[int, str], ClusterState]:
    """Match local channels to centroids; found new speakers where none fits.

    Matching is a minimum-cost one-to-one assignment on cosine distance. A
    pair whose distance exceeds ``delta_new``, or a channel left without a
    centroid, founds a new speaker. Only embeddings backed by at least
    ``rho_update`` seconds of speech update their centroid; a centroid founded
    from a shorter one stays provisional and is replaced by the first
    qualifying embedding.
    """
    state = state.copy()
    mapping: dict[int, str] = {}
    founders: list[tuple[int, Embedding]] = []
    if local and state.centroids:
        cost = _cost(local, state.centroids)
        rows, cols = linear_sum_assignment(cost)
        matched = {}
        for r, c in zip(rows, cols):
            if cost[r, c] <= delta_new:
                matched[r] = c
        for r, (channel, emb) in enumerate(local):
            if r not in matched:
                founders.append((channel, emb))
                continue
            centroid = state.centroids[matched[r]]
            mapping[channel] = centroid.id
            if emb.speech_duration >= rho_update:
                if centroid.provisional:
                    centroid.sum_vector = emb.vector.copy()
                    centroid.count = 1
                    centroid.provisional = False
                else:
                    centroid.sum_vector = centroid.sum_vector + emb.vector
                    centroid.count += 1
    else:
        founders = list(local)
    for channel, emb in founders:
        label = f"speaker_{len(state.centroids)}"
        state.centroids.append(
            Centroid(label, emb.vector.copy(), 1, provisional=emb.speech_duration < rho_update)
        )
        mapping[channel] = label
    return mapping, state


def assign_context(
    context: list[tuple[int, Embedding]],
    state: ClusterState,
    delta_new: float,
    claimed: Iterable[str] = (),
) -> dict[int, str]:
    """Map context-only channels onto unclaimed centroids without touching the state."""
    claimed = set(claimed)
    free = [c for c in state.centroids if c.id not in claimed]
    if not context or not free:
        return {}
    cost = _cost(context, free)
    rows, cols = linear_sum_assignment(cost)
    return {
        context[r][0]: free[c].id
        for r, c in zip(rows, cols)
        if cost[r, c] <= delta_new
    }


@dataclass(frozen=True)
class MappedWindow:
    """Activity rows of one window keyed by global speaker."""

    start_frame: int
    rows: dict[str, np.ndarray]
    num_frames: int


class LatencyBuffer:
    """Per-frame running sums of mapped activities awaiting finalisation.

    A frame is finalised once the stream position (end of the newest window)
    is at least ``latency - step`` past the frame's end. ``count_histogram``
    and ``steady_counts`` record how many windows contributed to each
    finalised frame; the latter only for frames past start-up that were
    finalised by the latency rule rather than the end-of-stream flush.
    """

    def __init__(self, cfg: PipelineConfig, limit_frames: int | None = None) -> None:
        self.cfg = cfg
        self.limit_frames = limit_frames
        self.base = 0
        self.counts = np.zeros(0, dtype=np.int64)
        self.sums: dict[str, np.ndarray] = {}
        self.last_start: int | None = None
        self.count_histogram: Counter[int] = Counter()
        self.steady_counts: Counter[int] = Counter()
        self.last_block: tuple[int, dict[str, np.ndarray]] = (0, {})

    @property
    def horizon(self) -> int:
        """First frame that is not yet finalised."""
        return self.base

    def _extend(self, stop: int) -> None:
        missing = stop - (self.base + len(self.counts))
        if missing > 0:
            self.counts = np.concatenate([self.counts, np.zeros(missing, dtype=np.int64)])
            for label in self.sums:
                self.sums[label] = np.concatenate([self.sums[label], np.zeros(missing)])

    def add(self, window: MappedWindow) -> None:
        if self.last_start is not None and window.start_frame <= self.last_start:
            raise OrderingError(
                f"window at frame {window.start_frame} arrived after frame {self.last_start}"
            )
        self.last_start = window.start_frame
        stop = window.start_frame + window.num_frames
        self._extend(stop)
        # frames already finalised keep their value
        skip = max(0, self.base - window.start_frame)
        a = window.start_frame + skip - self.base
        b = stop - self.base
        if b <= a:
            return
        self.counts[a:b] += 1
        for label, row in window.rows.items():
            if label not in self.sums:
                self.sums[label] = np.zeros(len(self.counts))
            self.sums[label][a:b] += row[skip:]

    def finalize(self, stop: int, steady: bool = True) -> list[tuple[str, int, int]]:
        """Finalise frames before ``stop``; return binarised runs ``(label, first, stop)``."""
        if self.limit_frames is not None:
            stop = min(stop, self.limit_frames)
        n = min(stop - self.base, len(self.counts))
        if n <= 0:
            return []
        counts = self.counts[:n]
        self.count_histogram.update(counts.tolist())
        if steady:
            start_up = self.cfg.window_frames - self.cfg.step_frames
            frames = np.arange(self.base, self.base + n)
            self.steady_counts.update(counts[frames >= start_up].tolist())
        out = []
        block = {}
        for label in sorted(self.sums):
            mean = self.sums[label][:n] / np.maximum(counts, 1)
            block[label] = mean
            for a, b in runs(mean >= self.cfg.tau_active):
                out.append((label, self.base + a, self.base + b))
            self.sums[label] = self.sums[label][n:]
        self.last_block = (self.base, block)
        self.counts = self.counts[n:]
        self.base += n
        return out

    def flush(self) -> list[tuple[str, int, int]]:
        return self.finalize(self.base + len(self.counts), steady=False)


def _runs_to_annotation(found: list[tuple[str, int, int]], frame_rate: float) -> Annotation:
    return Annotation(tuple((Segment(a / frame_rate, b / frame_rate), label) for label, a, b in found))


def _aggregate(window: MappedWindow, buffer: LatencyBuffer, cfg: PipelineConfig) -> list[tuple[str, int, int]]:
    buffer.add(window)
    position = window.start_frame + window.num_frames
    return buffer.finalize(position - cfg.lag_frames)


def aggregate_and_emit(window: MappedWindow, buffer: LatencyBuffer, cfg: PipelineConfig) -> Annotation:
    """Add one window's mapped activities and return newly finalised segments."""
    return _runs_to_annotation(_aggregate(window, buffer, cfg), cfg.frame_rate)


class OnlineDiarizer:
    """Stateful streaming diarizer; feed windows in order, then call ``finish``."""

    def __init__(
        self,
        separator: Separator,
        vad: Vad,
        embedder: Embedder,
        cfg: PipelineConfig,
        duration: float | None = None,
    ) -> None:
        self.separator = separator
        self.vad = vad
        self.embedder = embedder
        self.cfg = cfg
        self.duration = duration
        limit = None if duration is None else int(np.ceil(round(duration * cfg.frame_rate, 6)))
        self.state = ClusterState()
        self.buffer = LatencyBuffer(cfg, limit)
        self.windows_seen = 0
        self.speaker_counts: list[int] = []
        self._runs: dict[str, list[list[int]]] = {}

    def _collect(self, found: list[tuple[str, int, int]]) -> None:
        for label, a, b in found:
            spans = self._runs.setdefault(label, [])
            if spans and spans[-1][1] == a:
                spans[-1][1] = b
            else:
                spans.append([a, b])

    def process(self, window: AudioWindow) -> Annotation:
        cfg = self.cfg
        pred = local_predict(
            window, self.separator, self.vad, self.embedder, cfg, full_emission=self.windows_seen == 0
        )
        mapping, self.state = assign(pred.embeddings, self.state, cfg.delta_new, cfg.rho_update)
        if cfg.map_context:
            mapping.update(assign_context(pred.context, self.state, cfg.delta_new, mapping.values()))
        rows = {label: pred.activities.values[ch] for ch, label in mapping.items()}
        mapped = MappedWindow(int(round(window.start * cfg.frame_rate)), rows, cfg.window_frames)
        self.windows_seen += 1
        self.speaker_counts.append(len(self.state))
        found = _aggregate(mapped, self.buffer, cfg)
        self._collect(found)
        return _runs_to_annotation(found, cfg.frame_rate)

    def finish(self) -> Annotation:
        found = self.buffer.flush()
        self._collect(found)
        return _runs_to_annotation(found, self.cfg.frame_rate)

    def annotation(self) -> Annotation:
        """Everything finalised so far, contiguous frames merged per speaker."""
        rate = self.cfg.frame_rate
        entries = []
        for label in sorted(self._runs):
            for a, b in self._runs[label]:
                end = b / rate
                if self.duration is not None:
                    end = min(end, self.duration)
                if end > a / rate:
                    entries.append((Segment(a / rate, end), label))
        return Annotation(tuple(entries))


def run_pipeline(
    stream: AudioStream,
    separator: Separator,
    vad: Vad,
    embedder: Embedder,
    cfg: PipelineConfig,
) -> Annotation:
    diarizer = OnlineDiarizer(separator, vad, embedder, cfg, duration=stream.duration)
    for window in slide(stream, cfg.window, cfg.step):
        diarizer.process(window)
    diarizer.finish()
    return diarizer.annotation()
