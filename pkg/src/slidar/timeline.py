"""Recording, utterance and word data model plus interval utilities.

All intervals are half-open ``[onset, offset)`` in seconds.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TIME_EPS = 1e-9
DEFAULT_FRAME_STEP = 0.01


class TimelineError(ValueError):
    """Raised for malformed timelines or impossible segmentation requests."""


@dataclass(frozen=True)
class Word:
    text: str
    onset: float | None = None
    offset: float | None = None

    def __post_init__(self) -> None:
        if not self.text or any(c.isspace() for c in self.text):
            raise TimelineError(f"invalid word text {self.text!r}")
        if (self.onset is None) != (self.offset is None):
            raise TimelineError("word onset and offset must both be set or both unset")
        if self.onset is not None:
            if self.onset < 0 or not self.offset > self.onset:
                raise TimelineError(
                    f"word {self.text!r} has invalid span [{self.onset}, {self.offset})"
                )

    @property
    def timed(self) -> bool:
        return self.onset is not None


@dataclass(frozen=True)
class Utterance:
    """One speaker turn.

    ``onset``/``offset`` always hold the utterance span. When the words carry
    their own times, the span must agree with the first and last word.
    """

    speaker: str
    words: tuple[Word, ...]
    onset: float
    offset: float

    def __post_init__(self) -> None:
        if not self.words:
            raise TimelineError("empty utterance")
        if not self.offset > self.onset:
            raise TimelineError("degenerate span")
        if self.segmented:
            if (
                abs(self.words[0].onset - self.onset) > 1e-6
                or abs(self.words[-1].offset - self.offset) > 1e-6
            ):
                raise TimelineError("utterance span disagrees with word times")
            for a, b in zip(self.words, self.words[1:]):
                if b.onset < a.offset - 1e-9:
                    raise TimelineError("words overlap or are out of order")

    @classmethod
    def from_words(cls, speaker: str, words: Sequence[Word]) -> "Utterance":
        words = tuple(words)
        if not words:
            raise TimelineError("empty utterance")
        return cls(speaker, words, words[0].onset, words[-1].offset)

    @classmethod
    def from_text(
        cls, speaker: str, text: str, onset: float, offset: float, *, segment: bool = True
    ) -> "Utterance":
        """Build an utterance from plain text.

        With ``segment`` the word times are estimated with
        :func:`approximate_word_boundaries`; otherwise words stay untimed.
        """
        if segment:
            return cls(speaker, tuple(approximate_word_boundaries(text, onset, offset)), onset, offset)
        tokens = text.split()
        if not tokens:
            raise TimelineError("empty utterance")
        return cls(speaker, tuple(Word(t) for t in tokens), onset, offset)

    @property
    def segmented(self) -> bool:
        return all(w.timed for w in self.words)

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    @property
    def duration(self) -> float:
        return self.offset - self.onset


def _utterance_key(u: Utterance) -> tuple:
    return (u.onset, u.speaker, u.offset)


@dataclass(frozen=True)
class RecordingTimeline:
    recording_id: str
    duration: float
    utterances: tuple[Utterance, ...] = ()

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise TimelineError("negative duration")
        utts = tuple(sorted(self.utterances, key=_utterance_key))
        object.__setattr__(self, "utterances", utts)
        last_offset: dict[str, float] = {}
        for u in utts:
            if u.onset < -TIME_EPS or u.offset > self.duration + 1e-6:
                raise TimelineError(
                    f"utterance [{u.onset}, {u.offset}) outside recording of {self.duration} s"
                )
            prev = last_offset.get(u.speaker)
            if prev is not None and u.onset < prev - 1e-9:
                raise TimelineError(f"speaker {u.speaker} has overlapping utterances at {u.onset}")
            last_offset[u.speaker] = u.offset

    @property
    def speakers(self) -> tuple[str, ...]:
        """Speakers ordered by first activity."""
        seen: dict[str, None] = {}
        for u in self.utterances:
            seen.setdefault(u.speaker)
        return tuple(seen)

    def speaker_intervals(self) -> dict[str, list[tuple[float, float]]]:
        out: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for u in self.utterances:
            out[u.speaker].append((u.onset, u.offset))
        return dict(out)

    def intersecting(self, start: float, end: float) -> list[Utterance]:
        return [u for u in self.utterances if u.onset < end and u.offset > start]

    def speech_time(self) -> float:
        return sum(u.duration for u in self.utterances)


@dataclass(frozen=True)
class ActivityMap:
    """Per-speaker frame activity; ``activity[i, f]`` belongs to ``speakers[i]``."""

    frame_step: float
    speakers: tuple[str, ...]
    activity: np.ndarray = field(repr=False)

    @property
    def n_frames(self) -> int:
        return self.activity.shape[1]

    def for_speaker(self, speaker: str) -> np.ndarray:
        return self.activity[self.speakers.index(speaker)]

    def active_count(self) -> np.ndarray:
        return self.activity.sum(axis=0)

    def intervals(self, speaker: str) -> list[tuple[float, float]]:
        """Reconstruct grid-snapped intervals from one speaker's frames."""
        row = self.for_speaker(speaker).astype(np.int8)
        edges = np.diff(np.concatenate([[0], row, [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        return [(s * self.frame_step, e * self.frame_step) for s, e in zip(starts, ends)]


def frame_count(duration: float, frame_step: float) -> int:
    return max(0, math.ceil(duration / frame_step - 1e-6))


def frame_span(onset: float, offset: float, frame_step: float) -> tuple[int, int]:
    """Frames ``f`` with ``onset <= f * frame_step < offset``."""
    return (
        max(0, math.ceil(onset / frame_step - 1e-6)),
        max(0, math.ceil(offset / frame_step - 1e-6)),
    )


def intervals_to_activity(
    intervals: dict[str, Iterable[tuple[float, float]]],
    n_frames: int,
    frame_step: float,
    origin: float = 0.0,
) -> tuple[tuple[str, ...], np.ndarray]:
    speakers = tuple(intervals)
    act = np.zeros((len(speakers), n_frames), dtype=bool)
    for i, spk in enumerate(speakers):
        for on, off in intervals[spk]:
            a, b = frame_span(on - origin, off - origin, frame_step)
            act[i, a:min(b, n_frames)] = True
    return speakers, act


def rasterize(timeline: RecordingTimeline, frame_step: float = DEFAULT_FRAME_STEP) -> ActivityMap:
    if not frame_step > 0:
        raise TimelineError("frame_step must be positive")
    n = frame_count(timeline.duration, frame_step)
    speakers, act = intervals_to_activity(timeline.speaker_intervals(), n, frame_step)
    return ActivityMap(frame_step, speakers, act)


def approximate_word_boundaries(utterance_text: str, onset: float, offset: float) -> list[Word]:
    """Spread an utterance span over its words proportionally to character count.

    Each word except the last is weighted by its length plus one for the
    following separator. The last span ends exactly at ``offset``.
    """
    tokens = utterance_text.split()
    if not tokens:
        raise TimelineError("empty utterance")
    if not offset > onset:
        raise TimelineError("degenerate span")
    weights = [len(t) + 1 for t in tokens[:-1]] + [len(tokens[-1])]
    total = sum(weights)
    span = offset - onset
    words = []
    acc = 0
    start = onset
    for i, (tok, w) in enumerate(zip(tokens, weights)):
        acc += w
        end = offset if i == len(tokens) - 1 else onset + span * acc / total
        words.append(Word(tok, start, end))
        start = end
    return words


def coverage_pieces(
    intervals: Iterable[tuple[float, float]], start: float, end: float
) -> list[tuple[float, float, int]]:
    """Partition ``[start, end)`` into pieces labelled with the active count."""
    events: dict[float, int] = defaultdict(int)
    for on, off in intervals:
        on, off = max(on, start), min(off, end)
        if off > on:
            events[on] += 1
            events[off] -= 1
    points = sorted(set(events) | {start, end})
    pieces = []
    count = 0
    for a, b in zip(points, points[1:]):
        count += events.get(a, 0)
        if b > a:
            pieces.append((a, b, count))
    return pieces


def _merge(pieces: list[tuple[float, float, int]], keep) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for a, b, c in pieces:
        if not keep(c):
            continue
        if out and abs(out[-1][1] - a) <= TIME_EPS:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def _check_range(timeline: RecordingTimeline, start: float, end: float) -> None:
    if not (0 <= start < end <= timeline.duration + 1e-6):
        raise TimelineError(f"invalid query range [{start}, {end})")


def silence_segments(timeline: RecordingTimeline, start: float, end: float) -> list[tuple[float, float]]:
    """Maximal sub-intervals of ``[start, end)`` with nobody speaking."""
    _check_range(timeline, start, end)
    spans = [(u.onset, u.offset) for u in timeline.utterances]
    return _merge(coverage_pieces(spans, start, end), lambda c: c == 0)


def overlap_regions(timeline: RecordingTimeline, start: float, end: float) -> list[tuple[float, float]]:
    """Maximal sub-intervals of ``[start, end)`` with two or more speakers active."""
    _check_range(timeline, start, end)
    spans = [(u.onset, u.offset) for u in timeline.utterances]
    return _merge(coverage_pieces(spans, start, end), lambda c: c >= 2)
