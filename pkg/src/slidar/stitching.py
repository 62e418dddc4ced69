"""Merge globally labelled window transcripts into one recording-level result."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .timeline import RecordingTimeline, Utterance, Word, approximate_word_boundaries
from .tokens import WindowAnnotation
from .windowing import WindowPlan

logger = logging.getLogger(__name__)


class StitchError(RuntimeError):
    def __init__(self, message: str, first=None, second=None):
        super().__init__(message)
        self.first = first
        self.second = second


@dataclass(frozen=True)
class GlobalUtterance:
    speaker: str
    words: tuple[str, ...]
    onset: float
    offset: float
    window: int


@dataclass(frozen=True)
class GlobalDast:
    recording_id: str
    duration: float
    utterances: tuple[GlobalUtterance, ...] = ()

    def speaker_intervals(self) -> dict[str, list[tuple[float, float]]]:
        out: dict[str, list[tuple[float, float]]] = {}
        for u in self.utterances:
            out.setdefault(u.speaker, []).append((u.onset, u.offset))
        return out

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(u.speaker for u in self.utterances))

    def to_timeline(self) -> RecordingTimeline:
        """Canonical transcript form, with word times estimated from character counts."""
        utts = []
        for u in self.utterances:
            if u.words:
                words = approximate_word_boundaries(" ".join(u.words), u.onset, u.offset)
                utts.append(Utterance(u.speaker, tuple(words), u.onset, u.offset))
        return RecordingTimeline(self.recording_id, self.duration, tuple(utts))

    @classmethod
    def from_timeline(cls, timeline: RecordingTimeline) -> "GlobalDast":
        return cls(
            timeline.recording_id,
            timeline.duration,
            tuple(GlobalUtterance(u.speaker, tuple(w.text for w in u.words), u.onset, u.offset, -1)
                  for u in timeline.utterances),
        )


def stitch(
    plan: WindowPlan,
    annotations: Sequence[WindowAnnotation],
    recording_id: str = "",
    duration: float | None = None,
) -> GlobalDast:
    """Combine relabelled window outputs.

    Each window owns the entries that start before the next window's onset;
    later entries are decoded again by the next window. Offset-truncated
    entries are dropped when a next window exists. Leftover same-speaker
    collisions between windows keep the later window's version.
    """
    if len(plan) != len(annotations):
        raise ValueError("annotations must align with the plan")
    if duration is None:
        duration = plan[-1].end if len(plan) else 0.0
    collected: list[GlobalUtterance] = []
    for k, (w, ann) in enumerate(zip(plan, annotations)):
        nxt = plan[k + 1].onset if k + 1 < len(plan) else None
        for e in ann.entries:
            if e.global_speaker is None:
                raise ValueError("stitch needs globally labelled entries")
            if e.onset is None:
                if k > 0:
                    logger.warning("window %d: entry with truncated onset at inference, dropped", w.index)
                    continue
                on = w.onset
            else:
                on = e.onset
            if e.offset is None:
                if nxt is not None:
                    continue
                off = w.end
            else:
                off = e.offset
            if nxt is not None and on >= nxt - 1e-9:
                continue
            on = min(max(on, 0.0), duration)
            off = min(max(off, 0.0), duration)
            if off <= on or not e.words:
                logger.debug("window %d: empty entry dropped", w.index)
                continue
            collected.append(GlobalUtterance(e.global_speaker, e.words, on, off, w.index))

    kept: list[GlobalUtterance] = []
    by_speaker: dict[str, list[GlobalUtterance]] = {}
    for u in collected:
        by_speaker.setdefault(u.speaker, []).append(u)
    for spk, utts in by_speaker.items():
        utts.sort(key=lambda u: (u.onset, u.window))
        stack: list[GlobalUtterance] = []
        for u in utts:
            while stack and stack[-1].offset > u.onset + 1e-9:
                prev = stack[-1]
                if prev.window == u.window:
                    raise StitchError(f"speaker {spk}: overlapping entries within window {u.window}", prev, u)
                if prev.window > u.window:
                    u = None
                    break
                stack.pop()
            if u is not None:
                stack.append(u)
        kept.extend(stack)
    kept.sort(key=lambda u: (u.onset, u.speaker, u.offset))
    return GlobalDast(recording_id, duration, tuple(kept))
