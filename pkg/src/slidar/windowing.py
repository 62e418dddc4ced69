"""Training window sampling and the inference sliding-window schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .timeline import RecordingTimeline, coverage_pieces
from .tokens import (
    CapacityError,
    PromptMode,
    Token,
    VocabConfig,
    WindowAnnotation,
    build_sot_target,
)


@dataclass(frozen=True)
class Window:
    index: int
    onset: float
    length: float

    @property
    def end(self) -> float:
        return self.onset + self.length


@dataclass
class WindowPlan:
    windows: list[Window] = field(default_factory=list)
    overlaps: list[float] = field(default_factory=list)

    def append(self, w: Window) -> None:
        prev = self.windows[-1].end if self.windows else w.onset
        self.windows.append(w)
        self.overlaps.append(max(0.0, round(prev - w.onset, 6)))

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    def __getitem__(self, i: int) -> Window:
        return self.windows[i]

    def covers(self, duration: float) -> bool:
        """True when the union of windows spans ``[0, duration)`` without gaps."""
        reach = 0.0
        for w in self.windows:
            if w.onset > reach + 1e-6:
                return False
            reach = max(reach, w.end)
        return reach >= duration - 1e-6

    def lines(self) -> list[str]:
        return [
            f"{w.index} {w.onset:.3f} {w.length:.3f} {ov:.3f}"
            for w, ov in zip(self.windows, self.overlaps)
        ]


@dataclass
class LocalDastResult:
    """Decoder output for one window, parsed, plus per-tag speaker embeddings."""

    window: Window
    tokens: tuple[Token, ...]
    annotation: WindowAnnotation
    embeddings: dict[int, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TrainingSample:
    window: Window
    tokens: tuple[Token, ...]
    annotation: WindowAnnotation
    prompt_mode: PromptMode | None


def draw_prompt_mode(rng: np.random.Generator, p_prev: float = 0.5, p_od: float = 0.1) -> PromptMode | None:
    """Mutually exclusive draw: ``prev`` with ``p_prev``, ``OD`` with ``p_od``."""
    u = rng.random()
    if u < p_prev:
        return PromptMode.PREV
    if u < p_prev + p_od:
        return PromptMode.OD
    return None


def sample_training_window(
    timeline: RecordingTimeline,
    cfg: VocabConfig,
    rng: np.random.Generator,
    window_length: float = 20.0,
    max_retries: int = 20,
) -> TrainingSample:
    if timeline.duration < window_length:
        raise ValueError("recording shorter than the training window")
    for _ in range(max_retries):
        onset = float(rng.uniform(0.0, timeline.duration - window_length))
        mode = draw_prompt_mode(rng)
        try:
            tokens, ann = build_sot_target(timeline, onset, window_length, cfg)
        except CapacityError:
            continue
        return TrainingSample(Window(0, onset, window_length), tokens, ann, mode)
    raise CapacityError(f"no window with at most {cfg.max_local_speakers} speakers after {max_retries} draws")


def hypothesis_silences(annotation: WindowAnnotation) -> list[tuple[float, float]]:
    """Silence inside the window according to a decoded local diarization."""
    spans = [(on, off) for _, on, off in annotation.spans()]
    out: list[tuple[float, float]] = []
    for a, b, c in coverage_pieces(spans, annotation.window_onset, annotation.window_end):
        if c:
            continue
        if out and abs(out[-1][1] - a) < 1e-9:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def next_window(
    current: Window,
    annotation: WindowAnnotation,
    duration: float,
    *,
    window_length: float = 20.0,
    resolution: float = 0.1,
) -> Window | None:
    """Where to place the window after ``current``; ``None`` once the recording is exhausted.

    Without offset truncation the next window starts where this one ends.
    Otherwise it starts inside the rightmost hypothesized silence lying before
    the leftmost offset-truncated entry, or at that entry's onset if there is
    no such silence. The midpoint of the silence is used because the decoded
    boundaries are only accurate to half a timestamp step.
    """
    if current.end >= duration - 1e-6:
        return None
    w0 = current.onset
    truncated = [
        (w0 if e.onset is None else e.onset)
        for e in annotation.entries
        if e.offset_truncated
    ]
    if not truncated:
        onset = current.end
    else:
        t0 = min(truncated)
        onset = t0
        before = [s for s in hypothesis_silences(annotation) if s[1] <= t0 + 1e-9]
        if before:
            s, e = before[-1]
            mid = 0.5 * (s + e)
            if mid >= w0 + resolution - 1e-9:
                onset = mid
            elif w0 + resolution < e:
                onset = w0 + resolution
        onset = max(onset, w0 + resolution)
    onset = round(onset, 6)
    if onset >= duration - 1e-6:
        return None
    return Window(current.index + 1, onset, round(min(window_length, duration - onset), 6))


def first_window(duration: float, window_length: float = 20.0) -> Window | None:
    if duration <= 1e-6:
        return None
    return Window(0, 0.0, round(min(window_length, duration), 6))
