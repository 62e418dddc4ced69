"""Symbolic meeting simulator: turn-taking timelines plus speaker centroids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .timeline import RecordingTimeline, Utterance

DEFAULT_LEXICON = tuple("""
about after again all also always and another any are around back because been before
being both but call came can case come could day did different does doing done down each
early enough even every fact feel few find first for from get give going good great group
had has have here high how idea into just keep kind know last later least left less let
like little long look made make many maybe mean might more most much must need never new
next night not now number off often old only open other our out over part people place
point problem put quite rather really right said same saw say see seem should show side
since small some something start still such sure take talk tell than that then there these
they thing think this those though three through time today together too try turn two
under until use very want was way well went were what when where which while why will with
work world would yes yet you your remote control design button battery screen colour
""".split())


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeetingSpec:
    n_speakers: int = 4
    duration: float = 600.0
    mean_utterance: float = 4.0
    min_utterance: float = 0.5
    max_utterance: float = 8.0
    mean_pause: float = 0.6
    min_pause: float = 0.3
    overlap_prob: float = 0.15
    mean_overlap: float = 0.6
    word_duration: float = 0.35
    lexicon: tuple[str, ...] = field(default=DEFAULT_LEXICON, repr=False)
    embedding_dim: int = 16
    max_centroid_cosine: float = 0.4
    seed: int = 0
    recording_id: str | None = None

    def __post_init__(self) -> None:
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be >= 1")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0.0 <= self.overlap_prob <= 1.0:
            raise ValueError("overlap_prob must lie in [0, 1]")
        if not (0 < self.min_utterance <= self.max_utterance and self.mean_utterance >= self.min_utterance):
            raise ValueError("inconsistent utterance length settings")
        if self.min_pause < 0 or self.mean_pause < 0:
            raise ValueError("pauses must be non-negative")
        if not self.lexicon:
            raise ValueError("empty lexicon")


@dataclass(frozen=True)
class SimulatedMeeting:
    timeline: RecordingTimeline
    centroids: dict[str, tuple[float, ...]]


def speaker_names(n: int) -> list[str]:
    return [f"P{i + 1:02d}" for i in range(n)]


def sample_centroids(
    names: list[str], dim: int, max_cosine: float, rng: np.random.Generator, max_tries: int = 1000
) -> dict[str, tuple[float, ...]]:
    """Unit vectors, uniform on the sphere, resampled until all pairwise cosines are below ``max_cosine``."""
    for _ in range(max_tries):
        c = rng.standard_normal((len(names), dim))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        g = c @ c.T
        np.fill_diagonal(g, -1.0)
        if len(names) < 2 or g.max() < max_cosine:
            return {n: tuple(float(x) for x in row) for n, row in zip(names, c)}
    raise SimulationError("unsatisfiable centroid separation")


def simulate(spec: MeetingSpec) -> SimulatedMeeting:
    """Sample a meeting.

    Speakers alternate at random. Each utterance either starts after the
    current end of speech plus a pause, or, with ``overlap_prob``, is pulled
    back before the previous utterance's end by at most half of either
    utterance. Overlaps are pairwise: an utterance that overlaps its
    predecessor is never itself overlapped, so every stretch of continuous
    speech is at most two utterances long and silences last at least
    ``min_pause``. Word times come from the character-count rule.
    """
    rng = np.random.default_rng([spec.seed, 1])
    names = speaker_names(spec.n_speakers)
    utts: list[Utterance] = []
    own_end = {n: -np.inf for n in names}
    frontier = 0.0
    prev: Utterance | None = None
    prev_overlapped = False
    while True:
        choices = [n for n in names if prev is None or n != prev.speaker] or names
        spk = choices[int(rng.integers(len(choices)))]
        dur = spec.min_utterance + rng.exponential(spec.mean_utterance - spec.min_utterance)
        dur = min(dur, spec.max_utterance)
        pause = spec.min_pause + rng.exponential(spec.mean_pause)
        overlap_draw = rng.random()
        overlap_amount = rng.exponential(spec.mean_overlap)
        onset = max(frontier + pause, own_end[spk] + spec.min_pause)
        overlapped = False
        if prev is not None and not prev_overlapped and overlap_draw < spec.overlap_prob:
            amount = min(overlap_amount, 0.5 * prev.duration, 0.5 * dur)
            pulled = prev.offset - amount
            if pulled >= own_end[spk] + spec.min_pause and amount >= 0.01:
                onset, overlapped = pulled, True
        onset = round(onset, 3)
        offset = round(onset + dur, 3)
        if offset > spec.duration:
            break
        n_words = max(1, int(round(dur / spec.word_duration)))
        words = [spec.lexicon[i] for i in rng.integers(len(spec.lexicon), size=n_words)]
        u = Utterance.from_text(spk, " ".join(words), onset, offset)
        utts.append(u)
        own_end[spk] = offset
        frontier = max(frontier, offset)
        prev = u
        prev_overlapped = overlapped
    rec = spec.recording_id or f"sim{spec.seed:04d}"
    timeline = RecordingTimeline(rec, spec.duration, tuple(utts))
    crng = np.random.default_rng([spec.seed, 2])
    centroids = sample_centroids(names, spec.embedding_dim, spec.max_centroid_cosine, crng)
    return SimulatedMeeting(timeline, centroids)
