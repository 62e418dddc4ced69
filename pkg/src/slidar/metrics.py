"""Collar-free DER with SC/MS/FA breakdown, and cpWER."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .stitching import GlobalDast
from .timeline import DEFAULT_FRAME_STEP, RecordingTimeline, frame_count, intervals_to_activity

Annotated = Union[RecordingTimeline, GlobalDast]


class EmptyReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class DerReport:
    """Percentages of scored reference speech time (overlap counted per speaker)."""

    speaker_confusion: float
    missed_speech: float
    false_alarm: float
    der: float
    scored_time: float
    mapping: dict = field(default_factory=dict, compare=False)

    def row(self) -> str:
        return f"{self.speaker_confusion:.2f} / {self.missed_speech:.2f} / {self.false_alarm:.2f} / {self.der:.2f}"


@dataclass(frozen=True)
class CpWerReport:
    cpwer: float
    errors: int
    reference_words: int
    assignment: list = field(default_factory=list)
    reference_speakers: tuple = ()
    hypothesis_speakers: tuple = ()
    cost_matrix: list = field(default_factory=list)


def _intervals(obj) -> dict[str, list[tuple[float, float]]]:
    if isinstance(obj, (RecordingTimeline, GlobalDast)):
        return obj.speaker_intervals()
    return {k: list(v) for k, v in obj.items()}


def der(
    reference: Annotated | Mapping[str, Sequence[tuple[float, float]]],
    hypothesis: Annotated | Mapping[str, Sequence[tuple[float, float]]],
    frame_step: float = DEFAULT_FRAME_STEP,
    duration: float | None = None,
) -> DerReport:
    ref = _intervals(reference)
    hyp = _intervals(hypothesis)
    if duration is None:
        duration = getattr(reference, "duration", 0.0)
    end = max([duration] + [off for v in (*ref.values(), *hyp.values()) for _, off in v])
    n = frame_count(end, frame_step)
    ref_spk, R = intervals_to_activity(ref, n, frame_step)
    hyp_spk, H = intervals_to_activity(hyp, n, frame_step)
    nr = R.sum(0)
    total = int(nr.sum())
    if total == 0:
        raise EmptyReferenceError("empty reference")
    nh = H.sum(0)
    mapping = {}
    correct = 0
    if len(ref_spk) and len(hyp_spk):
        co = R.astype(np.int64) @ H.T.astype(np.int64)
        rows, cols = linear_sum_assignment(co, maximize=True)
        correct = int(co[rows, cols].sum())
        mapping = {ref_spk[r]: hyp_spk[c] for r, c in zip(rows, cols)}
    miss = int(np.maximum(nr - nh, 0).sum())
    fa = int(np.maximum(nh - nr, 0).sum())
    conf = int(np.minimum(nr, nh).sum()) - correct
    pct = 100.0 / total
    return DerReport(conf * pct, miss * pct, fa * pct, (conf + miss + fa) * pct, total * frame_step, mapping)


_PUNCT = re.compile(f"[{re.escape(string.punctuation.replace(chr(39), ''))}]")


def normalize_words(words: Sequence[str], enabled: bool = True) -> list[str]:
    """Lowercase, strip punctuation (apostrophes kept) and drop empty words."""
    if not enabled:
        return list(words)
    out = []
    for w in words:
        w = _PUNCT.sub("", w.lower()).strip()
        out.extend(w.split())
    return out


def word_streams(obj: Annotated, normalize: bool = True) -> dict[str, list[str]]:
    """Per speaker, all words of the speaker's utterances in onset order."""
    streams: dict[str, list[str]] = {}
    utts = sorted(obj.utterances, key=lambda u: (u.onset, u.offset))
    for u in utts:
        words = [w.text for w in u.words] if isinstance(obj, RecordingTimeline) else list(u.words)
        streams.setdefault(u.speaker, []).extend(normalize_words(words, normalize))
    return streams


def levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    """Word edit distance with unit substitution/insertion/deletion costs."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    vocab: dict[str, int] = {}
    ai = [vocab.setdefault(w, len(vocab)) for w in a]
    bi = np.array([vocab.setdefault(w, len(vocab)) for w in b])
    m = len(bi)
    ramp = np.arange(m + 1)
    prev = ramp.copy()
    for i, x in enumerate(ai, 1):
        best = np.minimum(prev[:-1] + (bi != x), prev[1:] + 1)
        cur = np.concatenate(([i], best))
        # insertions propagate left to right
        prev = np.minimum.accumulate(cur - ramp) + ramp
    return int(prev[m])


def cpwer(reference: Annotated, hypothesis: Annotated, normalize: bool = True) -> CpWerReport:
    ref = word_streams(reference, normalize)
    hyp = word_streams(hypothesis, normalize)
    if not ref:
        raise EmptyReferenceError("cpWER needs at least one reference speaker")
    rs, hs = tuple(ref), tuple(hyp)
    k = max(len(rs), len(hs))
    cost = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(k):
            r = ref[rs[i]] if i < len(rs) else []
            h = hyp[hs[j]] if j < len(hs) else []
            cost[i, j] = levenshtein(r, h)
    rows, cols = linear_sum_assignment(cost)
    errors = int(cost[rows, cols].sum())
    n_ref = sum(len(v) for v in ref.values())
    assignment = []
    for i, j in zip(rows, cols):
        assignment.append({
            "reference": rs[i] if i < len(rs) else None,
            "hypothesis": hs[j] if j < len(hs) else None,
            "errors": int(cost[i, j]),
            "reference_words": len(ref[rs[i]]) if i < len(rs) else 0,
        })
    return CpWerReport(
        100.0 * errors / n_ref if n_ref else (0.0 if errors == 0 else float("inf")),
        errors,
        n_ref,
        assignment,
        rs,
        hs,
        cost.tolist(),
    )
