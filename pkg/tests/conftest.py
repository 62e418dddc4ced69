from __future__ import annotations

import pytest

from slidar.timeline import RecordingTimeline, Utterance
from slidar.tokens import Lexicon, VocabConfig

WORDS = ("hello", "world", "yes", "no", "maybe", "remote", "control", "a", "bcd")


@pytest.fixture
def vocab() -> VocabConfig:
    return VocabConfig(lexicon=Lexicon.from_words(WORDS))


def make_timeline(rows, duration=60.0, rec="toy") -> RecordingTimeline:
    """rows: (speaker, text, onset, offset)"""
    return RecordingTimeline(rec, duration, tuple(Utterance.from_text(s, t, a, b) for s, t, a, b in rows))


@pytest.fixture
def fig1_timeline() -> RecordingTimeline:
    # two speakers, B's second utterance crosses a 20 s window end, silence gap 9.0-10.0
    return make_timeline([
        ("A", "hello world", 1.0, 4.0),
        ("B", "yes no", 3.5, 6.0),
        ("A", "maybe", 6.0, 9.0),
        ("B", "remote control yes", 10.0, 24.0),
        ("A", "no", 25.0, 27.0),
    ], duration=40.0)
