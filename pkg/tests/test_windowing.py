from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidar.timeline import silence_segments
from slidar.tokens import NOSPEECH, EOS, AnnotationEntry, PromptMode, VocabConfig, WindowAnnotation
from slidar.windowing import (
    Window,
    WindowPlan,
    draw_prompt_mode,
    first_window,
    hypothesis_silences,
    next_window,
    sample_training_window,
)

from conftest import make_timeline


def ann(w0, entries, length=20.0):
    return WindowAnnotation(w0, length, tuple(AnnotationEntry(t, on, off, ("x",)) for t, on, off in entries))


def test_no_truncation_advances_by_window():
    a = ann(0.0, [(0, 1.0, 5.0)])
    assert next_window(Window(0, 0.0, 20.0), a, 100.0) == Window(1, 20.0, 20.0)


def test_last_window_shrinks_and_plan_ends():
    w = next_window(Window(0, 0.0, 20.0), ann(0.0, []), 30.0)
    assert w == Window(1, 20.0, 10.0)
    assert next_window(w, ann(20.0, [], 10.0), 30.0) is None


def test_fig1_restart_in_silence():
    # A: [1,4), B: [3.5,6), A: [6,9), silence [9,10), B: [10, trunc)
    a = ann(0.0, [(0, 1.0, 4.0), (1, 3.5, 6.0), (0, 6.0, 9.0), (1, 10.0, None)])
    assert hypothesis_silences(a) == [(0.0, 1.0), (9.0, 10.0)]
    nxt = next_window(Window(0, 0.0, 20.0), a, 100.0)
    assert nxt.onset == 9.5 and nxt.index == 1


def test_silence_after_truncated_onset_is_ignored():
    # the only silence lies after the truncated entry's onset
    a = ann(0.0, [(0, 0.0, 12.0), (1, 11.0, None), (0, 15.0, 17.0)])
    nxt = next_window(Window(0, 0.0, 20.0), a, 100.0)
    assert nxt.onset == 11.0


def test_continuous_speech_falls_back_to_t0():
    a = ann(40.0, [(0, 40.0, 52.0), (1, 51.0, None)])
    nxt = next_window(Window(2, 40.0, 20.0), a, 100.0)
    assert nxt.onset == 51.0


def test_progress_at_least_one_step():
    a = ann(40.0, [(0, 40.0, None)])
    nxt = next_window(Window(2, 40.0, 20.0), a, 100.0)
    assert nxt.onset == pytest.approx(40.1)


entry_st = st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 200), st.integers(1, 80), st.booleans()), max_size=8
)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 500), entry_st)
def test_progress_property(w0, raw):
    w0 = round(w0, 1)
    entries = []
    for tag, on, dur, trunc in sorted(raw, key=lambda r: r[1]):
        on_t = w0 + on * 0.1
        off = None if trunc or on + dur > 200 else w0 + (on + dur) * 0.1
        entries.append((tag, on_t, off))
    a = ann(w0, entries)
    cur = Window(0, w0, 20.0)
    nxt = next_window(cur, a, 10_000.0)
    assert nxt.onset >= w0 + 0.1 - 1e-9
    assert nxt.onset <= cur.end + 1e-9
    if any(off is None for *_, off in entries):
        t0 = min(on for _, on, off in entries if off is None)
        assert nxt.onset <= max(t0, w0 + 0.1) + 1e-9


def test_plan_lines_and_coverage():
    plan = WindowPlan()
    plan.append(Window(0, 0.0, 20.0))
    plan.append(Window(1, 9.5, 20.0))
    plan.append(Window(2, 29.5, 10.5))
    assert plan.overlaps == [0.0, 10.5, 0.0]
    assert plan.lines()[1] == "1 9.500 20.000 10.500"
    assert plan.covers(40.0)
    assert not plan.covers(41.0)
    assert first_window(0.0) is None
    assert first_window(7.0) == Window(0, 0.0, 7.0)


def test_prompt_mode_frequencies():
    rng = np.random.default_rng(0)
    draws = [draw_prompt_mode(rng) for _ in range(10_000)]
    assert abs(draws.count(PromptMode.PREV) / 1e4 - 0.5) < 0.02
    assert abs(draws.count(PromptMode.OD) / 1e4 - 0.1) < 0.01


def test_training_window_sampling(fig1_timeline, vocab):
    a = sample_training_window(fig1_timeline, vocab, np.random.default_rng(3))
    b = sample_training_window(fig1_timeline, vocab, np.random.default_rng(3))
    assert a == b
    silent = make_timeline([("A", "yes", 0.0, 1.0)], duration=100.0)
    s = sample_training_window(silent, vocab, np.random.default_rng(1))
    if s.window.onset > 1.0:
        assert s.tokens == (NOSPEECH, EOS)
    with pytest.raises(ValueError):
        sample_training_window(make_timeline([], duration=10), vocab, np.random.default_rng(0))
