from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slidar.metrics import EmptyReferenceError, cpwer, der, levenshtein, normalize_words
from slidar.stitching import GlobalDast, GlobalUtterance
from slidar.timeline import RecordingTimeline, Utterance

from conftest import make_timeline


def brute_der(ref, hyp, n, step=0.01):
    """Enumerate every speaker mapping and count frames directly."""
    def frames(iv):
        out = {}
        for spk, spans in iv.items():
            s = set()
            for a, b in spans:
                s |= {f for f in range(n) if a <= f * step + 1e-9 < b}
            out[spk] = s
        return out
    R, H = frames(ref), frames(hyp)
    rs, hs = list(R), list(H)
    total = sum(len(v) for v in R.values())
    best = None
    k = max(len(rs), len(hs))
    for perm in itertools.permutations(range(k)):
        err = 0
        for f in range(n):
            nr = sum(f in R[s] for s in rs)
            nh = sum(f in H[s] for s in hs)
            correct = sum(1 for i, j in enumerate(perm) if i < len(rs) and j < len(hs)
                          and f in R[rs[i]] and f in H[hs[j]])
            err += max(nr, nh) - correct
        best = err if best is None else min(best, err)
    return 100.0 * best / total


def random_intervals(rng, n_spk, n, step=0.01):
    out = {}
    for s in range(n_spk):
        spans = []
        t = 0
        while True:
            t += int(rng.integers(0, 15))
            d = int(rng.integers(1, 15))
            if t + d > n:
                break
            spans.append((t * step, (t + d) * step))
            t += d
        out[f"s{s}"] = spans
    return out


def test_der_examples():
    ref = make_timeline([("A", "x", 0, 2), ("B", "y", 1, 3)], duration=4)
    r = der(ref, GlobalDast.from_timeline(ref))
    assert (r.speaker_confusion, r.missed_speech, r.false_alarm, r.der) == (0, 0, 0, 0)
    r = der(ref, GlobalDast("r", 4, ()))
    assert r.missed_speech == 100 and r.der == 100 and r.false_alarm == 0 and r.speaker_confusion == 0
    with pytest.raises(EmptyReferenceError, match="empty reference"):
        der(RecordingTimeline("r", 5), ref)
    assert r.row() == "0.00 / 100.00 / 0.00 / 100.00"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1 << 30))
def test_der_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 80
    ref = random_intervals(rng, int(rng.integers(2, 4)), n)
    hyp = random_intervals(rng, int(rng.integers(1, 4)), n)
    if not any(ref.values()):
        return
    r = der(ref, hyp, 0.01, n * 0.01)
    assert r.der == pytest.approx(brute_der(ref, hyp, n), abs=1e-9)
    assert r.der == pytest.approx(r.speaker_confusion + r.missed_speech + r.false_alarm, abs=1e-9)
    assert min(r.speaker_confusion, r.missed_speech, r.false_alarm) >= 0
    # relabelling either side changes nothing
    r2 = der({k + "x": v for k, v in reversed(list(ref.items()))}, {k[::-1]: v for k, v in hyp.items()}, 0.01, n * 0.01)
    assert r2.der == pytest.approx(r.der)


def test_spurious_hypothesis_in_silence_raises_fa():
    ref = {"A": [(0.0, 1.0)]}
    hyp = {"x": [(0.0, 1.0)]}
    base = der(ref, hyp, 0.01, 3.0)
    more = der(ref, {"x": [(0.0, 1.0)], "y": [(2.0, 2.5)]}, 0.01, 3.0)
    assert more.false_alarm > base.false_alarm and more.der >= base.der


def test_normalization():
    assert normalize_words(["Hello,", "World!", "don't", "--"]) == ["hello", "world", "don't"]
    assert normalize_words(["Hello,"], enabled=False) == ["Hello,"]


def naive_lev(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


@given(st.lists(st.sampled_from("abcd"), max_size=15), st.lists(st.sampled_from("abcd"), max_size=15))
def test_levenshtein_matches_dp(a, b):
    assert levenshtein(a, b) == naive_lev(a, b)


def dast(rows, dur=100.0):
    return GlobalDast("r", dur, tuple(GlobalUtterance(s, tuple(t.split()), a, b, 0) for s, t, a, b in rows))


def brute_cpwer(ref_streams, hyp_streams):
    rs, hs = list(ref_streams), list(hyp_streams)
    k = max(len(rs), len(hs))
    best = None
    for perm in itertools.permutations(range(k)):
        e = sum(naive_lev(ref_streams[rs[i]] if i < len(rs) else [], hyp_streams[hs[j]] if j < len(hs) else [])
                for i, j in enumerate(perm))
        best = e if best is None else min(best, e)
    return best


def test_cpwer_examples():
    ref = make_timeline([("A", "hello world", 0, 2), ("B", "yes no", 1, 3), ("A", "maybe", 4, 5)], duration=10)
    hyp = dast([("x", "hello world", 0, 2), ("y", "yes no", 1, 3), ("x", "maybe", 4, 5)])
    assert cpwer(ref, hyp).cpwer == 0.0
    drop = dast([("x", "hello world", 0, 2), ("x", "maybe", 4, 5)])
    r = cpwer(ref, drop)
    assert r.errors == 2 and r.reference_words == 5 and r.cpwer == pytest.approx(40.0)
    with pytest.raises(EmptyReferenceError):
        cpwer(RecordingTimeline("r", 1), hyp)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1 << 30))
def test_cpwer_matches_factorial_search(seed):
    rng = np.random.default_rng(seed)
    words = list("abcdef")
    def streams(n):
        return {f"s{i}": [words[j] for j in rng.integers(0, 6, rng.integers(0, 8))] for i in range(n)}
    ref = streams(int(rng.integers(1, 5)))
    hyp = streams(int(rng.integers(1, 5)))
    if not any(ref.values()):
        return
    R = dast([(s, " ".join(w), i, i + 1) for i, (s, w) in enumerate(ref.items()) if w])
    H = dast([(s, " ".join(w), i, i + 1) for i, (s, w) in enumerate(hyp.items()) if w])
    r = cpwer(R, H)
    ref_nz = {k: v for k, v in ref.items() if v}
    hyp_nz = {k: v for k, v in hyp.items() if v}
    assert r.errors == brute_cpwer(ref_nz, hyp_nz)
    perm = dast([("z" + u.speaker, " ".join(u.words), u.onset, u.offset) for u in H.utterances])
    assert cpwer(R, perm).errors == r.errors
