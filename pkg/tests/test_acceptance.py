"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import itertools
import time

import numpy as np
import pytest

from slidar.clustering import ClusteringConfig, derive_constraints
from slidar.decoding import BeamConfig, BeamDecoder, RandomLogitModel, log_softmax
from slidar.embeddings import SpeakerDictionary, extract_local_embeddings, speaker_loss, time_average
from slidar.metrics import cpwer, der
from slidar.pipeline import PipelineConfig, make_oracle, run_pipeline
from slidar.simulate import MeetingSpec, simulate
from slidar.stitching import GlobalDast, GlobalUtterance
from slidar.tokens import (
    AnnotationEntry,
    GrammarError,
    Lexicon,
    VocabConfig,
    WindowAnnotation,
    build_sot_target,
    parse_sot,
)
from slidar.windowing import LocalDastResult, Window, WindowPlan

from test_clustering import _two_windows
from test_metrics import brute_cpwer, brute_der, random_intervals

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return emit


# 1 -----------------------------------------------------------------------------


def test_criterion_1_grammar_roundtrip(report):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    meetings = [simulate(MeetingSpec(n_speakers=int(3 + s % 3), duration=900, seed=100 + s)).timeline
                for s in range(10)]
    words = sorted({w.text for t in meetings for u in t.utterances for w in u.words})
    cfg = VocabConfig(lexicon=Lexicon.from_words(words))
    failures = 0
    for i in range(10_000):
        t = meetings[i % len(meetings)]
        w0 = round(float(rng.uniform(0, t.duration - 20.0)), 3)
        tokens, ann = build_sot_target(t, w0, 20.0, cfg)
        try:
            parsed = parse_sot(tokens, w0, cfg, 20.0)
        except GrammarError:
            failures += 1
            continue
        on_grid = all(
            abs((x - w0) - 0.1 * round((x - w0) / 0.1)) < 1e-6
            for e in parsed.entries for x in (e.onset, e.offset) if x is not None
        )
        if parsed != ann or not on_grid:
            failures += 1
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 30
    report(1, ok, f"10^4 windows, {failures} failures, {elapsed:.1f} s (limit 30 s)")
    assert ok


# 2 -----------------------------------------------------------------------------


class _BiasedRandom(RandomLogitModel):
    """Random logits with a penalty on <|eos|> so rollouts run into the token budget."""

    def __init__(self, vocab_size, seed, eos_penalty):
        super().__init__(vocab_size, seed)
        self.eos_penalty = eos_penalty

    def score_batch(self, window, prompt, prefixes):
        x = self.scale * self.rng.standard_normal((len(prefixes), self.vocab_size))
        x[:, 0] -= self.eos_penalty
        return log_softmax(x)


def test_criterion_2_decoder_fuzz(report):
    start = time.perf_counter()
    vocabs = [
        VocabConfig(lexicon=Lexicon.from_words(["yes", "no", "hello"])),
        VocabConfig(time_resolution=0.5, max_window=5.0, max_local_speakers=3, lexicon=Lexicon(("▁a", "▁b", "c"))),
        VocabConfig(time_resolution=1.0, max_window=2.0, max_local_speakers=1, lexicon=Lexicon(("▁a",))),
    ]
    rng = np.random.default_rng(2)
    failures = 0
    n = 100_000
    decoders = {}
    models = []
    for vi, cfg in enumerate(vocabs):
        for penalty in (0.0, 4.0):
            models.append((vi, _BiasedRandom(cfg.size, int(rng.integers(1 << 30)), penalty)))
    for i in range(n):
        vi, model = models[i % len(models)]
        beam = (1, 1, 1, 2, 4)[i % 5]
        max_tokens = int(rng.integers(2, 48))
        key = (vi, beam, max_tokens)
        dec = decoders.get(key)
        if dec is None:
            dec = decoders[key] = BeamDecoder(vocabs[vi], BeamConfig(beam_size=beam, max_tokens=max_tokens))
        out = dec.decode(model, Window(0, 0.0, vocabs[vi].max_window))
        try:
            parse_sot(out, 0.0, vocabs[vi])
            if len(out) > max_tokens:
                failures += 1
        except GrammarError:
            failures += 1
    elapsed = time.perf_counter() - start
    ok = failures == 0
    report(2, ok, f"{n} random-logit rollouts, {failures} grammar failures, {elapsed:.1f} s")
    assert ok


# 3 and 4 ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def zero_noise_runs():
    start = time.perf_counter()
    runs = []
    config = PipelineConfig()
    for seed in range(20):
        m = simulate(MeetingSpec(n_speakers=4, duration=1800.0, overlap_prob=0.15, seed=seed))
        model, vocab = make_oracle(m.timeline, m.centroids, config)
        runs.append((m.timeline, run_pipeline(m.timeline, model, config, vocab, reference=m.timeline)))
    return runs, time.perf_counter() - start


def test_criterion_3_zero_noise_end_to_end(zero_noise_runs, report):
    runs, elapsed = zero_noise_runs
    cp = [r.cpwer.cpwer for _, r in runs]
    ders = [r.der.der for _, r in runs]
    ok = all(c == 0.0 for c in cp) and max(ders) <= 2.0 and elapsed < 300
    report(3, ok, f"20 meetings x 30 min: max cpWER {max(cp):.2f}%, DER {min(ders):.2f}-{max(ders):.2f}% "
                  f"(limit 2.0), {elapsed:.1f} s (limit 300 s)")
    assert ok


def test_criterion_4_windowing_invariant(zero_noise_runs, report):
    runs, _ = zero_noise_runs
    inside = 0
    min_hop = np.inf
    uncovered = 0
    for timeline, res in runs:
        for w in res.plan:
            inside += sum(1 for u in timeline.utterances if u.onset + 1e-9 < w.onset < u.offset - 1e-9)
        onsets = [w.onset for w in res.plan]
        if len(onsets) > 1:
            min_hop = min(min_hop, min(np.diff(onsets)))
        uncovered += not res.plan.covers(timeline.duration)
    ok = inside == 0 and min_hop >= 0.1 - 1e-9 and uncovered == 0
    report(4, ok, f"{inside} onsets inside utterances, min advance {min_hop:.2f} s, {uncovered} uncovered recordings")
    assert ok


# 5 -----------------------------------------------------------------------------


def test_criterion_5_time_average_oracle(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    changed = 0
    for _ in range(1000):
        n, d = int(rng.integers(1, 300)), int(rng.integers(1, 12))
        h = rng.standard_normal((n, d)) * rng.uniform(0.1, 10)
        mask = rng.random(n) < rng.uniform(0.05, 1)
        if not mask.any():
            mask[rng.integers(n)] = True
        want = (h * mask[:, None]).sum(0) / mask.sum()
        got = time_average(h, np.flatnonzero(mask))
        worst = max(worst, float(np.max(np.abs(got - want))))
    # overlap-only frames: perturbing them leaves every embedding unchanged
    for _ in range(200):
        entries = []
        for tag in range(int(rng.integers(1, 4))):
            on = float(rng.uniform(0, 15))
            entries.append(AnnotationEntry(tag, round(on, 1), round(on + float(rng.uniform(0.5, 5)), 1), ("x",)))
        entries.sort(key=lambda e: e.onset)
        ann = WindowAnnotation(0.0, 20.0, tuple(entries))
        h = rng.standard_normal((2000, 4))
        base = extract_local_embeddings(0, ann, h)
        count = np.zeros(2000, int)
        for _, on, off in ann.spans():
            count[int(round(on * 100)):int(round(off * 100))] += 1
        h2 = h.copy()
        ov = count >= 2
        h2[ov] += 50 * rng.standard_normal((int(ov.sum()), 4))
        again = extract_local_embeddings(0, ann, h2)
        changed += set(base) != set(again) or any(not np.array_equal(base[t].vector, again[t].vector) for t in base)
    ok = worst <= 1e-12 and changed == 0
    report(5, ok, f"10^3 cases, max abs deviation {worst:.1e} (limit 1e-12); {changed}/200 perturbations changed an embedding")
    assert ok


# 6 -----------------------------------------------------------------------------


def test_criterion_6_speaker_loss_gradient(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        n, k, dim = int(rng.integers(1, 6)), int(rng.integers(2, 8)), int(rng.integers(2, 10))
        spk = tuple(f"s{i}" for i in range(k))
        d = SpeakerDictionary(spk, rng.standard_normal((k, dim)), float(rng.uniform(0.3, 3)))
        e = rng.standard_normal((n, dim))
        targets = [spk[i] for i in rng.integers(0, k, n)]
        g = speaker_loss(e, targets, d, return_grad=True).grad_embeddings
        # 1e-4 balances O(h^2) truncation against roundoff on saturated softmaxes
        h = 1e-4
        num = np.zeros_like(e)
        for idx in np.ndindex(e.shape):
            ep, em = e.copy(), e.copy()
            ep[idx] += h
            em[idx] -= h
            num[idx] = (speaker_loss(ep, targets, d) - speaker_loss(em, targets, d)) / (2 * h)
        rel = np.linalg.norm(g - num) / max(np.linalg.norm(g), np.linalg.norm(num), 1e-12)
        worst = max(worst, float(rel))
    ok = worst <= 1e-5
    report(6, ok, f"100 instances, worst relative error {worst:.1e} (limit 1e-5)")
    assert ok


# 7 -----------------------------------------------------------------------------


def _true_speakers(timeline, res):
    """(window, tag) -> reference speaker, matched through exact decoded spans."""
    out = {}
    for r in res.results:
        for e in r.annotation.entries:
            on = r.window.onset if e.onset is None else e.onset
            for u in timeline.intersecting(on, on + 0.2):
                if abs(max(u.onset, r.window.onset) - on) <= 0.051:
                    out.setdefault((r.window.index, e.local_tag), u.speaker)
                    break
    return out


def test_criterion_7_clustering(report):
    recovered = 0
    violations = 0
    config = PipelineConfig.from_dict({"oracle": {"embedding_noise_std": 0.1}})
    for seed in range(100):
        m = simulate(MeetingSpec(n_speakers=4, duration=300.0, seed=1000 + seed, max_centroid_cosine=0.4))
        model, vocab = make_oracle(m.timeline, m.centroids, config)
        res = run_pipeline(m.timeline, model, config, vocab)
        truth = _true_speakers(m.timeline, res)
        mapping = res.clustering.mapping
        constraints = derive_constraints(res.plan, res.results, config.clustering)
        violations += sum(mapping[a] == mapping[b] for a, b in constraints if a in mapping and b in mapping)
        pairs_ok = all((mapping[a] == mapping[b]) == (truth[a] == truth[b])
                       for a, b in itertools.combinations(mapping, 2))
        if res.clustering.n_clusters == len(m.timeline.speakers) and pairs_ok:
            recovered += 1
    boundary = {}
    for overlap in (4.9, 5.1):
        plan, results = _two_windows(overlap)
        c = derive_constraints(plan, results, ClusteringConfig())
        boundary[overlap] = sum(1 for a, b in c if a[0] != b[0])
    ok = violations == 0 and recovered >= 95 and boundary[4.9] == 0 and boundary[5.1] > 0
    report(7, ok, f"{recovered}/100 partitions recovered (need 95), {violations} cannot-link violations, "
                  f"cross-window pairs at 4.9 s: {boundary[4.9]}, at 5.1 s: {boundary[5.1]}")
    assert ok


# 8 -----------------------------------------------------------------------------


def test_criterion_8_metric_oracles(report):
    rng = np.random.default_rng(8)
    cp_bad = 0
    words = list("abcdefg")
    for _ in range(500):
        def streams(k):
            return {f"s{i}": [words[j] for j in rng.integers(0, len(words), rng.integers(1, 9))] for i in range(k)}
        ref, hyp = streams(int(rng.integers(1, 5))), streams(int(rng.integers(1, 5)))
        R = GlobalDast("r", 100, tuple(GlobalUtterance(s, tuple(w), i, i + 1, 0) for i, (s, w) in enumerate(ref.items())))
        H = GlobalDast("r", 100, tuple(GlobalUtterance(s, tuple(w), i, i + 1, 0) for i, (s, w) in enumerate(hyp.items())))
        cp_bad += cpwer(R, H).errors != brute_cpwer(ref, hyp)
    der_bad = 0
    identity_bad = 0
    n = 60
    done = 0
    while done < 500:
        ref = random_intervals(rng, int(rng.integers(2, 4)), n)
        if not any(ref.values()):
            continue
        hyp = random_intervals(rng, int(rng.integers(2, 4)), n)
        r = der(ref, hyp, 0.01, n * 0.01)
        der_bad += abs(r.der - brute_der(ref, hyp, n)) > 1e-9
        identity_bad += abs(r.speaker_confusion + r.missed_speech + r.false_alarm - r.der) > 1e-9
        done += 1
    ok = cp_bad == 0 and der_bad == 0 and identity_bad == 0
    report(8, ok, f"cpWER mismatches {cp_bad}/500, DER mismatches {der_bad}/500, identity failures {identity_bad}")
    assert ok


# 9 -----------------------------------------------------------------------------


def test_criterion_9_robustness_trend(report):
    monotone_bad = 0
    od_wins = 0
    pairs = 0
    seeds = range(20)
    for seed in seeds:
        m = simulate(MeetingSpec(n_speakers=4, duration=300.0, seed=2000 + seed))
        by_mode = {}
        for prompt in ("none", "od"):
            scores = []
            for p in (0.0, 0.05, 0.1):
                config = PipelineConfig.from_dict({
                    "prompt": prompt,
                    "oracle": {"word_sub_prob": p, "time_jitter_std": 0.1, "tag_swap_prob": 0.05,
                               "embedding_noise_std": 0.1, "seed": seed},
                })
                model, vocab = make_oracle(m.timeline, m.centroids, config)
                res = run_pipeline(m.timeline, model, config, vocab, reference=m.timeline)
                scores.append(res.cpwer.cpwer)
            monotone_bad += any(b < a - 1e-12 for a, b in zip(scores, scores[1:]))
            by_mode[prompt] = scores
        for a, b in zip(by_mode["od"], by_mode["none"]):
            pairs += 1
            od_wins += a <= b + 1e-12
    frac = od_wins / pairs
    ok = monotone_bad == 0 and frac >= 0.9
    report(9, ok, f"{monotone_bad} non-monotone seed/mode series of {2 * len(seeds)}; "
                  f"OD <= unprompted in {od_wins}/{pairs} paired runs ({100 * frac:.0f}%, need 90%)")
    assert ok
