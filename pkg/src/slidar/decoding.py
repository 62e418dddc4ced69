"""Local model contract, grammar-constrained beam search, SOT loss and the oracle model."""

from __future__ import annotations

import abc
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .timeline import RecordingTimeline, frame_count, frame_span
from .tokens import (
    EOS,
    NOSPEECH,
    TRUNC,
    GrammarState,
    Kind,
    MaskBuilder,
    PromptMode,
    Token,
    VocabConfig,
    quantize_time,
)
from .windowing import Window

logger = logging.getLogger(__name__)


class DecodeBudgetError(RuntimeError):
    pass


class LocalModel(abc.ABC):
    """What the pipeline needs from a local diarization-augmented ASR model.

    ``window`` is an opaque handle (here a :class:`Window`); prompts and
    prefixes are tuples of vocabulary ids.
    """

    #: set to False to make the decoder score hypotheses one at a time on one thread
    thread_safe: bool = True
    frame_step: float = 0.01

    @abc.abstractmethod
    def score_step(self, window: Window, prompt: tuple[int, ...], prefix: tuple[int, ...]) -> np.ndarray:
        """Log-probabilities over the vocabulary for the next token."""

    def score_batch(
        self, window: Window, prompt: tuple[int, ...], prefixes: Sequence[tuple[int, ...]]
    ) -> np.ndarray:
        return np.stack([self.score_step(window, prompt, p) for p in prefixes])

    @abc.abstractmethod
    def frame_embeddings(self, window: Window) -> np.ndarray:
        """``(n_frames, dim)`` speaker-discriminative frame features."""


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 10
    max_tokens: int = 1024
    length_penalty: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_tokens < 2:
            raise ValueError("max_tokens must be >= 2")


@dataclass
class _Hyp:
    ids: tuple[int, ...]
    score: float
    state: GrammarState


class BeamDecoder:
    """Beam search that only ever expands grammar-admissible tokens.

    Candidates are also restricted so that every live hypothesis can still be
    completed within ``max_tokens``.
    """

    def __init__(self, vocab: VocabConfig, cfg: BeamConfig = BeamConfig()):
        self.vocab = vocab
        self.cfg = cfg
        self.masks = MaskBuilder(vocab)

    def _score(self, model: LocalModel, window, prompt, prefixes) -> np.ndarray:
        if self.cfg.workers > 1 and model.thread_safe and len(prefixes) > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                rows = list(pool.map(lambda p: model.score_step(window, prompt, p), prefixes))
            return np.stack(rows)
        return model.score_batch(window, prompt, prefixes)

    def decode(self, model: LocalModel, window, prompt: Sequence[Token] = ()) -> tuple[Token, ...]:
        vocab, cfg = self.vocab, self.cfg
        prompt_ids = tuple(vocab.encode(prompt))
        beam = cfg.beam_size
        alpha = cfg.length_penalty

        def norm(h: _Hyp) -> float:
            return h.score / len(h.ids) ** alpha if alpha else h.score

        live = [_Hyp((), 0.0, GrammarState(vocab))]
        finished: list[_Hyp] = []
        for step in range(cfg.max_tokens):
            budget = cfg.max_tokens - step
            logp = self._score(model, window, prompt_ids, [h.ids for h in live])
            mask = np.stack([self.masks(h.state, budget) for h in live])
            scores = np.where(mask, logp + np.array([h.score for h in live])[:, None], -np.inf)
            flat = scores.ravel()
            k = min(2 * beam, flat.size)
            top = np.argpartition(-flat, k - 1)[:k]
            top = top[np.argsort(-flat[top], kind="stable")]
            new_live: list[_Hyp] = []
            V = scores.shape[1]
            for idx in top:
                s = flat[idx]
                if not np.isfinite(s):
                    break
                b, tid = divmod(int(idx), V)
                parent = live[b]
                tok = vocab.id_token(tid)
                hyp = _Hyp(parent.ids + (tid,), float(s), parent.state.advance(tok))
                if tok.kind is Kind.EOS:
                    finished.append(hyp)
                elif len(new_live) < beam:
                    new_live.append(hyp)
            live = new_live
            finished.sort(key=norm, reverse=True)
            del finished[beam:]
            if not live:
                break
            if alpha == 0:
                # scores only decrease, so no live hypothesis can overtake
                if finished and finished[0].score >= live[0].score:
                    break
            elif len(finished) >= beam and norm(live[0]) <= norm(finished[-1]):
                break
        if not finished:
            raise DecodeBudgetError("decode budget exhausted")
        return tuple(vocab.decode_ids(finished[0].ids))


def decode_window(
    model: LocalModel,
    window,
    prompt: Sequence[Token],
    cfg: BeamConfig,
    vocab: VocabConfig,
) -> tuple[Token, ...]:
    return BeamDecoder(vocab, cfg).decode(model, window, prompt)


def sequence_score(model: LocalModel, window, prompt: Sequence[Token], tokens: Sequence[Token], vocab: VocabConfig) -> float:
    prompt_ids = tuple(vocab.encode(prompt))
    ids = vocab.encode(tokens)
    return float(sum(model.score_step(window, prompt_ids, tuple(ids[:i]))[t] for i, t in enumerate(ids)))


def sot_loss(log_probs: np.ndarray, target: Sequence[int]) -> float:
    """Teacher-forced cross-entropy summed over target positions."""
    log_probs = np.asarray(log_probs, dtype=float)
    target = np.asarray(target, dtype=int)
    if log_probs.ndim != 2 or log_probs.shape[0] != target.shape[0]:
        raise ValueError(
            f"length mismatch: {log_probs.shape[0] if log_probs.ndim else 0} positions vs {target.shape[0]} targets"
        )
    return float(-log_probs[np.arange(target.shape[0]), target].sum())


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


class RandomLogitModel(LocalModel):
    """Adversarial model: independent Gaussian logits at every step."""

    def __init__(self, vocab_size: int, seed: int = 0, scale: float = 3.0, dim: int = 8):
        self.vocab_size = vocab_size
        self.rng = np.random.default_rng(seed)
        self.scale = scale
        self.dim = dim

    def score_step(self, window, prompt, prefix) -> np.ndarray:
        return log_softmax(self.scale * self.rng.standard_normal(self.vocab_size))

    def score_batch(self, window, prompt, prefixes) -> np.ndarray:
        return log_softmax(self.scale * self.rng.standard_normal((len(prefixes), self.vocab_size)))

    def frame_embeddings(self, window: Window) -> np.ndarray:
        return self.rng.standard_normal((frame_count(window.length, self.frame_step), self.dim))


class SequenceModel(LocalModel):
    """Deterministic model that follows a fixed id sequence with given confidence."""

    def __init__(self, target: Sequence[int], vocab_size: int, confidence: float = 1.0 - 1e-6, dim: int = 4):
        self.target = tuple(target)
        self.vocab_size = vocab_size
        self.on = math.log(confidence)
        self.off = math.log((1.0 - confidence) / (vocab_size - 1))
        self.dim = dim

    def score_step(self, window, prompt, prefix) -> np.ndarray:
        row = np.full(self.vocab_size, self.off)
        n = len(prefix)
        if n < len(self.target) and prefix == self.target[:n]:
            row[self.target[n]] = self.on
        else:
            row[:] = -math.log(self.vocab_size)
        return row

    def frame_embeddings(self, window: Window) -> np.ndarray:
        return np.zeros((frame_count(window.length, self.frame_step), self.dim))


@dataclass(frozen=True)
class OracleModelConfig:
    word_sub_prob: float = 0.0
    time_jitter_std: float = 0.0
    tag_swap_prob: float = 0.0
    embedding_noise_std: float = 0.0
    centroids: Mapping[str, Sequence[float]] = field(default_factory=dict)
    lexicon: tuple[str, ...] | None = None
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("word_sub_prob", "tag_swap_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.time_jitter_std < 0 or self.embedding_noise_std < 0:
            raise ValueError("noise std must be non-negative")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        for spk, c in self.centroids.items():
            if abs(float(np.linalg.norm(c)) - 1.0) > 1e-6:
                raise ValueError(f"centroid of {spk} is not unit-norm")


@dataclass
class _OracleEntry:
    speaker: str
    trunc_on: bool
    on: int
    trunc_off: bool
    off: int
    words: tuple[str, ...]
    original: str


class OracleModel(LocalModel):
    """Test implementation of the model contract that reads the ground truth.

    All randomness is drawn once per utterance and word at construction, so a
    given utterance is perturbed identically in every window that sees it and
    raising ``word_sub_prob`` only ever adds substitutions.

    With an ``<|OD|>`` prompt the segmentation and speaker attribution come
    from the prompt's oracle diarization, so timestamp jitter and tag swaps do
    not apply; word substitutions still do.
    """

    def __init__(
        self,
        timeline: RecordingTimeline,
        vocab: VocabConfig,
        cfg: OracleModelConfig = OracleModelConfig(),
        frame_step: float = 0.01,
    ):
        self.timeline = timeline
        self.vocab = vocab
        self.cfg = cfg
        self.frame_step = frame_step
        words = cfg.lexicon or tuple(sorted({w.text for u in timeline.utterances for w in u.words}))
        self.lexicon = tuple(words)
        n_utt = len(timeline.utterances)
        rng = np.random.default_rng([cfg.seed, 7919])
        self._index = {id(u): i for i, u in enumerate(timeline.utterances)}
        self._noisy_words = []
        for u in timeline.utterances:
            draws = rng.random(len(u.words))
            picks = rng.integers(0, max(1, len(self.lexicon)), len(u.words))
            out = []
            for w, d, r in zip(u.words, draws, picks):
                if d < cfg.word_sub_prob and self.lexicon:
                    rep = self.lexicon[r]
                    if rep == w.text and len(self.lexicon) > 1:
                        rep = self.lexicon[(r + 1) % len(self.lexicon)]
                    out.append(rep)
                else:
                    out.append(w.text)
            self._noisy_words.append(tuple(out))
        self._jitter = rng.standard_normal((n_utt, 2))
        self._swap = rng.random((n_utt, 2))
        if cfg.centroids:
            dims = {len(c) for c in cfg.centroids.values()}
            if len(dims) != 1:
                raise ValueError("centroids must share one dimension")
            self.dim = dims.pop()
        else:
            self.dim = 1
        self._centroids = {k: np.asarray(v, dtype=float) for k, v in cfg.centroids.items()}
        V = vocab.size
        self._on = math.log(cfg.confidence)
        self._off = math.log((1.0 - cfg.confidence) / (V - 1))
        self._uniform = -math.log(V)
        self._targets: dict[tuple, tuple[int, ...]] = {}

    # -- sequence side ------------------------------------------------------

    def _entries(self, window: Window, od: bool) -> list[_OracleEntry]:
        cfg, vocab = self.cfg, self.vocab
        w0, w1 = window.onset, window.end
        rows = []
        utts = self.timeline.intersecting(w0, w1)
        present = list(dict.fromkeys(u.speaker for u in utts))
        for u in utts:
            i = self._index[id(u)]
            trunc_on = u.onset < w0 - 1e-9
            trunc_off = u.offset > w1 + 1e-9
            noisy = self._noisy_words[i]
            if trunc_on or trunc_off:
                words = tuple(nw for w, nw in zip(u.words, noisy) if w.onset < w1 and w.offset > w0)
            else:
                words = noisy
            if not words:
                continue
            on, off = u.onset, u.offset
            speaker = u.speaker
            if not od:
                on += cfg.time_jitter_std * self._jitter[i, 0]
                off += cfg.time_jitter_std * self._jitter[i, 1]
                others = [s for s in present if s != u.speaker]
                if not trunc_on and others and self._swap[i, 0] < cfg.tag_swap_prob:
                    speaker = others[int(self._swap[i, 1] * len(others))]
            clamp = lambda t: min(max(t, w0), w0 + window.length)
            rows.append(_OracleEntry(
                speaker,
                trunc_on,
                0 if trunc_on else quantize_time(clamp(on), w0, vocab),
                trunc_off,
                0 if trunc_off else quantize_time(clamp(off), w0, vocab),
                words,
                u.speaker,
            ))
        rows.sort(key=lambda r: (0, 0) if r.trunc_on else (1, r.on))
        return self._make_admissible(rows)

    def _make_admissible(self, rows: list[_OracleEntry]) -> list[_OracleEntry]:
        n = self.vocab.max_local_speakers
        tags: dict[str, int] = {}
        closed: set[str] = set()
        last_off: dict[str, int] = {}
        last_on = 0
        out = []
        for r in rows:
            if r.speaker != r.original and (
                r.speaker in closed or (r.speaker not in tags and len(tags) >= n)
            ):
                r.speaker = r.original
            if r.speaker in closed:
                continue
            if r.speaker not in tags:
                if len(tags) >= n:
                    continue
                tags[r.speaker] = len(tags)
            if not r.trunc_on:
                r.on = max(r.on, last_on, last_off.get(r.speaker, 0))
                last_on = r.on
            if r.trunc_off:
                closed.add(r.speaker)
            else:
                r.off = max(r.off, 0 if r.trunc_on else r.on)
                last_off[r.speaker] = r.off
            out.append(r)
        return out

    def target_tokens(self, window: Window, prompt: Sequence[int] = ()) -> tuple[Token, ...]:
        od = bool(prompt) and self.vocab.id_token(prompt[0]) == Token.prompt(PromptMode.OD)
        entries = self._entries(window, od)
        if not entries:
            return (NOSPEECH, EOS)
        tags: dict[str, int] = {}
        out: list[Token] = []
        for e in entries:
            out.append(Token.spk(tags.setdefault(e.speaker, len(tags))))
            out.append(TRUNC if e.trunc_on else Token.time(e.on))
            for w in e.words:
                out.extend(self.vocab.word_tokens(w))
            out.append(TRUNC if e.trunc_off else Token.time(e.off))
        out.append(EOS)
        return tuple(out)

    def _target_ids(self, window: Window, prompt: tuple[int, ...]) -> tuple[int, ...]:
        key = (window.onset, window.length, prompt[:1])
        t = self._targets.get(key)
        if t is None:
            t = tuple(self.vocab.encode(self.target_tokens(window, prompt)))
            if len(self._targets) > 64:
                self._targets.clear()
            self._targets[key] = t
        return t

    def score_step(self, window, prompt, prefix) -> np.ndarray:
        return self.score_batch(window, prompt, [prefix])[0]

    def score_batch(self, window, prompt, prefixes) -> np.ndarray:
        target = self._target_ids(window, tuple(prompt))
        out = np.full((len(prefixes), self.vocab.size), self._off)
        for b, p in enumerate(prefixes):
            n = len(p)
            if n < len(target) and p == target[:n]:
                out[b, target[n]] = self._on
            else:
                out[b] = self._uniform
        return out

    # -- embedding side -----------------------------------------------------

    def frame_embeddings(self, window: Window) -> np.ndarray:
        step = self.frame_step
        n = frame_count(window.length, step)
        emb = np.zeros((n, self.dim))
        count = np.zeros(n)
        for u in self.timeline.intersecting(window.onset, window.end):
            c = self._centroids.get(u.speaker)
            if c is None:
                raise KeyError(f"no centroid for speaker {u.speaker}")
            a, b = frame_span(u.onset - window.onset, u.offset - window.onset, step)
            b = min(b, n)
            emb[a:b] += c
            count[a:b] += 1
        emb /= np.maximum(count, 1)[:, None]
        if self.cfg.embedding_noise_std > 0:
            rng = np.random.default_rng(
                [self.cfg.seed, 104729, int(round(window.onset * 1000)), int(round(window.length * 1000))]
            )
            emb += self.cfg.embedding_noise_std * rng.standard_normal(emb.shape)
        return emb
