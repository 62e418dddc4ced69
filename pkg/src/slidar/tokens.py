"""Serialized-output token vocabulary, target construction, parsing and grammar.

A window transcript is serialized as::

    <|spk0|> <|time10|> hello world <|time200|> <|spk1|> <|trunc|> ... <|eos|>

Entries are ordered first-in first-out by onset, local speaker tags are
numbered by first appearance, and ``<|trunc|>`` replaces a timestamp that falls
outside the window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .timeline import RecordingTimeline, Utterance

WORD_START = "▁"
CONT_PREFIX = "##"
_DEFAULT_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789'"


class GrammarError(ValueError):
    """A token sequence violates the serialization grammar."""

    def __init__(self, position: int, rule: str, message: str):
        super().__init__(f"position {position}: {message} [{rule}]")
        self.position = position
        self.rule = rule


class CapacityError(ValueError):
    pass


class SegmentationError(ValueError):
    pass


class Kind(enum.IntEnum):
    EOS = 0
    NOSPEECH = 1
    TRUNC = 2
    PROMPT = 3
    SPK = 4
    TIME = 5
    SUBWORD = 6


class PromptMode(str, enum.Enum):
    OD = "OD"
    VANILLA_ASR = "vanillaASR"
    PREV = "prev"


PROMPT_MODES = (PromptMode.OD, PromptMode.VANILLA_ASR, PromptMode.PREV)


@dataclass(frozen=True)
class Token:
    kind: Kind
    value: int | str | PromptMode | None = None

    @staticmethod
    def spk(k: int) -> "Token":
        return Token(Kind.SPK, k)

    @staticmethod
    def time(index: int) -> "Token":
        return Token(Kind.TIME, index)

    @staticmethod
    def subword(piece: str) -> "Token":
        return Token(Kind.SUBWORD, piece)

    @staticmethod
    def prompt(mode: PromptMode | str) -> "Token":
        return Token(Kind.PROMPT, PromptMode(mode))

    def __str__(self) -> str:
        k = self.kind
        if k is Kind.EOS:
            return "<|eos|>"
        if k is Kind.NOSPEECH:
            return "<|nospeech|>"
        if k is Kind.TRUNC:
            return "<|trunc|>"
        if k is Kind.PROMPT:
            return f"<|{self.value.value}|>"
        if k is Kind.SPK:
            return f"<|spk{self.value}|>"
        if k is Kind.TIME:
            return f"<|time{self.value}|>"
        piece = self.value
        return piece[1:] if piece.startswith(WORD_START) else CONT_PREFIX + piece


EOS = Token(Kind.EOS)
NOSPEECH = Token(Kind.NOSPEECH)
TRUNC = Token(Kind.TRUNC)


@dataclass(frozen=True)
class Lexicon:
    """Static word-piece inventory.

    Pieces that open a word carry the ``▁`` marker. Words are segmented by
    greedy longest match, so any word spelled with covered characters works.
    """

    pieces: tuple[str, ...]

    @classmethod
    def from_words(cls, words: Iterable[str], chars: str = _DEFAULT_CHARS) -> "Lexicon":
        out: dict[str, None] = {}
        for w in sorted(set(words)):
            out.setdefault(WORD_START + w)
        for c in chars:
            out.setdefault(WORD_START + c)
            out.setdefault(c)
        return cls(tuple(out))

    @cached_property
    def index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.pieces)}

    @cached_property
    def _max_len(self) -> int:
        return max((len(p) for p in self.pieces), default=0)

    def __len__(self) -> int:
        return len(self.pieces)

    def segment(self, word: str) -> list[str]:
        out = []
        i = 0
        idx = self.index
        while i < len(word):
            prefix = WORD_START if i == 0 else ""
            for j in range(min(len(word), i + self._max_len), i, -1):
                if prefix + word[i:j] in idx:
                    out.append(prefix + word[i:j])
                    i = j
                    break
            else:
                raise ValueError(f"word {word!r} cannot be segmented with this lexicon")
        return out

    @staticmethod
    def join(pieces: Sequence[str]) -> list[str]:
        words: list[str] = []
        for p in pieces:
            if p.startswith(WORD_START) or not words:
                words.append(p.lstrip(WORD_START))
            else:
                words[-1] += p
        return [w for w in words if w]


@dataclass(frozen=True)
class VocabConfig:
    time_resolution: float = 0.1
    max_window: float = 20.0
    max_local_speakers: int = 5
    lexicon: Lexicon = field(default_factory=lambda: Lexicon.from_words(()))

    def __post_init__(self) -> None:
        if self.max_local_speakers < 1:
            raise ValueError("max_local_speakers must be >= 1")
        if not (self.time_resolution > 0 and self.max_window > 0):
            raise ValueError("time_resolution and max_window must be positive")

    @property
    def max_time_index(self) -> int:
        return math.floor(self.max_window / self.time_resolution + 1e-9)

    @property
    def n_time(self) -> int:
        return self.max_time_index + 1

    # id layout: eos, nospeech, trunc, prompts, speakers, timestamps, subwords
    @property
    def spk_base(self) -> int:
        return 3 + len(PROMPT_MODES)

    @property
    def time_base(self) -> int:
        return self.spk_base + self.max_local_speakers

    @property
    def subword_base(self) -> int:
        return self.time_base + self.n_time

    @property
    def size(self) -> int:
        return self.subword_base + len(self.lexicon)

    def token_id(self, tok: Token) -> int:
        k = tok.kind
        if k is Kind.EOS:
            return 0
        if k is Kind.NOSPEECH:
            return 1
        if k is Kind.TRUNC:
            return 2
        if k is Kind.PROMPT:
            return 3 + PROMPT_MODES.index(tok.value)
        if k is Kind.SPK:
            if not 0 <= tok.value < self.max_local_speakers:
                raise ValueError(f"speaker tag {tok.value} out of range")
            return self.spk_base + tok.value
        if k is Kind.TIME:
            if not 0 <= tok.value <= self.max_time_index:
                raise ValueError(f"time index {tok.value} out of range")
            return self.time_base + tok.value
        return self.subword_base + self.lexicon.index[tok.value]

    def id_token(self, i: int) -> Token:
        i = int(i)
        if i < 0 or i >= self.size:
            raise ValueError(f"token id {i} out of range")
        if i < 3:
            return (EOS, NOSPEECH, TRUNC)[i]
        if i < self.spk_base:
            return Token(Kind.PROMPT, PROMPT_MODES[i - 3])
        if i < self.time_base:
            return Token(Kind.SPK, i - self.spk_base)
        if i < self.subword_base:
            return Token(Kind.TIME, i - self.time_base)
        return Token(Kind.SUBWORD, self.lexicon.pieces[i - self.subword_base])

    def encode(self, tokens: Iterable[Token]) -> list[int]:
        return [self.token_id(t) for t in tokens]

    def decode_ids(self, ids: Iterable[int]) -> list[Token]:
        return [self.id_token(i) for i in ids]

    def word_tokens(self, word: str) -> list[Token]:
        return [Token(Kind.SUBWORD, p) for p in self.lexicon.segment(word)]


# --- time quantization -----------------------------------------------------


def quantize_time(t: float, window_onset: float, cfg: VocabConfig) -> int:
    """Round-half-up index of ``t`` on the window's timestamp grid."""
    rel = t - window_onset
    if rel < -1e-6 or rel > cfg.max_window + 1e-6:
        raise ValueError("timestamp out of window")
    idx = math.floor(rel / cfg.time_resolution + 0.5 + 1e-9)
    return min(max(idx, 0), cfg.max_time_index)


def dequantize(index: int, window_onset: float, cfg: VocabConfig) -> float:
    return round(window_onset + index * cfg.time_resolution, 6)


# --- annotations -----------------------------------------------------------


@dataclass(frozen=True)
class AnnotationEntry:
    """One serialized utterance; ``None`` onset/offset marks truncation."""

    local_tag: int
    onset: float | None
    offset: float | None
    words: tuple[str, ...]
    global_speaker: str | None = field(default=None, compare=False)

    @property
    def onset_truncated(self) -> bool:
        return self.onset is None

    @property
    def offset_truncated(self) -> bool:
        return self.offset is None


@dataclass(frozen=True)
class WindowAnnotation:
    window_onset: float
    window_length: float
    entries: tuple[AnnotationEntry, ...] = ()
    prompt_modes: tuple[PromptMode, ...] = field(default=(), compare=False)

    @property
    def window_end(self) -> float:
        return self.window_onset + self.window_length

    @property
    def tags(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for e in self.entries:
            seen.setdefault(e.local_tag)
        return tuple(seen)

    def spans(self) -> list[tuple[int, float, float]]:
        """Absolute ``(tag, onset, offset)`` with truncation filled by window bounds."""
        out = []
        for e in self.entries:
            on = self.window_onset if e.onset is None else e.onset
            off = self.window_end if e.offset is None else e.offset
            out.append((e.local_tag, on, max(on, off)))
        return out


def _window_entries(
    timeline: RecordingTimeline, window_onset: float, window_length: float
) -> list[tuple[Utterance, bool, bool, list[str]]]:
    w0, w1 = window_onset, window_onset + window_length
    rows = []
    for u in timeline.intersecting(w0, w1):
        trunc_on = u.onset < w0 - 1e-9
        trunc_off = u.offset > w1 + 1e-9
        if (trunc_on or trunc_off) and not u.segmented:
            raise SegmentationError("segmentation required")
        if trunc_on or trunc_off:
            words = [w.text for w in u.words if w.onset < w1 and w.offset > w0]
        else:
            words = [w.text for w in u.words]
        if words:
            rows.append((u, trunc_on, trunc_off, words))
    # truncated onsets first; timeline order already breaks ties by (onset, speaker, offset)
    rows.sort(key=lambda r: 0 if r[1] else 1)
    return rows


def _local_tags(rows, cfg: VocabConfig) -> dict[str, int]:
    tags: dict[str, int] = {}
    for u, *_ in rows:
        tags.setdefault(u.speaker, len(tags))
    if len(tags) > cfg.max_local_speakers:
        raise CapacityError("speaker capacity exceeded")
    return tags


def build_sot_target(
    timeline: RecordingTimeline, window_onset: float, window_length: float, cfg: VocabConfig
) -> tuple[tuple[Token, ...], WindowAnnotation]:
    """Serialize the part of ``timeline`` inside a window.

    Returns the token sequence and the matching annotation with times snapped
    to the timestamp grid.
    """
    if window_length > cfg.max_window + 1e-9:
        raise ValueError("window longer than max_window")
    rows = _window_entries(timeline, window_onset, window_length)
    tags = _local_tags(rows, cfg)
    if not rows:
        return (NOSPEECH, EOS), WindowAnnotation(window_onset, window_length)
    tokens: list[Token] = []
    entries = []
    for u, trunc_on, trunc_off, words in rows:
        tag = tags[u.speaker]
        tokens.append(Token.spk(tag))
        on = off = None
        if trunc_on:
            tokens.append(TRUNC)
        else:
            i = quantize_time(u.onset, window_onset, cfg)
            tokens.append(Token.time(i))
            on = dequantize(i, window_onset, cfg)
        for w in words:
            tokens.extend(cfg.word_tokens(w))
        if trunc_off:
            tokens.append(TRUNC)
        else:
            i = quantize_time(u.offset, window_onset, cfg)
            tokens.append(Token.time(i))
            off = dequantize(i, window_onset, cfg)
        entries.append(AnnotationEntry(tag, on, off, tuple(words), u.speaker))
    tokens.append(EOS)
    return tuple(tokens), WindowAnnotation(window_onset, window_length, tuple(entries))


def build_od_prompt(
    timeline: RecordingTimeline, window_onset: float, window_length: float, cfg: VocabConfig
) -> tuple[Token, ...]:
    """Oracle-diarization prompt: the target's segmentation without words."""
    rows = _window_entries(timeline, window_onset, window_length)
    tags = _local_tags(rows, cfg)
    out = [Token.prompt(PromptMode.OD)]
    for u, trunc_on, trunc_off, _ in rows:
        out.append(Token.spk(tags[u.speaker]))
        out.append(TRUNC if trunc_on else Token.time(quantize_time(u.onset, window_onset, cfg)))
        out.append(TRUNC if trunc_off else Token.time(quantize_time(u.offset, window_onset, cfg)))
    return tuple(out)


# --- grammar ---------------------------------------------------------------


class Phase(enum.IntEnum):
    START = 0
    NOSPEECH = 1
    TAG = 2
    ONSET = 3
    WORDS = 4
    OFFSET = 5
    DONE = 6


# tokens still needed to reach a complete sequence from each phase
MIN_COMPLETION = {
    Phase.START: 2,
    Phase.NOSPEECH: 1,
    Phase.TAG: 4,
    Phase.ONSET: 3,
    Phase.WORDS: 2,
    Phase.OFFSET: 1,
    Phase.DONE: 0,
}

_UNSEEN = -1
_CLOSED = -2


@dataclass(frozen=True)
class Admissible:
    """Token classes that may extend a prefix."""

    eos: bool = False
    nospeech: bool = False
    trunc: bool = False
    subword: bool = False
    prompts: frozenset = frozenset()
    speakers: frozenset = frozenset()
    time_range: tuple[int, int] | None = None

    def allows(self, tok: Token) -> bool:
        k = tok.kind
        if k is Kind.EOS:
            return self.eos
        if k is Kind.NOSPEECH:
            return self.nospeech
        if k is Kind.TRUNC:
            return self.trunc
        if k is Kind.SUBWORD:
            return self.subword
        if k is Kind.PROMPT:
            return tok.value in self.prompts
        if k is Kind.SPK:
            return tok.value in self.speakers
        return self.time_range is not None and self.time_range[0] <= tok.value <= self.time_range[1]


class GrammarState:
    """Immutable automaton state after consuming a prefix."""

    __slots__ = (
        "phase", "pos", "prompts", "max_tag", "cur_tag", "cur_new", "cur_onset",
        "last_onset", "explicit_seen", "tag_off", "n_tags", "t_max",
    )

    def __init__(self, cfg: VocabConfig):
        self.phase = Phase.START
        self.pos = 0
        self.prompts: frozenset = frozenset()
        self.max_tag = -1
        self.cur_tag = -1
        self.cur_new = False
        self.cur_onset = 0
        self.last_onset = 0
        self.explicit_seen = False
        self.tag_off: tuple[int, ...] = (_UNSEEN,) * cfg.max_local_speakers
        self.n_tags = cfg.max_local_speakers
        self.t_max = cfg.max_time_index

    def _copy(self) -> "GrammarState":
        new = object.__new__(GrammarState)
        for s in GrammarState.__slots__:
            setattr(new, s, getattr(self, s))
        new.pos = self.pos + 1
        return new

    @property
    def done(self) -> bool:
        return self.phase is Phase.DONE

    def _open_speakers(self) -> frozenset:
        hi = min(self.max_tag + 1, self.n_tags - 1)
        return frozenset(j for j in range(hi + 1) if self.tag_off[j] != _CLOSED)

    def onset_floor(self, tag: int) -> int:
        prev = self.tag_off[tag]
        return max(self.last_onset if self.explicit_seen else 0, prev if prev >= 0 else 0)

    def admissible(self) -> Admissible:
        p = self.phase
        if p is Phase.START:
            return Admissible(
                nospeech=True,
                speakers=frozenset({0}),
                prompts=frozenset(PROMPT_MODES) - self.prompts,
            )
        if p is Phase.NOSPEECH:
            return Admissible(eos=True)
        if p is Phase.TAG:
            return Admissible(
                trunc=self.cur_new and not self.explicit_seen,
                time_range=(self.onset_floor(self.cur_tag), self.t_max),
            )
        if p is Phase.ONSET:
            return Admissible(subword=True)
        if p is Phase.WORDS:
            return Admissible(subword=True, trunc=True, time_range=(self.cur_onset, self.t_max))
        if p is Phase.OFFSET:
            return Admissible(eos=True, speakers=self._open_speakers())
        return Admissible()

    def advance(self, tok: Token) -> "GrammarState":
        p = self.phase
        k = tok.kind
        s = self._copy()
        pos = self.pos
        if p is Phase.DONE:
            raise GrammarError(pos, "after_eos", "token after end of sequence")
        if p is Phase.START:
            if k is Kind.PROMPT:
                if tok.value in self.prompts:
                    raise GrammarError(pos, "prompt_prefix", "repeated prompt mode")
                s.prompts = self.prompts | {tok.value}
                return s
            if k is Kind.NOSPEECH:
                s.phase = Phase.NOSPEECH
                return s
            if k is Kind.SPK:
                if tok.value != 0:
                    raise GrammarError(pos, "fifo", "FIFO order violated")
                return self._enter_tag(s, 0)
            raise GrammarError(pos, "start", f"sequence cannot start with {tok}")
        if k is Kind.PROMPT:
            raise GrammarError(pos, "prompt_prefix", "prompt mode token after sequence start")
        if p is Phase.NOSPEECH:
            if k is not Kind.EOS:
                raise GrammarError(pos, "nospeech_eos", "<|nospeech|> must be followed by <|eos|>")
            s.phase = Phase.DONE
            return s
        if p is Phase.TAG:
            if k is Kind.TRUNC:
                if self.explicit_seen:
                    raise GrammarError(pos, "trunc_onset_order", "truncated onset after an explicit onset")
                if not self.cur_new:
                    raise GrammarError(pos, "trunc_onset_order", "truncated onset for a speaker already seen")
                s.cur_onset = 0
                s.phase = Phase.ONSET
                return s
            if k is Kind.TIME:
                self._check_time(pos, tok.value)
                if self.explicit_seen and tok.value < self.last_onset:
                    raise GrammarError(pos, "onset_monotonic", "onset earlier than previous entry onset")
                prev = self.tag_off[self.cur_tag]
                if prev >= 0 and tok.value < prev:
                    raise GrammarError(pos, "speaker_monotonic", "onset before the speaker's previous offset")
                s.cur_onset = tok.value
                s.last_onset = tok.value
                s.explicit_seen = True
                s.phase = Phase.ONSET
                return s
            raise GrammarError(pos, "onset", f"expected onset timestamp or <|trunc|>, got {tok}")
        if p is Phase.ONSET:
            if k is not Kind.SUBWORD:
                raise GrammarError(pos, "words", f"expected a subword after onset, got {tok}")
            s.phase = Phase.WORDS
            return s
        if p is Phase.WORDS:
            if k is Kind.SUBWORD:
                return s
            if k is Kind.TIME:
                self._check_time(pos, tok.value)
                if tok.value < self.cur_onset:
                    raise GrammarError(pos, "offset_before_onset", "offset earlier than onset")
                s.tag_off = _set(self.tag_off, self.cur_tag, tok.value)
                s.phase = Phase.OFFSET
                return s
            if k is Kind.TRUNC:
                s.tag_off = _set(self.tag_off, self.cur_tag, _CLOSED)
                s.phase = Phase.OFFSET
                return s
            raise GrammarError(pos, "offset", f"expected subword or offset, got {tok}")
        # Phase.OFFSET
        if k is Kind.EOS:
            s.phase = Phase.DONE
            return s
        if k is Kind.SPK:
            j = tok.value
            if j > self.max_tag + 1 or j >= self.n_tags:
                raise GrammarError(pos, "fifo", "FIFO order violated")
            if self.tag_off[j] == _CLOSED:
                raise GrammarError(pos, "closed_speaker", "speaker reappears after a truncated offset")
            return self._enter_tag(s, j)
        raise GrammarError(pos, "entry", f"expected speaker tag or <|eos|>, got {tok}")

    def _check_time(self, pos: int, idx: int) -> None:
        if not 0 <= idx <= self.t_max:
            raise GrammarError(pos, "time_range", f"time index {idx} out of range")

    def _enter_tag(self, s: "GrammarState", tag: int) -> "GrammarState":
        s.cur_new = tag > self.max_tag
        s.max_tag = max(self.max_tag, tag)
        s.cur_tag = tag
        s.phase = Phase.TAG
        return s


def _set(t: tuple, i: int, v) -> tuple:
    return t[:i] + (v,) + t[i + 1:]


def grammar_state(prefix: Iterable[Token], cfg: VocabConfig) -> GrammarState:
    state = GrammarState(cfg)
    for tok in prefix:
        state = state.advance(tok)
    return state


def admissible_next(prefix: Sequence[Token], cfg: VocabConfig) -> Admissible:
    """Token classes that keep ``prefix`` completable to a well-formed sequence."""
    return grammar_state(prefix, cfg).admissible()


class MaskBuilder:
    """Boolean vocabulary masks for decoding, with a remaining-token budget."""

    def __init__(self, cfg: VocabConfig):
        self.cfg = cfg
        self._cache: dict[tuple, np.ndarray] = {}

    def __call__(self, state: GrammarState, budget: int, allow_prompts: bool = False) -> np.ndarray:
        a = state.admissible()
        key = (a, min(budget, 5), allow_prompts, state.phase)
        m = self._cache.get(key)
        if m is not None:
            return m
        cfg = self.cfg
        m = np.zeros(cfg.size, dtype=bool)

        def fits(next_phase: Phase) -> bool:
            return 1 + MIN_COMPLETION[next_phase] <= budget

        phase = state.phase
        if a.eos and fits(Phase.DONE):
            m[0] = True
        if a.nospeech and fits(Phase.NOSPEECH):
            m[1] = True
        after_time = Phase.ONSET if phase is Phase.TAG else Phase.OFFSET
        if a.trunc and fits(after_time):
            m[2] = True
        if allow_prompts and fits(Phase.START):
            for mode in a.prompts:
                m[3 + PROMPT_MODES.index(mode)] = True
        if fits(Phase.TAG):
            for j in a.speakers:
                m[cfg.spk_base + j] = True
        if a.time_range is not None and fits(after_time):
            lo, hi = a.time_range
            m[cfg.time_base + lo: cfg.time_base + hi + 1] = True
        if a.subword and fits(Phase.WORDS):
            m[cfg.subword_base:] = True
        m.flags.writeable = False
        if len(self._cache) < 100_000:
            self._cache[key] = m
        return m


def parse_sot(
    seq: Sequence[Token | int],
    window_onset: float,
    cfg: VocabConfig,
    window_length: float | None = None,
) -> WindowAnnotation:
    """Parse a complete token sequence into a window annotation."""
    tokens = [cfg.id_token(t) if not isinstance(t, Token) else t for t in seq]
    length = cfg.max_window if window_length is None else window_length
    state = GrammarState(cfg)
    entries: list[AnnotationEntry] = []
    prompts: list[PromptMode] = []
    tag = -1
    onset: float | None = None
    pieces: list[str] = []
    for tok in tokens:
        prev_phase = state.phase
        state = state.advance(tok)
        k = tok.kind
        if k is Kind.PROMPT:
            prompts.append(tok.value)
        elif k is Kind.SPK:
            tag, pieces = tok.value, []
        elif prev_phase is Phase.TAG:
            onset = None if k is Kind.TRUNC else dequantize(tok.value, window_onset, cfg)
        elif k is Kind.SUBWORD:
            pieces.append(tok.value)
        elif prev_phase is Phase.WORDS:
            offset = None if k is Kind.TRUNC else dequantize(tok.value, window_onset, cfg)
            entries.append(AnnotationEntry(tag, onset, offset, tuple(Lexicon.join(pieces))))
    if not state.done:
        raise GrammarError(len(tokens), "eos", "sequence ends without <|eos|>")
    return WindowAnnotation(window_onset, length, tuple(entries), tuple(prompts))


def is_well_formed(seq: Sequence[Token], cfg: VocabConfig) -> bool:
    try:
        state = grammar_state(seq, cfg)
    except GrammarError:
        return False
    return state.done


# --- readable form ---------------------------------------------------------

_SPECIAL = {"<|eos|>": EOS, "<|nospeech|>": NOSPEECH, "<|trunc|>": TRUNC}


def to_text(tokens: Iterable[Token]) -> str:
    return " ".join(str(t) for t in tokens)


def from_text(text: str, cfg: VocabConfig | None = None) -> list[Token]:
    """Inverse of :func:`to_text`; with ``cfg`` plain words are segmented into pieces."""
    out: list[Token] = []
    for item in text.split():
        if item in _SPECIAL:
            out.append(_SPECIAL[item])
        elif item.startswith("<|") and item.endswith("|>"):
            body = item[2:-2]
            if body.startswith("spk") and body[3:].isdigit():
                out.append(Token.spk(int(body[3:])))
            elif body.startswith("time") and body[4:].isdigit():
                out.append(Token.time(int(body[4:])))
            else:
                try:
                    out.append(Token.prompt(body))
                except ValueError:
                    raise ValueError(f"unknown special token {item}") from None
        elif item.startswith(CONT_PREFIX):
            out.append(Token.subword(item[len(CONT_PREFIX):]))
        elif cfg is not None:
            out.extend(cfg.word_tokens(item))
        else:
            out.append(Token.subword(WORD_START + item))
    return out
