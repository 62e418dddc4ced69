"""Local speaker embeddings by masked time-averaging, and the speaker-ID loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from .timeline import frame_count, frame_span
from .tokens import WindowAnnotation

logger = logging.getLogger(__name__)


class NoSupportError(ValueError):
    pass


@dataclass(frozen=True)
class LocalSpeakerEmbedding:
    window: int
    tag: int
    vector: np.ndarray = field(compare=False, repr=False)
    support: int
    first_active: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        return (self.window, self.tag)


def tag_activity(annotation: WindowAnnotation, frame_step: float, n_frames: int | None = None) -> dict[int, np.ndarray]:
    """Per local tag, boolean frame activity relative to the window onset."""
    if n_frames is None:
        n_frames = frame_count(annotation.window_length, frame_step)
    rows: dict[int, np.ndarray] = {}
    for tag, on, off in annotation.spans():
        row = rows.setdefault(tag, np.zeros(n_frames, dtype=bool))
        a, b = frame_span(on - annotation.window_onset, off - annotation.window_onset, frame_step)
        row[a:min(b, n_frames)] = True
    return rows


def single_speaker_frames(
    annotation: WindowAnnotation, tag: int, frame_step: float = 0.01, n_frames: int | None = None
) -> np.ndarray:
    """Frame indices where ``tag`` is the only active local speaker."""
    rows = tag_activity(annotation, frame_step, n_frames)
    if tag not in rows:
        return np.zeros(0, dtype=int)
    count = np.sum(list(rows.values()), axis=0)
    return np.flatnonzero(rows[tag] & (count == 1))


def time_average(frames: np.ndarray, support: Sequence[int] | np.ndarray) -> np.ndarray:
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise NoSupportError("no single-speaker support")
    if support.min() < 0 or support.max() >= len(frames):
        raise IndexError("support frame outside the frame sequence")
    return np.asarray(frames, dtype=float)[support].mean(axis=0)


def extract_local_embeddings(
    window_index: int, annotation: WindowAnnotation, frames: np.ndarray, frame_step: float = 0.01
) -> dict[int, LocalSpeakerEmbedding]:
    """One embedding per local tag with single-speaker support; others are skipped."""
    rows = tag_activity(annotation, frame_step, len(frames))
    if not rows:
        return {}
    count = np.sum(list(rows.values()), axis=0)
    out = {}
    for tag, row in rows.items():
        theta = np.flatnonzero(row & (count == 1))
        if theta.size == 0:
            logger.warning("window %d: local speaker %d has no single-speaker frames, skipped", window_index, tag)
            continue
        first = annotation.window_onset + np.flatnonzero(row)[0] * frame_step
        out[tag] = LocalSpeakerEmbedding(window_index, tag, time_average(frames, theta), int(theta.size), float(first))
    return out


# --- speaker loss ------------------------------------------------------------


class NegSquaredDistance:
    """logit_k = -scale * ||e - d_k||^2"""

    @staticmethod
    def logits(e: np.ndarray, table: np.ndarray, scale: float) -> np.ndarray:
        return -scale * ((e[:, None, :] - table[None, :, :]) ** 2).sum(-1)

    @staticmethod
    def grads(e, table, scale, p, onehot):
        # p, onehot: (N, K); returns d(-log p_target)/de, /dscale, /dtable
        diff = e[:, None, :] - table[None, :, :]  # (N, K, D)
        sq = (diff ** 2).sum(-1)
        w = p - onehot  # dL/dlogit
        dlogit_de = -2 * scale * diff
        g_e = np.einsum("nk,nkd->nd", w, dlogit_de)
        g_scale = float(np.sum(w * -sq))
        g_table = np.einsum("nk,nkd->kd", w, 2 * scale * diff)
        return g_e, g_scale, g_table


class ScaledCosine:
    """logit_k = scale * cos(e, d_k)"""

    @staticmethod
    def logits(e, table, scale):
        en = e / np.linalg.norm(e, axis=1, keepdims=True)
        tn = table / np.linalg.norm(table, axis=1, keepdims=True)
        return scale * en @ tn.T

    @staticmethod
    def grads(e, table, scale, p, onehot):
        ne = np.linalg.norm(e, axis=1, keepdims=True)
        nt = np.linalg.norm(table, axis=1, keepdims=True)
        en, tn = e / ne, table / nt
        cos = en @ tn.T
        w = p - onehot
        # d cos_nk / d e_n = (tn_k - cos_nk * en_n) / |e_n|
        g_e = scale * ((w @ tn) - (w * cos).sum(1, keepdims=True) * en) / ne
        g_t = scale * ((w.T @ en) - (w * cos).sum(0)[:, None] * tn) / nt
        return g_e, float(np.sum(w * cos)), g_t


@dataclass
class SpeakerDictionary:
    speakers: tuple[str, ...]
    table: np.ndarray
    scale: float = 1.0
    similarity: type = NegSquaredDistance

    def __post_init__(self) -> None:
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 2 or self.table.shape[0] != len(self.speakers):
            raise ValueError("dictionary table must be (n_speakers, dim)")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def index(self, speaker: str) -> int:
        try:
            return self.speakers.index(speaker)
        except ValueError:
            raise KeyError(f"unknown speaker {speaker!r}") from None


@dataclass
class SpeakerLossResult:
    loss: float
    grad_embeddings: np.ndarray
    grad_scale: float
    grad_table: np.ndarray


def speaker_loss(
    embeddings: np.ndarray,
    targets: Sequence[str],
    dictionary: SpeakerDictionary,
    return_grad: bool = False,
) -> float | SpeakerLossResult:
    """Mean softmax cross-entropy of each local embedding against its speaker's entry.

    Local speakers are matched to targets by position (FIFO tag order), so no
    permutation search is involved.
    """
    e = np.atleast_2d(np.asarray(embeddings, dtype=float))
    if e.shape[0] < 1 or e.shape[0] != len(targets):
        raise ValueError("need one target per local embedding")
    idx = np.array([dictionary.index(t) for t in targets])
    sim = dictionary.similarity
    logits = sim.logits(e, dictionary.table, dictionary.scale)
    m = logits.max(1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(1))
    n = e.shape[0]
    loss = float(np.mean(lse - logits[np.arange(n), idx]))
    if not return_grad:
        return loss
    p = np.exp(logits - lse[:, None])
    onehot = np.zeros_like(p)
    onehot[np.arange(n), idx] = 1.0
    g_e, g_s, g_t = sim.grads(e, dictionary.table, dictionary.scale, p, onehot)
    return SpeakerLossResult(loss, g_e / n, g_s / n, g_t / n)


# --- dump format -------------------------------------------------------------


def write_embeddings(fh: BinaryIO, embeddings: Sequence[LocalSpeakerEmbedding]) -> None:
    """Records of one text header line ``window tag dim support`` plus little-endian float32."""
    for emb in embeddings:
        vec = np.asarray(emb.vector, dtype="<f4")
        fh.write(f"{emb.window} {emb.tag} {vec.size} {emb.support}\n".encode())
        fh.write(vec.tobytes())


def read_embeddings(fh: BinaryIO) -> list[LocalSpeakerEmbedding]:
    out = []
    while True:
        header = fh.readline()
        if not header:
            break
        window, tag, dim, support = (int(x) for x in header.split())
        vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(float)
        out.append(LocalSpeakerEmbedding(window, tag, vec, support))
    return out
