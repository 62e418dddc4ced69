"""Cannot-link constraints and constrained agglomerative clustering of local speakers."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embeddings import LocalSpeakerEmbedding
from .timeline import frame_count, frame_span
from .tokens import WindowAnnotation
from .windowing import LocalDastResult, WindowPlan

logger = logging.getLogger(__name__)

Key = tuple[int, int]  # (window index, local tag)


@dataclass(frozen=True)
class CannotLinkSet:
    pairs: frozenset = frozenset()

    @classmethod
    def of(cls, pairs) -> "CannotLinkSet":
        out = set()
        for a, b in pairs:
            if a == b:
                raise ValueError("cannot-link pair must join two distinct embeddings")
            out.add(frozenset((a, b)))
        return cls(frozenset(out))

    def __contains__(self, pair) -> bool:
        a, b = pair
        return frozenset((a, b)) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return (tuple(sorted(p)) for p in self.pairs)

    def union(self, other: "CannotLinkSet") -> "CannotLinkSet":
        return CannotLinkSet(self.pairs | other.pairs)


@dataclass(frozen=True)
class ClusteringConfig:
    linkage: str = "average"
    threshold: float | None = 0.4
    n_clusters: int | None = None
    min_overlap: float = 5.0

    def __post_init__(self) -> None:
        if self.linkage not in ("average", "complete"):
            raise ValueError(f"unknown linkage {self.linkage!r}")
        if self.n_clusters is None and not (self.threshold is not None and self.threshold > 0):
            raise ValueError("need a positive threshold or a cluster count")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")


@dataclass(frozen=True)
class ActivityDisjointPolicy:
    """Cross-window rule for windows sharing a long stretch of audio.

    Both windows transcribe the same audio in the shared region, so one person
    seen by both must be active at the same moments. Two local speakers whose
    activity there barely coincides are therefore different people.
    """

    min_active: float = 0.3
    max_shared_ratio: float = 0.5
    frame_step: float = 0.01

    def pairs(self, a: WindowAnnotation, b: WindowAnnotation, start: float, end: float) -> list[tuple[int, int]]:
        n = frame_count(end - start, self.frame_step)
        act_a = _region_activity(a, start, n, self.frame_step)
        act_b = _region_activity(b, start, n, self.frame_step)
        min_frames = self.min_active / self.frame_step - 1e-9
        out = []
        for ta, ra in act_a.items():
            na = ra.sum()
            if na < min_frames:
                continue
            for tb, rb in act_b.items():
                nb = rb.sum()
                if nb < min_frames:
                    continue
                shared = np.count_nonzero(ra & rb)
                if shared < self.max_shared_ratio * min(na, nb):
                    out.append((ta, tb))
        return out


def _region_activity(ann: WindowAnnotation, start: float, n: int, step: float) -> dict[int, np.ndarray]:
    rows: dict[int, np.ndarray] = {}
    for tag, on, off in ann.spans():
        row = rows.setdefault(tag, np.zeros(n, dtype=bool))
        a, b = frame_span(max(on - start, 0.0), max(off - start, 0.0), step)
        row[a:min(b, n)] = True
    return rows


def derive_constraints(
    plan: WindowPlan,
    results: Sequence[LocalDastResult],
    cfg: ClusteringConfig = ClusteringConfig(),
    policy: ActivityDisjointPolicy | None = None,
) -> CannotLinkSet:
    """Distinct tags of one window are always cannot-linked; across consecutive
    windows the policy applies when they overlap by more than ``cfg.min_overlap``."""
    if len(plan) != len(results):
        raise ValueError("results must align with the plan")
    policy = policy or ActivityDisjointPolicy()
    pairs = []
    for w, r in zip(plan, results):
        tags = r.annotation.tags
        for i, a in enumerate(tags):
            for b in tags[i + 1:]:
                pairs.append(((w.index, a), (w.index, b)))
    for k in range(len(plan) - 1):
        w1, w2 = plan[k], plan[k + 1]
        overlap = w1.end - w2.onset
        if overlap <= cfg.min_overlap + 1e-9:
            continue
        for ta, tb in policy.pairs(results[k].annotation, results[k + 1].annotation, w2.onset, w1.end):
            pairs.append(((w1.index, ta), (w2.index, tb)))
    return CannotLinkSet.of(pairs)


@dataclass
class ClusteringResult:
    mapping: dict[Key, int]
    n_clusters: int
    notice: str | None = None
    merge_distances: list[float] = field(default_factory=list)


def cosine_distances(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    xn = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    return np.clip(1.0 - xn @ xn.T, 0.0, 2.0)


def constrained_ahc(
    embeddings: Sequence[LocalSpeakerEmbedding],
    constraints: CannotLinkSet,
    cfg: ClusteringConfig = ClusteringConfig(),
) -> ClusteringResult:
    """Bottom-up clustering that never joins clusters holding a cannot-linked pair.

    Ties go to the lowest ``(i, j)`` pair. Output ids are dense and ordered by
    each cluster's earliest activity.
    """
    n = len(embeddings)
    if n == 0:
        raise ValueError("need at least one embedding")
    keys = [e.key for e in embeddings]
    pos = {k: i for i, k in enumerate(keys)}
    X = np.stack([np.asarray(e.vector, dtype=float) for e in embeddings])
    link = cosine_distances(X)
    blocked = np.zeros((n, n), dtype=bool)
    for a, b in constraints:
        if a in pos and b in pos:
            blocked[pos[a], pos[b]] = blocked[pos[b], pos[a]] = True
    alive = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    members = [[i] for i in range(n)]
    work = np.where(blocked, np.inf, link)
    np.fill_diagonal(work, np.inf)
    work[np.tril_indices(n)] = np.inf
    n_alive = n
    merges: list[float] = []
    notice = None
    while n_alive > 1:
        if cfg.n_clusters is not None and n_alive <= cfg.n_clusters:
            break
        flat = int(np.argmin(work))
        i, j = divmod(flat, n)
        d = work[i, j]
        if not np.isfinite(d):
            if cfg.n_clusters is not None:
                notice = f"constraints force {n_alive} clusters (requested {cfg.n_clusters})"
                logger.warning(notice)
            break
        if cfg.n_clusters is None and d > cfg.threshold:
            break
        merges.append(float(d))
        if cfg.linkage == "average":
            row = (sizes[i] * link[i] + sizes[j] * link[j]) / (sizes[i] + sizes[j])
        else:
            row = np.maximum(link[i], link[j])
        link[i, :] = link[:, i] = row
        link[i, i] = 0.0
        blocked[i, :] |= blocked[j, :]
        blocked[:, i] = blocked[i, :]
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        members[j] = []
        alive[j] = False
        n_alive -= 1
        work[j, :] = work[:, j] = np.inf
        upd = np.where(blocked[i] | ~alive, np.inf, row)
        upd[i] = np.inf
        # keep only the upper triangle populated
        work[i, i + 1:] = upd[i + 1:]
        work[:i, i] = upd[:i]
    clusters = [sorted(m) for m in members if m]
    firsts = [min((embeddings[k].first_active, k) for k in m) for m in clusters]
    order = sorted(range(len(clusters)), key=lambda c: firsts[c])
    mapping: dict[Key, int] = {}
    for gid, c in enumerate(order):
        for k in clusters[c]:
            mapping[keys[k]] = gid
    return ClusteringResult(mapping, len(clusters), notice, merges)


def relabel(results: Sequence[LocalDastResult], mapping: dict[Key, int]) -> list[WindowAnnotation]:
    """Replace local tags by global ids (``str``) in every window annotation.

    A tag without an embedding takes the id of the same tag number in the
    nearest window where that tag was clustered, unless another tag of this
    window already holds that id; failing that it gets a fresh id.
    """
    next_id = max(mapping.values(), default=-1) + 1
    by_tag: dict[int, list[tuple[int, int]]] = {}
    for (w, t), g in mapping.items():
        by_tag.setdefault(t, []).append((w, g))
    out = []
    for r in results:
        widx = r.window.index
        labels = {t: mapping[(widx, t)] for t in r.annotation.tags if (widx, t) in mapping}
        for t in r.annotation.tags:
            if t in labels:
                continue
            taken = set(labels.values())
            cands = sorted(by_tag.get(t, []), key=lambda wg: (abs(wg[0] - widx), wg[0]))
            gid = next((g for _, g in cands if g not in taken), None)
            if gid is None:
                gid = next_id
                next_id += 1
            labels[t] = gid
        entries = tuple(
            dataclasses.replace(e, global_speaker=str(labels[e.local_tag])) for e in r.annotation.entries
        )
        out.append(dataclasses.replace(r.annotation, entries=entries))
    return out
