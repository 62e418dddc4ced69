"""Score tables and figures for pipeline runs."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CpWerReport, DerReport  # noqa: E402
from .windowing import WindowPlan  # noqa: E402

SCORE_COLUMNS = ("recording", "SC", "MS", "FA", "DER", "cpWER")


def score_row(recording_id: str, d: DerReport | None, c: CpWerReport | None) -> dict:
    def fmt(x):
        return "" if x is None else f"{x:.2f}"

    return {
        "recording": recording_id,
        "SC": fmt(d and d.speaker_confusion),
        "MS": fmt(d and d.missed_speech),
        "FA": fmt(d and d.false_alarm),
        "DER": fmt(d and d.der),
        "cpWER": fmt(c and c.cpwer),
    }


def score_table(rows: Sequence[dict], delimiter: str = "\t") -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SCORE_COLUMNS, delimiter=delimiter, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _lanes(ax, intervals: dict[str, list[tuple[float, float]]], y0: float, color: str) -> list[str]:
    labels = []
    for i, spk in enumerate(sorted(intervals)):
        ax.broken_barh([(a, b - a) for a, b in intervals[spk]], (y0 + i, 0.8), facecolors=color)
        labels.append(spk)
    return labels


def plot_timeline(path: str | Path, reference, hypothesis, plan: WindowPlan | None = None,
                  title: str = "") -> Path:
    """Speaker lanes: reference on top, hypothesis below, window onsets as vertical lines."""
    ref = reference.speaker_intervals() if reference is not None else {}
    hyp = hypothesis.speaker_intervals()
    n = len(ref) + len(hyp)
    fig, ax = plt.subplots(figsize=(12, 1.0 + 0.35 * max(n, 1)))
    hyp_labels = _lanes(ax, hyp, 0, "tab:orange")
    ref_labels = _lanes(ax, ref, len(hyp), "tab:blue")
    ticks = [i + 0.4 for i in range(n)]
    ax.set_yticks(ticks)
    ax.set_yticklabels([f"hyp {s}" for s in hyp_labels] + [f"ref {s}" for s in ref_labels])
    if plan is not None:
        for w in plan:
            ax.axvline(w.onset, color="grey", lw=0.5, ls=":")
    ax.set_xlabel("time (s)")
    ax.set_xlim(0, hypothesis.duration or 1.0)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_plan(path: str | Path, plan: WindowPlan, duration: float) -> Path:
    """Windows as stacked bars, with the hop between consecutive onsets."""
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(10, 4), sharex=True)
    for w in plan:
        a1.broken_barh([(w.onset, w.length)], (w.index % 2, 0.8), facecolors="tab:green", alpha=0.6)
    a1.set_yticks([])
    a1.set_ylabel("windows")
    onsets = [w.onset for w in plan]
    hops = [b - a for a, b in zip(onsets, onsets[1:])]
    if hops:
        a2.plot(onsets[1:], hops, marker=".", lw=0.8)
    a2.set_ylabel("hop (s)")
    a2.set_xlabel("window onset (s)")
    a2.set_xlim(0, max(duration, 1e-3))
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
