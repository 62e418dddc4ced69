"""Readers and writers for the on-disk formats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, TextIO

from .stitching import GlobalDast
from .timeline import RecordingTimeline, TimelineError, Utterance, Word


def timeline_to_dict(t: RecordingTimeline) -> dict:
    return {
        "recording_id": t.recording_id,
        "duration": t.duration,
        "utterances": [
            {
                "speaker": u.speaker,
                "words": [
                    {"text": w.text, "onset": w.onset, "offset": w.offset}
                    if w.timed else {"text": w.text}
                    for w in u.words
                ],
                **({} if u.segmented else {"onset": u.onset, "offset": u.offset}),
            }
            for u in t.utterances
        ],
    }


def timeline_from_dict(d: dict, approximate: bool = True) -> RecordingTimeline:
    """Parse the canonical document.

    Utterances may also be given as ``{speaker, text, onset, offset}``; their
    word times are then estimated unless ``approximate`` is false.
    """
    try:
        utts = []
        for item in d.get("utterances", []):
            spk = str(item["speaker"])
            if "words" in item and item["words"] and all("onset" in w for w in item["words"]):
                words = [Word(w["text"], float(w["onset"]), float(w["offset"])) for w in item["words"]]
                utts.append(Utterance.from_words(spk, words))
            else:
                text = item.get("text") or " ".join(w["text"] for w in item.get("words", []))
                utts.append(Utterance.from_text(spk, text, float(item["onset"]), float(item["offset"]),
                                                segment=approximate))
        return RecordingTimeline(str(d["recording_id"]), float(d["duration"]), tuple(utts))
    except (KeyError, TypeError) as exc:
        raise TimelineError(f"malformed annotation document: {exc!r}") from exc


def load_timeline(path: str | Path, approximate: bool = True) -> RecordingTimeline:
    with open(path) as fh:
        return timeline_from_dict(json.load(fh), approximate)


def save_timeline(t: RecordingTimeline, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(timeline_to_dict(t), fh, indent=1)
        fh.write("\n")


def load_annotated(path: str | Path) -> RecordingTimeline:
    """JSON annotation or RTTM (speaker segments only, words left empty)."""
    path = Path(path)
    if path.suffix.lower() == ".rttm":
        raise TimelineError("RTTM carries no words; use read_rttm for DER-only scoring")
    return load_timeline(path)


# --- RTTM --------------------------------------------------------------------


def rttm_lines(recording_id: str, intervals: dict[str, list[tuple[float, float]]]) -> list[str]:
    rows = sorted((on, off, spk) for spk, iv in intervals.items() for on, off in iv)
    return [
        f"SPEAKER {recording_id} 1 {on:.2f} {off - on:.2f} <NA> <NA> {spk} <NA> <NA>"
        for on, off, spk in rows
    ]


def write_rttm(fh: TextIO, obj: RecordingTimeline | GlobalDast) -> None:
    for line in rttm_lines(obj.recording_id, obj.speaker_intervals()):
        fh.write(line + "\n")


def read_rttm(fh: TextIO) -> dict[str, dict[str, list[tuple[float, float]]]]:
    """``{recording_id: {speaker: [(onset, offset), ...]}}``"""
    out: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for n, line in enumerate(fh, 1):
        parts = line.split()
        if not parts or parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise TimelineError(f"RTTM line {n}: expected at least 8 fields")
        rec, tbeg, tdur, spk = parts[1], float(parts[3]), float(parts[4]), parts[7]
        out.setdefault(rec, {}).setdefault(spk, []).append((tbeg, tbeg + tdur))
    return out


# --- transcripts -------------------------------------------------------------


def ctm_lines(dast: GlobalDast) -> list[str]:
    lines = []
    for u in dast.to_timeline().utterances:
        for w in u.words:
            lines.append(f"{dast.recording_id} 1 {w.onset:.2f} {w.offset - w.onset:.2f} {w.text} {u.speaker}")
    return lines


def mapping_lines(mapping: dict[tuple[int, int], int]) -> list[str]:
    return [f"{w} {t} {g}" for (w, t), g in sorted(mapping.items())]


def read_mapping(lines: Iterable[str]) -> dict[tuple[int, int], int]:
    out = {}
    for line in lines:
        if line.strip():
            w, t, g = (int(x) for x in line.split())
            out[(w, t)] = g
    return out
