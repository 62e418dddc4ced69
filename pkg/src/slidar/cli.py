"""Command line entry point: simulate, plan, decode, cluster, run, score, tokens."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .clustering import CannotLinkSet, ClusteringConfig, constrained_ahc
from .decoding import BeamDecoder
from .embeddings import read_embeddings, write_embeddings
from .io import (
    ctm_lines,
    load_timeline,
    mapping_lines,
    read_rttm,
    save_timeline,
    timeline_to_dict,
    write_rttm,
)
from .metrics import EmptyReferenceError, cpwer, der
from .pipeline import ConfigError, PipelineConfig, PipelineError, make_oracle, merge_config, run_pipeline
from .report import plot_plan, plot_timeline, score_row, score_table
from .simulate import SimulationError, sample_centroids, simulate
from .stitching import GlobalDast, StitchError
from .timeline import TimelineError
from .tokens import CapacityError, GrammarError, SegmentationError, build_sot_target, from_text, parse_sot, to_text
from .windowing import Window

log = logging.getLogger("slidar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class DataError(RuntimeError):
    pass


# --- config ------------------------------------------------------------------


def load_config(paths: list[str], overrides: list[str]) -> PipelineConfig:
    merged: dict = {}
    for p in paths:
        try:
            with open(p) as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad config {p}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {p} must be a mapping")
        merged = _deep_merge(merged, doc)
    return PipelineConfig.from_dict(merge_config(merged, overrides))


def _deep_merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _centroids(args, timeline, config: PipelineConfig) -> dict:
    if getattr(args, "centroids", None):
        with open(args.centroids) as fh:
            return {k: tuple(v) for k, v in json.load(fh).items()}
    sim = config.simulation
    rng = np.random.default_rng([sim.seed, 2])
    return sample_centroids(list(timeline.speakers), sim.embedding_dim, sim.max_centroid_cosine, rng)


def _manifest(run_dir: Path, config: PipelineConfig, argv: list[str]) -> None:
    import matplotlib
    import scipy

    doc = {
        "command": argv,
        "config_sha256": config.digest(),
        "seed": {"simulation": config.simulation.seed, "oracle": config.oracle.seed},
        "versions": {
            "slidar": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
        },
        "config": config.to_dict(),
    }
    (run_dir / "manifest.json").write_text(json.dumps(doc, indent=1, default=str) + "\n")


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args, config: PipelineConfig) -> int:
    meeting = simulate(config.simulation)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_timeline(meeting.timeline, out / "timeline.json")
    (out / "centroids.json").write_text(json.dumps(meeting.centroids) + "\n")
    print(f"{meeting.timeline.recording_id}\t{len(meeting.timeline.utterances)} utterances\t"
          f"{len(meeting.timeline.speakers)} speakers\t{out}")
    return EXIT_OK


def _run(args, config):
    timeline = load_timeline(args.timeline)
    model, vocab = make_oracle(timeline, _centroids(args, timeline, config), config)
    return timeline, run_pipeline(timeline, model, config, vocab, reference=timeline)


def cmd_plan(args, config) -> int:
    _, res = _run(args, config)
    print("window\tonset\tlength\toverlap")
    for line in res.plan.lines():
        print(line.replace(" ", "\t"))
    return EXIT_OK


def cmd_decode(args, config) -> int:
    timeline = load_timeline(args.timeline)
    model, vocab = make_oracle(timeline, _centroids(args, timeline, config), config)
    length = min(args.length or config.window_length, timeline.duration - args.onset)
    if length <= 0:
        raise DataError("window onset beyond the recording")
    w = Window(0, args.onset, length)
    prompt = ()
    if config.prompt == "od":
        from .tokens import build_od_prompt

        prompt = build_od_prompt(timeline, w.onset, w.length, vocab)
    tokens = BeamDecoder(vocab, config.beam).decode(model, w, prompt)
    print(to_text(tokens))
    return EXIT_OK


def cmd_cluster(args, config) -> int:
    with open(args.embeddings, "rb") as fh:
        embs = read_embeddings(fh)
    if not embs:
        raise DataError("no embeddings to cluster")
    pairs = [
        (a.key, b.key) for i, a in enumerate(embs) for b in embs[i + 1:] if a.window == b.window
    ]
    res = constrained_ahc(embs, CannotLinkSet.of(pairs), config.clustering)
    if res.notice:
        print(f"# {res.notice}", file=sys.stderr)
    print("\n".join(mapping_lines(res.mapping)))
    return EXIT_OK


def cmd_run(args, config) -> int:
    if args.two_pass:
        raise NotImplementedError("two-pass decoding is not implemented")
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _manifest(run_dir, config, sys.argv)
    timeline, res = _run(args, config)
    save_timeline(timeline, run_dir / "timeline.json")
    (run_dir / "plan.txt").write_text("\n".join(res.plan.lines()) + "\n")
    tok_dir = run_dir / "tokens"
    tok_dir.mkdir(exist_ok=True)
    for r in res.results:
        (tok_dir / f"window{r.window.index:04d}.txt").write_text(to_text(r.tokens) + "\n")
    with open(run_dir / "embeddings.bin", "wb") as fh:
        write_embeddings(fh, [e for r in res.results for e in r.embeddings.values()])
    mapping = res.clustering.mapping if res.clustering else {}
    (run_dir / "mapping.txt").write_text("".join(line + "\n" for line in mapping_lines(mapping)))
    with open(run_dir / "hypothesis.rttm", "w") as fh:
        write_rttm(fh, res.dast)
    hyp_timeline = res.dast.to_timeline()
    save_timeline(hyp_timeline, run_dir / "transcript.json")
    (run_dir / "transcript.ctm").write_text("".join(line + "\n" for line in ctm_lines(res.dast)))
    row = score_row(timeline.recording_id, res.der, res.cpwer)
    table = score_table([row])
    (run_dir / "scores.tsv").write_text(table)
    report = {"recording": timeline.recording_id, "windows": len(res.plan)}
    if res.der:
        report["der"] = {k: getattr(res.der, k) for k in
                         ("speaker_confusion", "missed_speech", "false_alarm", "der", "scored_time")}
    if res.cpwer:
        report["cpwer"] = {"cpwer": res.cpwer.cpwer, "errors": res.cpwer.errors,
                           "reference_words": res.cpwer.reference_words,
                           "assignment": res.cpwer.assignment}
    (run_dir / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    if not args.no_figures:
        plot_timeline(run_dir / "timeline.png", timeline, res.dast, res.plan, timeline.recording_id)
        plot_plan(run_dir / "plan.png", res.plan, timeline.duration)
    sys.stdout.write(table)
    return EXIT_OK


def _load_hypothesis(path: str, recording_id: str, duration: float):
    if path.lower().endswith(".rttm"):
        with open(path) as fh:
            recs = read_rttm(fh)
        return recs.get(recording_id, {}), None
    hyp = load_timeline(path)
    return hyp, GlobalDast.from_timeline(hyp)


def cmd_score(args, config) -> int:
    rows = []
    refs = args.ref
    hyps = args.hyp
    if len(refs) != len(hyps):
        raise ConfigError("--ref and --hyp must be given the same number of times")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    docs = []
    for ref_path, hyp_path in zip(refs, hyps):
        ref = load_timeline(ref_path)
        hyp, dast = _load_hypothesis(hyp_path, ref.recording_id, ref.duration)
        try:
            d = der(ref, hyp, config.frame_step, ref.duration)
            c = cpwer(ref, hyp) if dast is not None else None
        except EmptyReferenceError as exc:
            raise DataError(f"{ref_path}: {exc}") from exc
        rows.append(score_row(ref.recording_id, d, c))
        docs.append({"recording": ref.recording_id, "der": d.der, "sc": d.speaker_confusion,
                     "ms": d.missed_speech, "fa": d.false_alarm,
                     "cpwer": None if c is None else c.cpwer})
        if out_dir and not args.no_figures:
            shown = dast if dast is not None else GlobalDast(ref.recording_id, ref.duration, ())
            plot_timeline(out_dir / f"{ref.recording_id}.png", ref, shown, None, ref.recording_id)
    table = score_table(rows, "," if args.format == "csv" else "\t")
    sys.stdout.write(table)
    if out_dir:
        (out_dir / f"scores.{args.format}").write_text(table)
        (out_dir / "report.json").write_text(json.dumps(docs, indent=1) + "\n")
    return EXIT_OK


def cmd_tokens(args, config) -> int:
    if args.action == "serialize":
        timeline = load_timeline(args.timeline)
        vocab = config.vocab.build({w.text for u in timeline.utterances for w in u.words})
        length = min(args.length or config.window_length, timeline.duration - args.onset)
        tokens, _ = build_sot_target(timeline, args.onset, length, vocab)
        print(to_text(tokens))
    else:
        text = args.text if args.text is not None else sys.stdin.read()
        vocab = config.vocab.build()
        ann = parse_sot(from_text(text), args.onset, vocab, args.length)
        doc = {
            "window_onset": ann.window_onset,
            "window_length": ann.window_length,
            "entries": [
                {"tag": e.local_tag, "onset": e.onset, "offset": e.offset, "words": list(e.words)}
                for e in ann.entries
            ],
        }
        print(json.dumps(doc, indent=1))
    return EXIT_OK


# --- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slidar", description=__doc__)
    p.add_argument("--config", action="append", default=[], help="YAML/JSON config; later files win")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. beam.beam_size=4")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample a synthetic meeting")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    def timeline_args(sp):
        sp.add_argument("--timeline", required=True, help="annotation JSON")
        sp.add_argument("--centroids", help="speaker centroid JSON (default: sampled from the config seed)")

    s = sub.add_parser("plan", help="decode with the oracle model and print the window plan")
    timeline_args(s)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("decode", help="decode one window with the oracle model")
    timeline_args(s)
    s.add_argument("--onset", type=float, default=0.0)
    s.add_argument("--length", type=float)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("cluster", help="cluster an embedding dump, print 'window tag global_id'")
    s.add_argument("--embeddings", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("run", help="full pipeline into a run directory")
    timeline_args(s)
    s.add_argument("--run-dir", required=True)
    s.add_argument("--two-pass", action="store_true", help="re-decode with estimated diarization (not implemented)")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="DER and cpWER of hypotheses against references")
    s.add_argument("--ref", action="append", required=True)
    s.add_argument("--hyp", action="append", required=True, help="transcript JSON or RTTM (DER only)")
    s.add_argument("--out-dir")
    s.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("tokens", help="serialize a window or parse a token string")
    s.add_argument("action", choices=("serialize", "parse"))
    s.add_argument("--timeline")
    s.add_argument("--text", help="token string to parse (default: stdin)")
    s.add_argument("--onset", type=float, default=0.0)
    s.add_argument("--length", type=float)
    s.set_defaults(func=cmd_tokens)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command == "tokens" and args.action == "serialize" and not args.timeline:
        parser.error("tokens serialize needs --timeline")
    try:
        config = load_config(args.config, args.overrides)
        return args.func(args, config)
    except (ConfigError, NotImplementedError) as exc:
        print(f"slidar: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TimelineError, PipelineError, StitchError, GrammarError, CapacityError,
            SegmentationError, SimulationError, EmptyReferenceError, OSError, ValueError, KeyError) as exc:
        print(f"slidar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
