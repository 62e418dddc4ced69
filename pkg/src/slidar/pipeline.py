"""End-to-end sliding-window decoding, clustering and stitching."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Protocol

from .clustering import ClusteringConfig, ClusteringResult, constrained_ahc, derive_constraints, relabel
from .decoding import BeamConfig, BeamDecoder, LocalModel, OracleModel, OracleModelConfig
from .embeddings import extract_local_embeddings
from .metrics import CpWerReport, DerReport, EmptyReferenceError, cpwer, der
from .simulate import MeetingSpec
from .stitching import GlobalDast, stitch
from .timeline import RecordingTimeline
from .tokens import Lexicon, PromptMode, Token, VocabConfig, build_od_prompt, parse_sot
from .windowing import LocalDastResult, WindowPlan, first_window, next_window

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, window: int, cause: BaseException):
        super().__init__(f"window {window}: {cause}")
        self.window = window


class Recording(Protocol):
    recording_id: str
    duration: float


@dataclass(frozen=True)
class VocabSettings:
    time_resolution: float = 0.1
    max_window: float = 20.0
    max_local_speakers: int = 5

    def build(self, words=()) -> VocabConfig:
        return VocabConfig(self.time_resolution, self.max_window, self.max_local_speakers, Lexicon.from_words(words))


@dataclass(frozen=True)
class OracleSettings:
    word_sub_prob: float = 0.0
    time_jitter_std: float = 0.0
    tag_swap_prob: float = 0.0
    embedding_noise_std: float = 0.0
    confidence: float = 0.999
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    vocab: VocabSettings = field(default_factory=VocabSettings)
    beam: BeamConfig = field(default_factory=BeamConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    simulation: MeetingSpec = field(default_factory=MeetingSpec)
    window_length: float = 20.0
    frame_step: float = 0.01
    prompt: str = "none"

    def __post_init__(self) -> None:
        if self.window_length > self.vocab.max_window + 1e-9:
            raise ConfigError("window_length exceeds the vocabulary's max_window")
        if not self.window_length > 0 or not self.frame_step > 0:
            raise ConfigError("window_length and frame_step must be positive")
        if self.prompt not in ("none", "od", "prev"):
            raise ConfigError(f"unknown prompt mode {self.prompt!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["simulation"].pop("lexicon", None)
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = copy.deepcopy(d or {})
        sections = {
            "vocab": VocabSettings,
            "beam": BeamConfig,
            "clustering": ClusteringConfig,
            "oracle": OracleSettings,
            "simulation": MeetingSpec,
        }
        kwargs: dict[str, Any] = {}
        try:
            for key, value in d.items():
                if key in sections:
                    if not isinstance(value, dict):
                        raise ConfigError(f"section {key!r} must be a mapping")
                    if key == "simulation" and "lexicon" in value:
                        value["lexicon"] = tuple(value["lexicon"])
                    kwargs[key] = sections[key](**value)
                elif key in {f.name for f in dataclasses.fields(cls)}:
                    kwargs[key] = value
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def merge_config(base: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as YAML scalars."""
    import yaml

    out = copy.deepcopy(base)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        path, raw = item.split("=", 1)
        node = out
        keys = path.strip().split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a scalar")
        node[keys[-1]] = yaml.safe_load(raw)
    return out


@dataclass
class PipelineResult:
    dast: GlobalDast
    plan: WindowPlan
    results: list[LocalDastResult]
    clustering: ClusteringResult | None
    der: DerReport | None = None
    cpwer: CpWerReport | None = None


def make_oracle(
    timeline: RecordingTimeline,
    centroids: dict,
    config: PipelineConfig,
    extra_words=(),
) -> tuple[OracleModel, VocabConfig]:
    """Oracle model plus a vocabulary covering the timeline and substitution lexicon."""
    words = {w.text for u in timeline.utterances for w in u.words} | set(extra_words)
    lexicon = tuple(sorted(words)) or None
    vocab = config.vocab.build(words)
    o = config.oracle
    cfg = OracleModelConfig(
        word_sub_prob=o.word_sub_prob,
        time_jitter_std=o.time_jitter_std,
        tag_swap_prob=o.tag_swap_prob,
        embedding_noise_std=o.embedding_noise_std,
        centroids=centroids,
        lexicon=lexicon,
        confidence=o.confidence,
        seed=o.seed,
    )
    return OracleModel(timeline, vocab, cfg, frame_step=config.frame_step), vocab


def _prompt_for(config: PipelineConfig, reference, window, vocab, prev_tokens) -> tuple[Token, ...]:
    if config.prompt == "od":
        if reference is None:
            raise ConfigError("<|OD|> prompting needs an oracle diarization reference")
        return build_od_prompt(reference, window.onset, window.length, vocab)
    if config.prompt == "prev":
        return (Token.prompt(PromptMode.PREV),) + tuple(prev_tokens[:-1])
    return ()


def run_pipeline(
    recording: Recording,
    model: LocalModel,
    config: PipelineConfig,
    vocab: VocabConfig,
    reference: RecordingTimeline | None = None,
) -> PipelineResult:
    """Plan and decode windows, embed and cluster local speakers, stitch, and score."""
    duration = recording.duration
    decoder = BeamDecoder(vocab, config.beam)
    plan = WindowPlan()
    results: list[LocalDastResult] = []
    w = first_window(duration, config.window_length)
    prev_tokens: tuple[Token, ...] = ()
    while w is not None:
        try:
            prompt = _prompt_for(config, reference, w, vocab, prev_tokens)
            tokens = decoder.decode(model, w, prompt)
            ann = parse_sot(tokens, w.onset, vocab, w.length)
            frames = model.frame_embeddings(w)
            embs = extract_local_embeddings(w.index, ann, frames, model.frame_step)
        except ConfigError:
            raise
        except Exception as exc:
            raise PipelineError(w.index, exc) from exc
        logger.debug("window %d [%.2f, %.2f): %d entries", w.index, w.onset, w.end, len(ann.entries))
        plan.append(w)
        results.append(LocalDastResult(w, tokens, ann, embs))
        prev_tokens = tokens
        w = next_window(w, ann, duration, window_length=config.window_length,
                        resolution=vocab.time_resolution)

    embeddings = [e for r in results for e in r.embeddings.values()]
    clus = None
    mapping: dict = {}
    if embeddings:
        constraints = derive_constraints(plan, results, config.clustering)
        clus = constrained_ahc(embeddings, constraints, config.clustering)
        mapping = clus.mapping
    annotations = relabel(results, mapping)
    dast = stitch(plan, annotations, recording.recording_id, duration)
    out = PipelineResult(dast, plan, results, clus)
    if reference is not None:
        try:
            out.der = der(reference, dast, config.frame_step, duration)
            out.cpwer = cpwer(reference, dast)
        except EmptyReferenceError:
            logger.info("reference has no speech; scoring skipped")
    return out
