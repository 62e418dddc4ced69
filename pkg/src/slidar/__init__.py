"""Sliding-window joint speaker diarization and multi-talker transcription toolkit."""

__version__ = "0.1.0"

from .clustering import CannotLinkSet, ClusteringConfig, constrained_ahc, derive_constraints, relabel
from .decoding import BeamConfig, BeamDecoder, LocalModel, OracleModel, OracleModelConfig, decode_window
from .embeddings import extract_local_embeddings, speaker_loss, time_average
from .metrics import cpwer, der
from .pipeline import PipelineConfig, make_oracle, run_pipeline
from .simulate import MeetingSpec, simulate
from .stitching import GlobalDast, stitch
from .timeline import RecordingTimeline, Utterance, Word
from .tokens import VocabConfig, build_sot_target, parse_sot
from .windowing import Window, WindowPlan, next_window

__all__ = [
    "BeamConfig", "BeamDecoder", "CannotLinkSet", "ClusteringConfig", "GlobalDast", "LocalModel",
    "MeetingSpec", "OracleModel", "OracleModelConfig", "PipelineConfig", "RecordingTimeline",
    "Utterance", "VocabConfig", "Window", "WindowPlan", "Word", "build_sot_target", "constrained_ahc",
    "cpwer", "decode_window", "der", "derive_constraints", "extract_local_embeddings", "make_oracle",
    "next_window", "parse_sot", "relabel", "run_pipeline", "simulate", "speaker_loss", "stitch",
    "time_average",
]
