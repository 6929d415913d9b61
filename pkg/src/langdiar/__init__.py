"""Language and speaker diarization for code-switched audio."""

__version__ = "0.1.0"

from .annot import Annotation, Turn, parse_rttm, write_rttm
from .audio import AudioBuffer, FrameSet, frame_signal, read_wav, write_wav
from .changepoint import LANGUAGE_PARAMS, SPEAKER_PARAMS, ChangePointParams, detect_changes
from .diarize import ahc, changepoint_diarize, labels_to_annotation, uniform_diarize
from .metrics import der, eer, jer, optimal_mapping, score_corpus
from .score import CosineScorer, PldaModel, PldaScorer, plda_score, train_plda

__all__ = [
    "Annotation", "Turn", "parse_rttm", "write_rttm",
    "AudioBuffer", "FrameSet", "frame_signal", "read_wav", "write_wav",
    "LANGUAGE_PARAMS", "SPEAKER_PARAMS", "ChangePointParams", "detect_changes",
    "ahc", "changepoint_diarize", "labels_to_annotation", "uniform_diarize",
    "der", "eer", "jer", "optimal_mapping", "score_corpus",
    "CosineScorer", "PldaModel", "PldaScorer", "plda_score", "train_plda",
]
