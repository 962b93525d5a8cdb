"""Weakly supervised perspective classification and summarization for CQA threads."""
from .data import Answer, GoldAnnotation, PerspectiveSpan, Sentence, Thread, load_dataset, sentence_split
from .errors import BackendError, ConfigError, DataError, PipelineError, SchemaError
from .labels import ABSTAIN, LABELS, Perspective, Provenance

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN", "LABELS", "Answer", "BackendError", "ConfigError", "DataError", "GoldAnnotation",
    "Perspective", "PerspectiveSpan", "PipelineError", "Provenance", "SchemaError", "Sentence",
    "Thread", "load_dataset", "sentence_split",
]
