"""Zero-shot fallback classification against per-label hypothesis sentences.

Two backends produce raw per-hypothesis scores that are softmaxed into a
distribution over the five labels: an HTTP client for an NLI entailment
service, and an offline one scoring cosine similarity between embeddings.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests
from scipy.special import softmax

from .embeddings import EmbeddingBackend, EmbeddingCache, embed_batch
from .errors import BackendError, ConfigError, SchemaError
from .labels import LABELS, N_LABELS, Perspective

logger = logging.getLogger(__name__)

DEFAULT_NLI_MODEL = "facebook/bart-large-mnli"
DEFAULT_TEMPERATURE = 0.1


@dataclass(frozen=True)
class LabelDescription:
    label: Perspective
    hypothesis: str


def parse_descriptions(items) -> list[LabelDescription]:
    if not isinstance(items, list):
        raise SchemaError("hypothesis file must contain a JSON array")
    out = []
    for k, obj in enumerate(items):
        if not isinstance(obj, dict) or not isinstance(obj.get("hypothesis"), str) or not obj["hypothesis"].strip():
            raise SchemaError(f"hypothesis #{k}: needs a non-empty 'hypothesis' string")
        try:
            out.append(LabelDescription(Perspective(obj.get("label")), obj["hypothesis"]))
        except ValueError:
            raise SchemaError(f"hypothesis #{k}: unknown label {obj.get('label')!r}") from None
    labels = [d.label for d in out]
    if sorted(labels, key=lambda p: p.code) != list(LABELS):
        raise SchemaError("need exactly one hypothesis per label")
    return out


def load_descriptions(path: str | Path | None = None) -> list[LabelDescription]:
    if path is None:
        raw = resources.files(__package__).joinpath("resources/hypotheses.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    return parse_descriptions(json.loads(raw))


class ZeroShotBackend(Protocol):
    def scores(self, text: str, hypotheses: Sequence[str]) -> Sequence[float]:
        """One unnormalized score per hypothesis, in the given order."""
        ...


def similarity_zsl(text_embedding, description_embeddings, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """softmax(cosine similarity / temperature), in description order."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sims = np.asarray(description_embeddings, dtype=float) @ np.asarray(text_embedding, dtype=float)
    if not np.all(np.isfinite(sims)):
        raise ValueError("non-finite similarity")
    return softmax(sims / temperature)


class SimilarityZeroShot:
    """Offline backend: cosine similarity between text and hypothesis embeddings."""

    def __init__(self, embedder: EmbeddingBackend, temperature: float = DEFAULT_TEMPERATURE,
                 cache: EmbeddingCache | None = None):
        if temperature <= 0:
            raise ConfigError("temperature must be positive")
        self.embedder = embedder
        self.temperature = temperature
        self.cache = cache

    def scores(self, text: str, hypotheses: Sequence[str]) -> np.ndarray:
        vecs = embed_batch([text, *hypotheses], self.embedder, self.cache)
        sims = vecs[1:] @ vecs[0]
        return sims / self.temperature


class HttpNLIZeroShot:
    """Client for an NLI service.

    POSTs ``{"text", "hypotheses": [...]}`` and expects
    ``{"entailment_scores": [...]}`` with one score per hypothesis.
    """

    def __init__(self, endpoint: str, model_id: str = DEFAULT_NLI_MODEL, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout
        self.session = session or requests.Session()

    def scores(self, text: str, hypotheses: Sequence[str]) -> list[float]:
        try:
            resp = self.session.post(self.endpoint, json={"text": text, "hypotheses": list(hypotheses)},
                                     timeout=self.timeout)
            resp.raise_for_status()
            out = [float(s) for s in resp.json()["entailment_scores"]]
        except (requests.RequestException, ValueError, KeyError, TypeError) as e:
            raise BackendError(f"NLI backend {self.endpoint} failed: {e}") from e
        if len(out) != len(hypotheses):
            raise BackendError(f"NLI backend returned {len(out)} scores for {len(hypotheses)} hypotheses")
        return out


def zsl_classify(text: str, descriptions: Sequence[LabelDescription], backend: ZeroShotBackend,
                 fallback: ZeroShotBackend | None = None) -> np.ndarray:
    """Distribution over the five labels, indexed by label code.

    If `backend` fails and a `fallback` is given, the fallback scores instead.
    """
    if len(descriptions) != N_LABELS or {d.label for d in descriptions} != set(LABELS):
        raise ValueError("need exactly one description per label")
    hypotheses = [d.hypothesis for d in descriptions]
    try:
        raw = backend.scores(text, hypotheses)
    except BackendError:
        if fallback is None:
            raise
        logger.warning("zero-shot backend failed, using fallback")
        raw = fallback.scores(text, hypotheses)
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (N_LABELS,) or not np.all(np.isfinite(raw)):
        raise BackendError(f"zero-shot backend returned invalid scores {raw!r}")
    probs = softmax(raw)
    out = np.zeros(N_LABELS)
    for d, p in zip(descriptions, probs):
        out[d.label.code] = p
    return out
