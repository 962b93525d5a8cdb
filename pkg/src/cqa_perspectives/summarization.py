"""Per-perspective two-stage summarization: extractive, then abstractive.

Backends receive the raw text together with the full GenerationParams; the
backend owns tokenization, so applying `prompt_prefix` and truncating to
`input_truncation` tokens happen on the backend side. Every call can be
recorded in an AuditLog for checking what each model was asked to do.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .data import PerspectiveSpan, Thread
from .errors import BackendError, ConfigError, DataError, PipelineError
from .labels import LABELS, Perspective

logger = logging.getLogger(__name__)

EXTRACTIVE = "EXTRACTIVE"
ABSTRACTIVE = "ABSTRACTIVE"
DEFAULT_EXTRACTIVE_MODEL = "facebook/bart-large-cnn"
DEFAULT_ABSTRACTIVE_MODEL = "google/pegasus-xsum"


@dataclass(frozen=True)
class GenerationParams:
    max_length: int
    min_length: int
    length_penalty: float
    num_beams: int
    input_truncation: int
    prompt_prefix: str = "summarize:"

    def __post_init__(self):
        if not 0 < self.min_length <= self.max_length:
            raise ConfigError(f"need 0 < min_length <= max_length, got {self.min_length}, {self.max_length}")
        if self.num_beams < 1:
            raise ConfigError("num_beams must be >= 1")
        if self.input_truncation <= 0:
            raise ConfigError("input_truncation must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


EXTRACTIVE_PARAMS = GenerationParams(max_length=150, min_length=50, length_penalty=2.0, num_beams=4,
                                     input_truncation=1024)
ABSTRACTIVE_PARAMS = GenerationParams(max_length=100, min_length=30, length_penalty=1.8, num_beams=6,
                                      input_truncation=512)


class SummarizerBackend(Protocol):
    model_id: str

    def generate(self, text: str, params: GenerationParams) -> str: ...


_WORD = re.compile(r"\S+")


def stub_summarize(text: str, params: GenerationParams) -> str:
    """Leading-token summary: the first min(max_length, n) whitespace tokens.

    Only the first `input_truncation` tokens are visible. The result is a
    slice of `text`, so inner whitespace is preserved, and the function is
    idempotent on text of at most `max_length` tokens.
    """
    words = [m for _, m in zip(range(params.input_truncation), _WORD.finditer(text))]
    if not words:
        return ""
    k = min(params.max_length, len(words))
    return text[words[0].start():words[k - 1].end()]


class StubSummarizer:
    """Offline backend built on :func:`stub_summarize`; ignores `prompt_prefix`."""

    def __init__(self, model_id: str = "stub-lead"):
        self.model_id = model_id
        self.received_tokens: list[int] = []

    def generate(self, text: str, params: GenerationParams) -> str:
        self.received_tokens.append(min(len(text.split()), params.input_truncation))
        return stub_summarize(text, params)


class HttpSummarizer:
    """Client for a seq2seq service.

    POSTs ``{"text", "params": {...}}`` and expects ``{"summary": "..."}``.
    """

    def __init__(self, endpoint: str, model_id: str, timeout: float = 300.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout
        self.session = session or requests.Session()

    def generate(self, text: str, params: GenerationParams) -> str:
        payload = {"text": text, "params": {**params.to_dict(), "model_id": self.model_id}}
        try:
            resp = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            summary = resp.json()["summary"]
        except (requests.RequestException, ValueError, KeyError) as e:
            raise BackendError(f"summarizer {self.endpoint} failed: {e}") from e
        if not isinstance(summary, str):
            raise BackendError(f"summarizer {self.endpoint} returned a non-string summary")
        return summary


@dataclass
class SummarizerBackendConfig:
    stage: str
    kind: str = "stub"
    model_id: str | None = None
    endpoint: str | None = None
    timeout: float = 300.0

    def build(self) -> SummarizerBackend:
        default = DEFAULT_EXTRACTIVE_MODEL if self.stage == EXTRACTIVE else DEFAULT_ABSTRACTIVE_MODEL
        if self.kind == "stub":
            return StubSummarizer(self.model_id or f"stub-lead-{self.stage.lower()}")
        if self.kind == "external-model":
            if not self.endpoint:
                raise ConfigError(f"{self.stage.lower()} backend needs an endpoint")
            return HttpSummarizer(self.endpoint, self.model_id or default, self.timeout)
        raise ConfigError(f"unknown summarizer backend kind {self.kind!r}")


@dataclass(frozen=True)
class BackendCall:
    job: str
    stage: str
    model_id: str
    params: dict
    input_text: str
    output_text: str


class AuditLog:
    """Append-only record of every summarizer call."""

    def __init__(self):
        self._calls: list[BackendCall] = []
        self._lock = threading.Lock()

    def append(self, call: BackendCall) -> None:
        with self._lock:
            self._calls.append(call)

    @property
    def calls(self) -> list[BackendCall]:
        with self._lock:
            return list(self._calls)

    def for_stage(self, stage: str) -> list[BackendCall]:
        return [c for c in self.calls if c.stage == stage]

    def write_jsonl(self, path: str | Path) -> None:
        order = {EXTRACTIVE: 0, ABSTRACTIVE: 1}
        calls = sorted(self.calls, key=lambda c: (c.job, order.get(c.stage, 2)))
        lines = [json.dumps(asdict(c), ensure_ascii=False, sort_keys=True) for c in calls]
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _run_stage(stage: str, text: str, backend: SummarizerBackend, params: GenerationParams,
               audit: AuditLog | None, job: str) -> str:
    if not text.strip():
        raise DataError(f"{stage.lower()} stage got empty input")
    out = backend.generate(text, params)
    if audit is not None:
        audit.append(BackendCall(job, stage, backend.model_id, params.to_dict(), text, out))
    return out


def extractive_stage(text: str, backend: SummarizerBackend, params: GenerationParams = EXTRACTIVE_PARAMS,
                     audit: AuditLog | None = None, job: str = "") -> str:
    return _run_stage(EXTRACTIVE, text, backend, params, audit, job)


def abstractive_stage(text: str, backend: SummarizerBackend, params: GenerationParams = ABSTRACTIVE_PARAMS,
                      audit: AuditLog | None = None, job: str = "") -> str:
    return _run_stage(ABSTRACTIVE, text, backend, params, audit, job)


def group_spans(thread: Thread, spans: Sequence[PerspectiveSpan], include_context: bool = True) -> dict[Perspective, str]:
    """Concatenated span text per label, in answer order then offset order."""
    order = {a.id: i for i, a in enumerate(thread.answers)}
    for s in spans:
        if s.answer_id not in order:
            raise DataError(f"span references unknown answer {s.answer_id!r} in thread {thread.id}")
    grouped: dict[Perspective, list[PerspectiveSpan]] = {}
    for s in sorted(spans, key=lambda s: (order[s.answer_id], s.start)):
        grouped.setdefault(s.label, []).append(s)
    out = {}
    for label in LABELS:
        if label in grouped:
            body = " ".join(thread.span_text(s) for s in grouped[label])
            out[label] = f"Question: {thread.question}\n{body}" if include_context else body
    return out


@dataclass(frozen=True)
class PerspectiveSummary:
    extractive: str
    final: str
    chain: tuple[str, ...] = ()


@dataclass
class SummarySet:
    thread_id: str
    summaries: dict[Perspective, PerspectiveSummary] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "thread_id": self.thread_id,
            "summaries": {
                label.value: {"extractive": s.extractive, "final": s.final}
                for label, s in self.summaries.items()
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SummarySet":
        return cls(obj["thread_id"], {
            Perspective(k): PerspectiveSummary(v["extractive"], v["final"])
            for k, v in obj["summaries"].items()
        })


@dataclass(frozen=True)
class SummarizeConfig:
    include_context: bool = True
    stage2_enabled: bool = True
    extractive: GenerationParams = EXTRACTIVE_PARAMS
    abstractive: GenerationParams = ABSTRACTIVE_PARAMS


class SummarizationError(PipelineError):
    """Names the failing thread and perspective; keeps the cause's exit code."""

    def __init__(self, message: str, exit_code: int = PipelineError.exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def summarize_thread(
    thread: Thread,
    spans: Sequence[PerspectiveSpan],
    extractive_backend: SummarizerBackend,
    abstractive_backend: SummarizerBackend | None = None,
    cfg: SummarizeConfig = SummarizeConfig(),
    audit: AuditLog | None = None,
) -> SummarySet:
    """Summarize each perspective present in `spans`.

    Without an abstractive backend, or with stage 2 disabled, the final
    summary is the extractive one.
    """
    out = SummarySet(thread.id)
    for label, text in group_spans(thread, spans, cfg.include_context).items():
        job = f"{thread.id}/{label.value}"
        try:
            extractive = extractive_stage(text, extractive_backend, cfg.extractive, audit, job)
            chain = (f"{EXTRACTIVE}:{extractive_backend.model_id}",)
            final = extractive
            if cfg.stage2_enabled and abstractive_backend is not None and extractive.strip():
                final = abstractive_stage(extractive, abstractive_backend, cfg.abstractive, audit, job)
                chain += (f"{ABSTRACTIVE}:{abstractive_backend.model_id}",)
        except PipelineError as e:
            raise SummarizationError(f"thread {thread.id}, {label.value}: {e}", e.exit_code) from e
        out.summaries[label] = PerspectiveSummary(extractive, final, chain)
    return out


def summarize_corpus(threads: Sequence[Thread], spans_by_thread: dict[str, list[PerspectiveSpan]],
                     extractive_backend: SummarizerBackend, abstractive_backend: SummarizerBackend | None = None,
                     cfg: SummarizeConfig = SummarizeConfig(), audit: AuditLog | None = None,
                     max_workers: int = 1) -> list[SummarySet]:
    def job(thread):
        return summarize_thread(thread, spans_by_thread.get(thread.id, []), extractive_backend,
                                abstractive_backend, cfg, audit)
    if max_workers <= 1:
        return [job(t) for t in threads]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(job, threads))


def dump_summaries(sets: Sequence[SummarySet]) -> str:
    return json.dumps([s.to_dict() for s in sets], ensure_ascii=False, indent=2) + "\n"


def load_summaries(path: str | Path) -> list[SummarySet]:
    try:
        return [SummarySet.from_dict(o) for o in json.loads(Path(path).read_text(encoding="utf-8"))]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"bad summaries file {path}: {e}") from e
